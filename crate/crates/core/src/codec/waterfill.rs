use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};

/// Reverse water-filling allocation over independent components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub theta: f64,
    /// `D_i = min(theta, sigma_i^2)`.
    pub distortions: Vec<f64>,
    /// `max(0, log2(sigma_i^2 / D_i) / 2)` bits.
    pub rates: Vec<f64>,
}

/// Allocation implied by a given water level.
pub fn allocation_at(variances: &[f64], theta: f64) -> Allocation {
    let distortions: Vec<f64> = variances.iter().map(|&s| s.min(theta)).collect();
    let rates = variances
        .iter()
        .zip(&distortions)
        .map(|(&s, &d)| if d > 0.0 && s > d { 0.5 * (s / d).log2() } else { 0.0 })
        .collect();
    Allocation {
        theta,
        distortions,
        rates,
    }
}

/// Water level `theta` with `sum_i min(theta, sigma_i^2) = d_target`, found by
/// bisection to 1e-12 relative width.
pub fn reverse_waterfill(variances: &[f64], d_target: f64) -> Result<Allocation> {
    if variances.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(GspError::invalid("variances", "must be finite and nonnegative"));
    }
    let total: f64 = variances.iter().sum();
    if !(d_target > 0.0 && d_target <= total * (1.0 + 1e-12)) {
        return Err(GspError::invalid(
            "distortion target",
            format!("{d_target:e} outside (0, {total:e}]"),
        ));
    }
    let top = variances.iter().copied().fold(0.0, f64::max);
    if d_target >= total {
        return Ok(allocation_at(variances, top));
    }
    let level = |theta: f64| variances.iter().map(|&s| s.min(theta)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, top);
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if level(mid) < d_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(allocation_at(variances, 0.5 * (lo + hi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_matches_target() {
        let var = [4.0, 1.0, 0.25, 0.01];
        let a = reverse_waterfill(&var, 1.0).unwrap();
        let sum: f64 = a.distortions.iter().sum();
        assert!((sum - 1.0).abs() < 1e-11);
        assert!((a.theta - (1.0 - 0.26) / 2.0).abs() < 1e-11);
    }

    #[test]
    fn rejects_out_of_range_target() {
        assert!(reverse_waterfill(&[1.0, 2.0], 3.5).is_err());
        assert!(reverse_waterfill(&[1.0, 2.0], 0.0).is_err());
    }
}
