//! Convex recovery problems solved by alternating-direction splitting:
//! missing-sample interpolation with graph and temporal regularization, and
//! sparse complex-symmetric GSO inference from voltage (and current) data.

mod inference;
mod interpolate;
mod mask;

pub use inference::{infer_gso, support_f1, InferenceConfig, InferenceResult};
pub use interpolate::{
    interpolate, interpolate_auto, interpolation_objective, InterpolationConfig, InterpolationResult, Regularization,
};
pub use mask::ObservationMask;

use faer::c64;

/// Radial shrinkage `z * max(0, 1 - tau / |z|)`, the proximal map of
/// `tau |z|` for complex `z`.
pub fn soft_threshold(z: c64, tau: f64) -> c64 {
    let r = z.norm();
    if r <= tau {
        c64::new(0.0, 0.0)
    } else {
        z * (1.0 - tau / r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrinkage_is_radial() {
        let z = c64::new(3.0, 4.0);
        let s = soft_threshold(z, 1.0);
        assert!((s - c64::new(2.4, 3.2)).norm() < 1e-15);
        assert_eq!(soft_threshold(z, 5.0), c64::new(0.0, 0.0));
    }
}
