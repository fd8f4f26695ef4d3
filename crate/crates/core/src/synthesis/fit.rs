use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::grid_model::PhasorSeries;
use crate::linalg::{self, ONE, ZERO};
use crate::spectral::SpectralOperator;

use super::dynamics::{frame_gft, GeneratorDynamics, LoadDynamics, MagnitudeAr, PolyCoeffs};

const RANK_CUT: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Degree of the polynomial in the reduced eigenvalue fitted to each
    /// coefficient; `None` skips the polynomial fit.
    pub poly_degree: Option<usize>,
    /// Fit the real (log-magnitude) part with its own coefficients.
    pub separate_magnitude: bool,
    /// Damping ratio recorded in the fitted model.
    pub chi: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            poly_degree: Some(1),
            separate_magnitude: false,
            chi: 0.1,
        }
    }
}

/// Real AR(2) coefficients and intercept for one real sequence set.
/// Each entry of `parts` is one real-valued series sharing `(a1, a2)` but
/// with its own intercept.
fn fit_real_ar2(parts: &[Vec<f64>]) -> Option<(f64, f64, Vec<f64>, f64)> {
    let rows: usize = parts.iter().map(|p| p.len().saturating_sub(2)).sum();
    let cols = 2 + parts.len();
    if rows < cols {
        return None;
    }
    let mut a = Mat::<f64>::zeros(rows, cols);
    let mut b = Vec::with_capacity(rows);
    let mut r = 0;
    for (pi, p) in parts.iter().enumerate() {
        for t in 2..p.len() {
            a[(r, 0)] = p[t - 1];
            a[(r, 1)] = p[t - 2];
            a[(r, 2 + pi)] = 1.0;
            b.push(p[t]);
            r += 1;
        }
    }
    let sol = linalg::lstsq_real(a.as_ref(), &b, RANK_CUT)?;
    let mut sq = 0.0;
    for (i, bi) in b.iter().enumerate() {
        let pred: f64 = (0..cols).map(|c| a[(i, c)] * sol[c]).sum();
        sq += (bi - pred).powi(2);
    }
    Some((sol[0], sol[1], sol[2..].to_vec(), sq / (rows / parts.len()) as f64))
}

/// Per-frequency least-squares GF-AR(2) fit of a generator-state series.
///
/// Coefficients are real and shared by the real and imaginary parts (unless
/// `separate_magnitude`); each frequency also gets a complex intercept,
/// which becomes the drive term.
pub fn fit_gfar2(x: &PhasorSeries, red: &SpectralOperator, opts: &FitOptions) -> Result<GeneratorDynamics> {
    if x.len() < 10 {
        return Err(GspError::invalid("series", format!("need T ≥ 10 frames, got {}", x.len())));
    }
    let xt = frame_gft(red, x)?;
    let n = red.dim();
    let mut a1 = vec![ONE; n];
    let mut a2 = vec![ZERO; n];
    let mut drive = vec![ZERO; n];
    let mut noise = vec![0.0; n];
    let mut mag_a1 = vec![1.0; n];
    let mut mag_a2 = vec![0.0; n];
    let mut fallback = Vec::new();
    for k in 0..n {
        let re: Vec<f64> = xt.iter().map(|f| f[k].re).collect();
        let im: Vec<f64> = xt.iter().map(|f| f[k].im).collect();
        if opts.separate_magnitude {
            match (fit_real_ar2(std::slice::from_ref(&im)), fit_real_ar2(std::slice::from_ref(&re))) {
                (Some((ia1, ia2, ic, ivar)), Some((ra1, ra2, rc, rvar))) => {
                    a1[k] = c64::new(ia1, 0.0);
                    a2[k] = c64::new(ia2, 0.0);
                    mag_a1[k] = ra1;
                    mag_a2[k] = ra2;
                    drive[k] = c64::new(rc[0], ic[0]);
                    noise[k] = (ivar + rvar).sqrt();
                }
                _ => fallback.push(k),
            }
        } else {
            match fit_real_ar2(&[re, im]) {
                Some((c1, c2, c, var)) => {
                    a1[k] = c64::new(c1, 0.0);
                    a2[k] = c64::new(c2, 0.0);
                    drive[k] = c64::new(c[0], c[1]);
                    noise[k] = var.sqrt();
                }
                None => fallback.push(k),
            }
        }
    }
    if !fallback.is_empty() {
        log::warn!("rank-deficient GF-AR(2) regression at frequencies {fallback:?}; using (1, 0)");
    }
    let poly = match opts.poly_degree {
        Some(deg) if n > deg => {
            let lam: Vec<f64> = red.eigenvalues().iter().map(|l| l.re).collect();
            let c1 = poly_fit(&lam, &a1.iter().map(|a| a.re).collect::<Vec<_>>(), deg);
            let c2 = poly_fit(&lam, &a2.iter().map(|a| a.re).collect::<Vec<_>>(), deg);
            c1.zip(c2).map(|(a1, a2)| PolyCoeffs { a1, a2 })
        }
        Some(deg) => {
            log::warn!("{n} reduced frequencies cannot determine a degree-{deg} polynomial; skipped");
            None
        }
        None => None,
    };
    Ok(GeneratorDynamics {
        a1,
        a2,
        chi: opts.chi,
        poly,
        noise_scale: noise,
        mech_input: drive,
        magnitude: opts.separate_magnitude.then_some(MagnitudeAr { a1: mag_a1, a2: mag_a2 }),
    })
}

/// Least-squares polynomial in ascending powers.
pub fn poly_fit(x: &[f64], y: &[f64], degree: usize) -> Option<Vec<f64>> {
    let a = Mat::<f64>::from_fn(x.len(), degree + 1, |i, p| x[i].powi(p as i32));
    linalg::lstsq_real(a.as_ref(), y, RANK_CUT)
}

/// Per-bus complex AR(2) fit with intercept; the mean current is
/// `c / (1 - b1 - b2)`.
pub fn fit_ar2_loads(series: &PhasorSeries) -> Result<LoadDynamics> {
    let t = series.len();
    if t < 10 {
        return Err(GspError::invalid("series", format!("need T ≥ 10 frames, got {t}")));
    }
    let n = series.n_buses();
    let mut out = LoadDynamics {
        b1: vec![ONE; n],
        b2: vec![ZERO; n],
        noise_scale: vec![0.0; n],
        mean_current: vec![ZERO; n],
    };
    let mut fallback = Vec::new();
    for b in 0..n {
        let y = series.column(b);
        let mean = y.iter().sum::<c64>() / t as f64;
        let a = Mat::<c64>::from_fn(t - 2, 3, |r, c| match c {
            0 => y[r + 1],
            1 => y[r],
            _ => ONE,
        });
        let rhs = &y[2..];
        match linalg::lstsq(a.as_ref(), rhs, RANK_CUT) {
            Some(sol) => {
                let pred = linalg::mat_vec(a.as_ref(), &sol);
                let sq: f64 = pred.iter().zip(rhs).map(|(p, v)| (p - v).norm_sqr()).sum();
                out.b1[b] = sol[0];
                out.b2[b] = sol[1];
                out.noise_scale[b] = (sq / (t - 2) as f64).sqrt();
                let gain = ONE - sol[0] - sol[1];
                out.mean_current[b] = if gain.norm() > 1e-8 { sol[2] / gain } else { mean };
            }
            None => {
                fallback.push(b);
                out.mean_current[b] = mean;
            }
        }
    }
    if !fallback.is_empty() {
        log::warn!("rank-deficient load AR(2) regression at buses {fallback:?}; using (1, 0)");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::PhasorKind;

    #[test]
    fn noise_free_ar_recovered_exactly() {
        let (b1, b2) = (c64::new(1.2, 0.1), c64::new(-0.5, 0.05));
        let mu = c64::new(-0.3, 0.2);
        let mut y = vec![c64::new(0.4, -0.1), c64::new(-0.2, 0.3)];
        for t in 2..40 {
            let v = mu + b1 * (y[t - 1] - mu) + b2 * (y[t - 2] - mu);
            y.push(v);
        }
        let s = PhasorSeries::new(y, vec![1], 1.0, PhasorKind::Current).unwrap();
        let fit = fit_ar2_loads(&s).unwrap();
        assert!((fit.b1[0] - b1).norm() < 1e-8);
        assert!((fit.b2[0] - b2).norm() < 1e-8);
        assert!((fit.mean_current[0] - mu).norm() < 1e-8);
    }

    #[test]
    fn constant_series_falls_back() {
        let s = PhasorSeries::new(vec![c64::new(0.5, 0.5); 20], vec![1], 1.0, PhasorKind::Current).unwrap();
        let fit = fit_ar2_loads(&s).unwrap();
        assert_eq!((fit.b1[0], fit.b2[0]), (ONE, ZERO));
        assert_eq!(fit.mean_current[0], c64::new(0.5, 0.5));
    }

    #[test]
    fn short_series_rejected() {
        let s = PhasorSeries::new(vec![ONE; 5], vec![1], 1.0, PhasorKind::Current).unwrap();
        assert!(fit_ar2_loads(&s).is_err());
    }

    #[test]
    fn poly_fit_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.9 - v).collect();
        let c = poly_fit(&x, &y, 1).unwrap();
        assert!((c[0] - 1.9).abs() < 1e-12 && (c[1] + 1.0).abs() < 1e-12);
    }
}
