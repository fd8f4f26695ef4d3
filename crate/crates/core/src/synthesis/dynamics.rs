use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::grid_model::{partition_indices, GridCase, PhasorKind, PhasorSeries};
use crate::linalg::{self, ZERO};
use crate::rng::{complex_normal, seeded};
use crate::spectral::SpectralOperator;

/// Polynomial-in-frequency parameterization `a_j(lambda) = sum_p c_p lambda^p`,
/// coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyCoeffs {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
}

/// Separate AR(2) coefficients for the real (log-magnitude) part of the
/// generator state; the shared complex coefficients then drive the
/// imaginary (angle) part only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeAr {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
}

/// GF-AR(2) model of the generator state on the reduced network.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorDynamics {
    pub a1: Vec<c64>,
    pub a2: Vec<c64>,
    pub chi: f64,
    pub poly: Option<PolyCoeffs>,
    /// Per-frequency std of the innovation, `E|w|^2 = sigma^2`.
    pub noise_scale: Vec<f64>,
    /// Constant per-frequency drive (mechanical input in the GFT domain).
    pub mech_input: Vec<c64>,
    pub magnitude: Option<MagnitudeAr>,
}

/// Per-bus AR(2) model of load currents around their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadDynamics {
    pub b1: Vec<c64>,
    pub b2: Vec<c64>,
    pub noise_scale: Vec<f64>,
    pub mean_current: Vec<c64>,
}

/// Roots of `z^2 - a1 z - a2`.
pub fn ar2_roots(a1: c64, a2: c64) -> (c64, c64) {
    let disc = (a1 * a1 + a2 * 4.0).sqrt();
    ((a1 + disc) * 0.5, (a1 - disc) * 0.5)
}

pub fn ar2_is_stable(a1: c64, a2: c64) -> bool {
    let (r1, r2) = ar2_roots(a1, a2);
    r1.norm() < 1.0 && r2.norm() < 1.0
}

fn unstable(a1: &[c64], a2: &[c64]) -> Vec<usize> {
    (0..a1.len()).filter(|&k| !ar2_is_stable(a1[k], a2[k])).collect()
}

impl GeneratorDynamics {
    /// Coefficients implied by the discretized swing equation,
    /// `a1 = (2 - chi) - lambda`, `a2 = chi - 1`.
    pub fn swing(red: &SpectralOperator, chi: f64, noise_std: f64, mech_input: Vec<c64>) -> Result<Self> {
        let n = red.dim();
        if mech_input.len() != n {
            return Err(GspError::Dimension {
                expected: n,
                got: mech_input.len(),
            });
        }
        Ok(GeneratorDynamics {
            a1: red.eigenvalues().iter().map(|l| c64::new(2.0 - chi, 0.0) - l).collect(),
            a2: vec![c64::new(chi - 1.0, 0.0); n],
            chi,
            poly: Some(PolyCoeffs {
                a1: vec![2.0 - chi, -1.0],
                a2: vec![chi - 1.0],
            }),
            noise_scale: vec![noise_std; n],
            mech_input,
            magnitude: None,
        })
    }

    /// The same `(a1, a2)` on every frequency.
    pub fn uniform(n: usize, a1: c64, a2: c64, noise_std: f64) -> Self {
        GeneratorDynamics {
            a1: vec![a1; n],
            a2: vec![a2; n],
            chi: 0.0,
            poly: None,
            noise_scale: vec![noise_std; n],
            mech_input: vec![ZERO; n],
            magnitude: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.a1.len()
    }

    /// Frequencies whose AR(2) poles are not strictly inside the unit disk.
    pub fn unstable_modes(&self) -> Vec<usize> {
        let mut bad = unstable(&self.a1, &self.a2);
        if let Some(m) = &self.magnitude {
            let a1: Vec<c64> = m.a1.iter().map(|&v| c64::new(v, 0.0)).collect();
            let a2: Vec<c64> = m.a2.iter().map(|&v| c64::new(v, 0.0)).collect();
            bad.extend(unstable(&a1, &a2));
            bad.sort_unstable();
            bad.dedup();
        }
        bad
    }

    /// One step of the per-frequency recursion without the innovation.
    pub fn predict(&self, k: usize, prev1: c64, prev2: c64) -> c64 {
        let drive = self.mech_input[k];
        match &self.magnitude {
            None => self.a1[k] * prev1 + self.a2[k] * prev2 + drive,
            Some(m) => c64::new(
                m.a1[k] * prev1.re + m.a2[k] * prev2.re + drive.re,
                self.a1[k].re * prev1.im + self.a2[k].re * prev2.im + drive.im,
            ),
        }
    }

    /// Fixed point `x = a1 x + a2 x + drive` of each frequency, zero where
    /// the recursion has a unit root.
    pub fn steady_state(&self) -> Vec<c64> {
        let ratio = |num: f64, gain: f64| if gain.abs() > 1e-12 { num / gain } else { 0.0 };
        (0..self.dim())
            .map(|k| {
                let d = self.mech_input[k];
                match &self.magnitude {
                    Some(m) => c64::new(
                        ratio(d.re, 1.0 - m.a1[k] - m.a2[k]),
                        ratio(d.im, 1.0 - self.a1[k].re - self.a2[k].re),
                    ),
                    None => {
                        let g = c64::new(1.0, 0.0) - self.a1[k] - self.a2[k];
                        if g.norm() > 1e-12 {
                            d / g
                        } else {
                            ZERO
                        }
                    }
                }
            })
            .collect()
    }
}

impl LoadDynamics {
    pub fn uniform(mean_current: Vec<c64>, b1: c64, b2: c64, noise_std: Vec<f64>) -> Self {
        let n = mean_current.len();
        LoadDynamics {
            b1: vec![b1; n],
            b2: vec![b2; n],
            noise_scale: noise_std,
            mean_current,
        }
    }

    pub fn dim(&self) -> usize {
        self.b1.len()
    }

    pub fn unstable_buses(&self) -> Vec<usize> {
        unstable(&self.b1, &self.b2)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(GspError::Dimension { expected, got });
    }
    Ok(())
}

/// Runs the GF-domain recursion for `frames` steps; frames 0 and 1 are
/// `x0` and `x1`. Bus ids are `0..N_G` and the rate is 1 until relabeled.
pub fn simulate_generators(
    dynamics: &GeneratorDynamics,
    red: &SpectralOperator,
    x0: &[c64],
    x1: &[c64],
    frames: usize,
    seed: u64,
) -> Result<PhasorSeries> {
    let n = red.dim();
    check_dim(n, dynamics.dim())?;
    check_dim(n, x0.len())?;
    check_dim(n, x1.len())?;
    if frames == 0 {
        return Err(GspError::invalid("frames", "T ≥ 1 violated"));
    }
    let unstable = dynamics.unstable_modes();
    if !unstable.is_empty() {
        log::warn!("unstable mode(s) at reduced frequencies {unstable:?}");
    }
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(frames * n);
    out.extend_from_slice(x0);
    if frames > 1 {
        out.extend_from_slice(x1);
    }
    let mut prev2 = red.gft(x0)?;
    let mut prev1 = red.gft(x1)?;
    for _ in 2..frames {
        let next: Vec<c64> = (0..n)
            .map(|k| dynamics.predict(k, prev1[k], prev2[k]) + complex_normal(&mut rng, dynamics.noise_scale[k]))
            .collect();
        out.extend(red.inverse_gft(&next)?);
        prev2 = std::mem::replace(&mut prev1, next);
    }
    PhasorSeries::new(out, (0..n as u64).collect(), 1.0, PhasorKind::GeneratorState)
}

/// `e = exp(diag(m)^{-1/2} x)`.
pub fn internal_voltages(x: &PhasorSeries, masses: &[f64]) -> Result<PhasorSeries> {
    check_dim(x.n_buses(), masses.len())?;
    let inv: Vec<f64> = masses.iter().map(|m| m.sqrt().recip()).collect();
    let values = x
        .frames()
        .flat_map(|f| f.iter().zip(&inv).map(|(z, s)| (z * *s).exp()).collect::<Vec<_>>())
        .collect();
    PhasorSeries::new(values, x.bus_ids().to_vec(), x.rate_hz(), PhasorKind::InternalVoltage)
}

/// `x = diag(m)^{1/2} ln e` on the principal branch.
pub fn generator_state(e: &PhasorSeries, masses: &[f64]) -> Result<PhasorSeries> {
    check_dim(e.n_buses(), masses.len())?;
    let sq: Vec<f64> = masses.iter().map(|m| m.sqrt()).collect();
    let values = e
        .frames()
        .flat_map(|f| f.iter().zip(&sq).map(|(z, s)| z.ln() * *s).collect::<Vec<_>>())
        .collect();
    PhasorSeries::new(values, e.bus_ids().to_vec(), e.rate_hz(), PhasorKind::GeneratorState)
}

/// Per-bus AR(2) recursion around the mean; frames 0 and 1 are `i0`, `i1`.
pub fn simulate_loads(dynamics: &LoadDynamics, i0: &[c64], i1: &[c64], frames: usize, seed: u64) -> Result<PhasorSeries> {
    let n = dynamics.dim();
    check_dim(n, i0.len())?;
    check_dim(n, i1.len())?;
    check_dim(n, dynamics.noise_scale.len())?;
    check_dim(n, dynamics.mean_current.len())?;
    if frames == 0 {
        return Err(GspError::invalid("frames", "T ≥ 1 violated"));
    }
    let unstable = dynamics.unstable_buses();
    if !unstable.is_empty() {
        log::warn!("unstable load recursion at buses {unstable:?}");
    }
    let mut rng = seeded(seed);
    let mu = &dynamics.mean_current;
    let mut out = Vec::with_capacity(frames * n);
    out.extend_from_slice(i0);
    if frames > 1 {
        out.extend_from_slice(i1);
    }
    let mut prev2 = i0.to_vec();
    let mut prev1 = i1.to_vec();
    for _ in 2..frames {
        let next: Vec<c64> = (0..n)
            .map(|b| {
                mu[b]
                    + dynamics.b1[b] * (prev1[b] - mu[b])
                    + dynamics.b2[b] * (prev2[b] - mu[b])
                    + complex_normal(&mut rng, dynamics.noise_scale[b])
            })
            .collect();
        out.extend_from_slice(&next);
        prev2 = std::mem::replace(&mut prev1, next);
    }
    PhasorSeries::new(out, (0..n as u64).collect(), 1.0, PhasorKind::Current)
}

/// Stacked excitation `[diag(y_g) e; i_l]` in bus order.
pub fn excitation(case: &GridCase, e: &[c64], i_load: &[c64]) -> Result<Vec<c64>> {
    let (gens, loads) = partition_indices(case);
    check_dim(gens.len(), e.len())?;
    check_dim(loads.len(), i_load.len())?;
    let mut out = vec![ZERO; case.n_buses()];
    for ((&g, y), ek) in gens.iter().zip(case.gen_admittance()).zip(e) {
        out[g] = y * ek;
    }
    for (&l, &il) in loads.iter().zip(i_load) {
        out[l] = il;
    }
    Ok(out)
}

/// `v_t = S^{-1} [diag(y_g) e_t; i_l,t] + eta_t`.
pub fn synthesize_voltages(
    op: &SpectralOperator,
    case: &GridCase,
    e: &PhasorSeries,
    loads: &PhasorSeries,
    noise_std: f64,
    seed: u64,
) -> Result<PhasorSeries> {
    check_dim(op.dim(), case.n_buses())?;
    if e.len() != loads.len() {
        return Err(GspError::Dimension {
            expected: e.len(),
            got: loads.len(),
        });
    }
    let mut rng = seeded(seed);
    let mut values = Vec::with_capacity(e.len() * case.n_buses());
    for (ef, lf) in e.frames().zip(loads.frames()) {
        let mut v = op.solve(&excitation(case, ef, lf)?)?;
        if noise_std > 0.0 {
            for z in v.iter_mut() {
                *z += complex_normal(&mut rng, noise_std);
            }
        }
        values.extend(v);
    }
    PhasorSeries::new(values, case.bus_ids(), e.rate_hz(), PhasorKind::Voltage)
}

/// Generator bus currents `diag(y_g)(e - v_G)`.
pub fn generator_currents(case: &GridCase, e: &[c64], v: &[c64]) -> Vec<c64> {
    let gens = case.generator_indices();
    case.gen_admittance()
        .iter()
        .zip(e)
        .zip(&gens)
        .map(|((y, ek), &g)| y * (ek - v[g]))
        .collect()
}

pub(crate) fn frame_gft(red: &SpectralOperator, series: &PhasorSeries) -> Result<Vec<Vec<c64>>> {
    check_dim(red.dim(), series.n_buses())?;
    Ok(series
        .frames()
        .map(|f| linalg::mat_tvec(red.basis(), f))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{J, ONE};
    use faer::Mat;

    fn triangle() -> SpectralOperator {
        let s = Mat::<f64>::from_fn(3, 3, |i, j| if i == j { 0.6 } else { -0.25 });
        SpectralOperator::from_real_symmetric(s.as_ref(), Default::default()).unwrap()
    }

    #[test]
    fn zero_dynamics_decay_to_zero() {
        let red = triangle();
        let dynm = GeneratorDynamics::uniform(3, ZERO, ZERO, 0.0);
        let x0 = vec![ONE; 3];
        let xs = simulate_generators(&dynm, &red, &x0, &x0, 6, 1).unwrap();
        for t in 2..6 {
            assert!(xs.frame(t).iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn random_walk_fixed_point() {
        let red = triangle();
        let dynm = GeneratorDynamics::uniform(3, ONE, ZERO, 0.0);
        let c = vec![c64::new(0.2, -0.1), c64::new(0.0, 0.3), c64::new(-0.4, 0.05)];
        let xs = simulate_generators(&dynm, &red, &c, &c, 20, 1).unwrap();
        for t in 0..20 {
            for (a, b) in xs.frame(t).iter().zip(&c) {
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn euler_and_flat_profile() {
        let x = PhasorSeries::new(vec![ZERO, J * std::f64::consts::FRAC_PI_2], vec![1, 2], 30.0, PhasorKind::GeneratorState)
            .unwrap();
        let e = internal_voltages(&x, &[1.0, 1.0]).unwrap();
        assert!((e.frame(0)[0] - ONE).norm() < 1e-15);
        assert!((e.frame(0)[1] - J).norm() < 1e-15);
    }

    #[test]
    fn load_fixed_points() {
        let mu = vec![c64::new(-0.5, 0.1), c64::new(-0.2, 0.02)];
        let still = LoadDynamics::uniform(mu.clone(), ZERO, ZERO, vec![0.0; 2]);
        let s = simulate_loads(&still, &[ZERO; 2], &[ONE; 2], 5, 0).unwrap();
        assert_eq!(s.frame(4), &mu[..]);
        let ar = LoadDynamics::uniform(mu.clone(), c64::new(1.5, 0.0), c64::new(-0.6, 0.0), vec![0.0; 2]);
        let s = simulate_loads(&ar, &mu, &mu, 50, 0).unwrap();
        assert_eq!(s.frame(49), &mu[..]);
    }

    #[test]
    fn stability_check() {
        assert!(ar2_is_stable(c64::new(1.5, 0.0), c64::new(-0.6, 0.0)));
        assert!(!ar2_is_stable(c64::new(1.0, 0.0), c64::new(0.1, 0.0)));
    }
}
