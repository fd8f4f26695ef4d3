//! False-data-injection analysis on PMU voltage/current measurements:
//! stealthy attack construction, detection by the energy a measurement
//! carries outside the low-pass measurement subspace, and sparse isolation of
//! the compromised buses.
//!
//! The statistic `d(z) = ||Pi z||^2` with `Pi = I - B B^+`,
//! `B = H U_K diag(1/lambda_K)`, reacts to any sudden high graph-frequency
//! content, so physical events (faults, topology changes) show up through the
//! same code path as attacks.

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::grid_model::GridCase;
use crate::linalg::{self, ZERO};
use crate::rng::{complex_normal, complex_normal_vec, seeded};
use crate::spectral::SpectralOperator;

/// Relative singular value cutoff for the range of `H H_k(S)`.
pub const RANGE_CUTOFF: f64 = 1e-10;

/// Measurement model `z = [i_A; v_A] = H v + eps` with
/// `H = [[Y_AA, Y_AU], [I, 0]]` written over the full bus ordering.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    h: Mat<c64>,
    available: Vec<usize>,
    unavailable: Vec<usize>,
    k: usize,
    /// Orthonormal basis of the column space of `H H_k(S)`.
    basis: Mat<c64>,
}

fn sorted_unique(set: &[usize], n: usize, what: &str) -> Result<Vec<usize>> {
    let mut v = set.to_vec();
    v.sort_unstable();
    v.dedup();
    if let Some(&bad) = v.iter().find(|&&i| i >= n) {
        return Err(GspError::invalid(what, format!("bus index {bad} out of range (N = {n})")));
    }
    Ok(v)
}

/// Assemble `H` and the projector for the available buses `available` and
/// low-pass order `k`. `op` must be the GSO of `case`.
pub fn build_measurement_model(case: &GridCase, op: &SpectralOperator, available: &[usize], k: usize) -> Result<MeasurementModel> {
    let n = case.n_buses();
    if op.dim() != n {
        return Err(GspError::Dimension { expected: n, got: op.dim() });
    }
    let a = sorted_unique(available, n, "available set")?;
    if a.is_empty() {
        return Err(GspError::invalid("available set", "must be nonempty"));
    }
    if k == 0 || k > n {
        return Err(GspError::invalid("k", format!("low-pass order {k} outside [1, {n}]")));
    }
    let mut is_a = vec![false; n];
    for &i in &a {
        is_a[i] = true;
    }
    let u: Vec<usize> = (0..n).filter(|&i| !is_a[i]).collect();

    let y = case.network_matrix();
    let na = a.len();
    let mut h = Mat::<c64>::zeros(2 * na, n);
    for (r, &i) in a.iter().enumerate() {
        for j in 0..n {
            h[(r, j)] = y[(i, j)];
        }
        h[(na + r, i)] = c64::new(1.0, 0.0);
    }

    let lam = op.eigenvalues();
    if lam[..k].iter().any(|l| l.norm() == 0.0) {
        return Err(GspError::Singular("zero eigenvalue inside the low-pass band".into()));
    }
    let basis_k = op.basis().subcols(0, k);
    let mut filt = Mat::<c64>::zeros(n, k);
    for j in 0..k {
        let g = lam[j].inv();
        for i in 0..n {
            filt[(i, j)] = basis_k[(i, j)] * g;
        }
    }
    let hk = &h * &filt;
    let basis = linalg::range_basis(hk.as_ref(), RANGE_CUTOFF)?;
    Ok(MeasurementModel {
        h,
        available: a,
        unavailable: u,
        k,
        basis,
    })
}

impl MeasurementModel {
    pub fn h(&self) -> MatRef<'_, c64> {
        self.h.as_ref()
    }

    pub fn available(&self) -> &[usize] {
        &self.available
    }

    pub fn unavailable(&self) -> &[usize] {
        &self.unavailable
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_buses(&self) -> usize {
        self.h.ncols()
    }

    /// Length of a measurement vector, `2 |A|`.
    pub fn measurement_len(&self) -> usize {
        self.h.nrows()
    }

    /// Orthonormal basis of the column space of `H H_k(S)`.
    pub fn subspace(&self) -> MatRef<'_, c64> {
        self.basis.as_ref()
    }

    /// The dense projector `I - Q Q^H`.
    pub fn projector(&self) -> Mat<c64> {
        let m = self.measurement_len();
        let q = self.basis.as_ref();
        let mut p = linalg::identity(m);
        p -= q * q.adjoint();
        p
    }

    /// Noise-free measurement `H v` of a full voltage vector.
    pub fn measure(&self, v: &[c64]) -> Result<Vec<c64>> {
        if v.len() != self.n_buses() {
            return Err(GspError::Dimension {
                expected: self.n_buses(),
                got: v.len(),
            });
        }
        Ok(linalg::mat_vec(self.h.as_ref(), v))
    }

    /// `Pi z`.
    pub fn project(&self, z: &[c64]) -> Result<Vec<c64>> {
        if z.len() != self.measurement_len() {
            return Err(GspError::Dimension {
                expected: self.measurement_len(),
                got: z.len(),
            });
        }
        let coef = linalg::mat_hvec(self.basis.as_ref(), z);
        let inside = linalg::mat_vec(self.basis.as_ref(), &coef);
        Ok(z.iter().zip(&inside).map(|(a, b)| a - b).collect())
    }

    /// Detection statistic `d(z) = ||Pi z||^2`.
    pub fn statistic(&self, z: &[c64]) -> Result<f64> {
        Ok(linalg::norm_sq(&self.project(z)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    NoAttack,
    Attack,
}

/// Statistic and decision `H1 iff d > tau`. At `tau = 0` any numerically
/// nonzero residual energy is flagged, so `tau` should come from
/// [`calibrate_threshold`] on attack-free data.
pub fn detect(z: &[c64], model: &MeasurementModel, tau: f64) -> Result<(f64, Decision)> {
    let d = model.statistic(z)?;
    let decision = if d > tau { Decision::Attack } else { Decision::NoAttack };
    Ok((d, decision))
}

/// Empirical `quantile` of attack-free statistics (linear interpolation).
pub fn calibrate_threshold(h0_statistics: &[f64], quantile: f64) -> Result<f64> {
    if h0_statistics.is_empty() {
        return Err(GspError::invalid("calibration", "no statistics"));
    }
    if !(0.0..=1.0).contains(&quantile) {
        return Err(GspError::invalid("quantile", format!("{quantile} outside [0, 1]")));
    }
    let mut s = h0_statistics.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let pos = quantile * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    Ok(s[lo] * (1.0 - w) + s[hi] * w)
}

pub const DEFAULT_THRESHOLD_QUANTILE: f64 = 0.99;

/// A perturbation of the compromised buses that leaves every honest
/// measured current unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackScenario {
    pub compromised: Vec<usize>,
    pub honest: Vec<usize>,
    /// Full-length perturbation, zero outside `compromised`.
    pub delta_v: Vec<c64>,
    pub scale: f64,
}

impl AttackScenario {
    /// `||Y_PC dv_C||`.
    pub fn honest_current_change(&self, case: &GridCase) -> f64 {
        let y = case.network_matrix();
        let mut acc = 0.0;
        for &p in &self.honest {
            let mut s = ZERO;
            for &c in &self.compromised {
                s += y[(p, c)] * self.delta_v[c];
            }
            acc += s.norm_sqr();
        }
        acc.sqrt()
    }

    /// Buses the perturbation actually moves. The null-space constraint can
    /// pin some compromised buses to zero, so this may be smaller than
    /// `compromised`.
    pub fn support(&self) -> Vec<usize> {
        estimated_support(&self.delta_v, 1e-8)
    }

    /// Measurement perturbation `H dv`.
    pub fn measurement_shift(&self, model: &MeasurementModel) -> Result<Vec<c64>> {
        model.measure(&self.delta_v)
    }
}

/// Draw `dv_C` uniformly on the sphere of radius `scale` inside the null
/// space of `Y_PC`, where `P = A \ C`.
pub fn craft_attack(case: &GridCase, available: &[usize], compromised: &[usize], scale: f64, seed: u64) -> Result<AttackScenario> {
    let n = case.n_buses();
    let a = sorted_unique(available, n, "available set")?;
    let c = sorted_unique(compromised, n, "compromised set")?;
    if c.is_empty() {
        return Err(GspError::invalid("compromised set", "must be nonempty"));
    }
    if let Some(&bad) = c.iter().find(|i| a.binary_search(i).is_err()) {
        return Err(GspError::invalid("compromised set", format!("bus index {bad} is not measured")));
    }
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(GspError::invalid("scale", "must be finite and nonnegative"));
    }
    let p: Vec<usize> = a.iter().copied().filter(|i| c.binary_search(i).is_err()).collect();
    let y = case.network_matrix();
    let ypc = linalg::submatrix(y.as_ref(), &p, &c);
    let null = linalg::null_space(ypc.as_ref(), RANGE_CUTOFF)?;
    if null.ncols() == 0 {
        return Err(GspError::NoUnobservableAttack);
    }
    let mut rng = seeded(seed);
    let coef = complex_normal_vec(&mut rng, null.ncols(), 1.0);
    let mut dvc = linalg::mat_vec(null.as_ref(), &coef);
    let nrm = linalg::norm(&dvc);
    for x in &mut dvc {
        *x *= scale / nrm;
    }
    let mut delta_v = vec![ZERO; n];
    for (&i, &x) in c.iter().zip(&dvc) {
        delta_v[i] = x;
    }
    Ok(AttackScenario {
        compromised: c,
        honest: p,
        delta_v,
        scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsolationConfig {
    pub max_iter: usize,
    /// Stop when `||x_{k+1} - x_k|| <= tol * ||x_{k+1}||`.
    pub tol: f64,
}

impl Default for IsolationConfig {
    fn default() -> Self {
        IsolationConfig {
            max_iter: 200_000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationResult {
    /// Estimated perturbation over all buses; unmeasured buses are zero.
    pub delta_v: Vec<c64>,
    pub iterations: usize,
    /// `||Pi (z - H dv)||^2` at the estimate.
    pub objective: f64,
}

/// Euclidean projection onto `{x : sum |x_i| <= radius}` for complex `x`:
/// magnitudes go to the simplex-type ball, phases are kept.
pub fn project_l1_ball(x: &mut [c64], radius: f64) {
    let total: f64 = x.iter().map(|v| v.norm()).sum();
    if total <= radius {
        return;
    }
    if radius <= 0.0 {
        x.iter_mut().for_each(|v| *v = ZERO);
        return;
    }
    let mut mags: Vec<f64> = x.iter().map(|v| v.norm()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - radius) / (j + 1) as f64;
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    for v in x.iter_mut() {
        *v = crate::recovery::soft_threshold(*v, theta);
    }
}

/// Sparse estimate of the injected perturbation:
/// `min ||Pi (z - H dv)||^2  s.t.  ||dv||_1 <= mu`, with `dv` restricted to the
/// measured buses. Solved by accelerated projected gradient with adaptive
/// restart.
pub fn isolate(z: &[c64], model: &MeasurementModel, mu: f64, cfg: &IsolationConfig) -> Result<IsolationResult> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(GspError::invalid("mu", "l1 budget must be positive"));
    }
    let r = model.project(z)?;
    let a = model.available();
    let ha = linalg::columns(model.h(), a);
    let q = model.subspace();
    let qh_ha = q.adjoint() * &ha;
    let b = &ha - q * &qh_ha;
    let gram = b.adjoint() * &b;
    let btr = linalg::mat_hvec(b.as_ref(), &r);
    let lip = 2.0 * linalg::singular_values(b.as_ref())?.first().copied().unwrap_or(0.0).powi(2);

    let na = a.len();
    let mut x = vec![ZERO; na];
    let mut iterations = 0;
    if lip > 0.0 {
        let step = 1.0 / lip;
        let mut yk = x.clone();
        let mut t = 1.0f64;
        let mut converged = false;
        for it in 1..=cfg.max_iter {
            iterations = it;
            let gy = linalg::mat_vec(gram.as_ref(), &yk);
            let mut xn: Vec<c64> = yk
                .iter()
                .zip(gy.iter().zip(&btr))
                .map(|(&yv, (&g, &c))| yv - (g - c) * (2.0 * step))
                .collect();
            project_l1_ball(&mut xn, mu);
            let diff: Vec<c64> = xn.iter().zip(&x).map(|(p, q)| p - q).collect();
            let dn = linalg::norm(&diff);
            let restart = yk
                .iter()
                .zip(&xn)
                .zip(&x)
                .map(|((yv, xv), xo)| ((yv - xv).conj() * (xv - xo)).re)
                .sum::<f64>()
                > 0.0;
            let tn = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
            let mom = if restart { 0.0 } else { (t - 1.0) / tn };
            yk = xn.iter().zip(&diff).map(|(&xv, &d)| xv + d * mom).collect();
            t = tn;
            x = xn;
            if dn <= cfg.tol * linalg::norm(&x) || dn == 0.0 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(GspError::NotConverged {
                iterations,
                primal: 0.0,
                dual: 0.0,
            });
        }
    }
    let fit = linalg::mat_vec(b.as_ref(), &x);
    let objective = r.iter().zip(&fit).map(|(p, q)| (p - q).norm_sqr()).sum();
    let mut delta_v = vec![ZERO; model.n_buses()];
    for (&i, &v) in a.iter().zip(&x) {
        delta_v[i] = v;
    }
    Ok(IsolationResult {
        delta_v,
        iterations,
        objective,
    })
}

/// Buses whose estimated magnitude exceeds `rel_threshold * max |dv|`.
pub fn estimated_support(delta_v: &[c64], rel_threshold: f64) -> Vec<usize> {
    let peak = delta_v.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Vec::new();
    }
    (0..delta_v.len()).filter(|&i| delta_v[i].norm() > rel_threshold * peak).collect()
}

/// F1 score of an estimated support against the true one.
pub fn set_f1(estimate: &[usize], truth: &[usize]) -> f64 {
    if estimate.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let tp = estimate.iter().filter(|i| truth.contains(i)).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / estimate.len() as f64;
    let recall = tp / truth.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false alarm, detection)` pairs from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
}

/// Monte Carlo ROC. Each trial draws a clean state from `states` and an
/// attack from `attacks` (cyclically), and adds complex Gaussian noise with
/// standard deviation `noise_rel` times the RMS of the clean measurement.
/// H0 and H1 use independent noise.
pub fn roc_curve(
    model: &MeasurementModel,
    states: &[Vec<c64>],
    attacks: &[AttackScenario],
    noise_rel: f64,
    trials: usize,
    seed: u64,
) -> Result<RocCurve> {
    if trials == 0 || states.is_empty() || attacks.is_empty() {
        return Err(GspError::invalid("roc", "need trials >= 1, at least one state and one attack"));
    }
    let clean: Vec<Vec<c64>> = states.iter().map(|v| model.measure(v)).collect::<Result<_>>()?;
    let shifts: Vec<Vec<c64>> = attacks.iter().map(|a| a.measurement_shift(model)).collect::<Result<_>>()?;
    let mut rng = seeded(seed);
    let noisy = |z: &[c64], rng: &mut crate::rng::SeededRng| -> Vec<c64> {
        let rms = (linalg::norm_sq(z) / z.len() as f64).sqrt();
        z.iter().map(|&x| x + complex_normal(rng, noise_rel * rms)).collect()
    };
    let mut h0 = Vec::with_capacity(trials);
    let mut h1 = Vec::with_capacity(trials);
    for t in 0..trials {
        let z = &clean[t % clean.len()];
        h0.push(model.statistic(&noisy(z, &mut rng))?);
        let shift = &shifts[t % shifts.len()];
        let mut za = noisy(z, &mut rng);
        for (x, s) in za.iter_mut().zip(shift) {
            *x += s;
        }
        h1.push(model.statistic(&za)?);
    }
    Ok(roc_from_statistics(h0, h1))
}

/// Threshold sweep over pooled statistics; AUC by the rank statistic with
/// ties counted as one half.
pub fn roc_from_statistics(h0: Vec<f64>, h1: Vec<f64>) -> RocCurve {
    let mut pooled: Vec<f64> = h0.iter().chain(&h1).copied().collect();
    pooled.sort_by(|a, b| b.total_cmp(a));
    pooled.dedup();
    let (n0, n1) = (h0.len() as f64, h1.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    for &tau in &pooled {
        let fa = h0.iter().filter(|&&d| d >= tau).count() as f64 / n0;
        let pd = h1.iter().filter(|&&d| d >= tau).count() as f64 / n1;
        points.push((fa, pd));
    }
    let mut wins = 0.0;
    for &a in &h1 {
        for &b in &h0 {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    RocCurve {
        points,
        auc: wins / (n0 * n1),
        h0,
        h1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::{Branch, Bus, BusRole, GeneratorData};
    use crate::spectral::build_gso;

    fn ring(n: usize) -> GridCase {
        let buses = (0..n)
            .map(|i| Bus {
                id: i as u64 + 1,
                shunt: ZERO,
                role: if i % 3 == 0 {
                    BusRole::Generator(GeneratorData {
                        admittance: c64::new(0.0, -5.0),
                        mass: 5.0,
                        damping: 0.5,
                    })
                } else {
                    BusRole::Load {
                        admittance: c64::new(0.3, -0.1),
                    }
                },
            })
            .collect();
        let branches = (0..n)
            .map(|i| Branch {
                from: i,
                to: (i + 1) % n,
                admittance: c64::new(1.0, -10.0 - i as f64),
            })
            .collect();
        GridCase::new(buses, branches, 60.0).unwrap()
    }

    #[test]
    fn l1_projection_is_radial_and_tight() {
        let mut x = vec![c64::new(3.0, 4.0), c64::new(0.0, 1.0), c64::new(-2.0, 0.0)];
        project_l1_ball(&mut x, 4.0);
        let total: f64 = x.iter().map(|v| v.norm()).sum();
        assert!((total - 4.0).abs() < 1e-12);
        assert!((x[0] / x[0].norm() - c64::new(0.6, 0.8)).norm() < 1e-12);
        assert_eq!(x[1], ZERO);
    }

    #[test]
    fn model_consistent_measurement_has_zero_statistic() {
        let case = ring(6);
        let op = build_gso(&case).unwrap();
        let model = build_measurement_model(&case, &op, &[0, 1, 3, 4], 3).unwrap();
        let x: Vec<c64> = (0..3).map(|j| c64::new(1.0 + j as f64, -0.5)).collect();
        let mut v = vec![ZERO; 6];
        for (j, &c) in x.iter().enumerate() {
            let g = op.eigenvalues()[j].inv() * c;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi += op.basis()[(i, j)] * g;
            }
        }
        let z = model.measure(&v).unwrap();
        assert!(model.statistic(&z).unwrap() < 1e-20 * linalg::norm_sq(&z).max(1.0));
        assert_eq!(detect(&z, &model, 1e-12).unwrap().1, Decision::NoAttack);
    }

    #[test]
    fn threshold_quantile_interpolates() {
        let s = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(calibrate_threshold(&s, 0.5).unwrap(), 3.0);
        assert!((calibrate_threshold(&s, 0.99).unwrap() - 4.96).abs() < 1e-12);
    }

    #[test]
    fn single_bus_with_honest_neighbors_has_no_stealthy_attack() {
        let case = ring(6);
        let all: Vec<usize> = (0..6).collect();
        let err = craft_attack(&case, &all, &[2], 1.0, 1).unwrap_err();
        assert!(matches!(err, GspError::NoUnobservableAttack));
    }

    #[test]
    fn auc_counts_ties_as_half() {
        let roc = roc_from_statistics(vec![1.0, 2.0], vec![2.0, 3.0]);
        assert!((roc.auc - 0.875).abs() < 1e-15);
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    }
}
