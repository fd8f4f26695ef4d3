use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::grid_model::PhasorSeries;
use crate::linalg::{self, ZERO};
use crate::spectral::SpectralOperator;

use super::mask::ObservationMask;
use super::soft_threshold;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpolationConfig {
    pub rho0: f64,
    pub max_iter: usize,
    /// Relative primal/dual residual target.
    pub tol: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Candidate `c_g` values for automatic weight selection.
    pub auto_cg: Vec<f64>,
    /// Candidate `c_t` values for automatic weight selection.
    pub auto_ct: Vec<f64>,
    /// Fraction of observed entries held out when selecting weights.
    pub holdout: f64,
}

impl Default for InterpolationConfig {
    fn default() -> Self {
        InterpolationConfig {
            rho0: 1.0,
            max_iter: 3000,
            tol: 1e-6,
            cg_tol: 1e-10,
            cg_max_iter: 1000,
            auto_cg: vec![0.0, 1e-4, 1e-3],
            auto_ct: vec![0.1, 1.0, 10.0],
            holdout: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularization {
    Fixed { c_g: f64, c_t: f64 },
    Auto,
}

#[derive(Debug, Clone)]
pub struct InterpolationResult {
    pub series: PhasorSeries,
    pub c_g: f64,
    pub c_t: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
}

/// `||P_O(V - Y)||^2 + c_g sum_t ||S v_t||_1 + c_t sum_t ||v_t - v_{t-1}||^2`
/// over row-major `T x N` data.
pub fn interpolation_objective(
    v: &[c64],
    observed: &[c64],
    mask: &ObservationMask,
    s: MatRef<'_, c64>,
    c_g: f64,
    c_t: f64,
) -> f64 {
    let n = mask.buses();
    let fit: f64 = v
        .iter()
        .zip(observed)
        .zip(mask.flags())
        .filter(|(_, &o)| o)
        .map(|((a, b), _)| (a - b).norm_sqr())
        .sum();
    let mut graph = 0.0;
    if c_g > 0.0 {
        for f in v.chunks(n) {
            graph += linalg::mat_vec(s, f).iter().map(|z| z.norm()).sum::<f64>();
        }
    }
    let mut temporal = 0.0;
    for t in 1..mask.frames() {
        for b in 0..n {
            temporal += (v[t * n + b] - v[(t - 1) * n + b]).norm_sqr();
        }
    }
    fit + c_g * graph + c_t * temporal
}

/// The Hermitian positive semidefinite operator `2 P_O + 2 c_t (L_T (x) I)`
/// on row-major frames.
struct NormalOperator<'a> {
    mask: &'a [bool],
    n: usize,
    frames: usize,
    c_t: f64,
}

impl NormalOperator<'_> {
    fn apply(&self, x: &[c64], out: &mut [c64]) {
        let n = self.n;
        for t in 0..self.frames {
            let dst = &mut out[t * n..(t + 1) * n];
            dst.iter_mut().for_each(|d| *d = ZERO);
            for b in 0..n {
                let i = t * n + b;
                if self.mask[i] {
                    dst[b] += x[i] * 2.0;
                }
                if self.c_t > 0.0 {
                    let mut lap = ZERO;
                    if t > 0 {
                        lap += x[i] - x[i - n];
                    }
                    if t + 1 < self.frames {
                        lap += x[i] - x[i + n];
                    }
                    dst[b] += lap * (2.0 * self.c_t);
                }
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let n = self.n;
        (0..self.frames * n)
            .map(|i| {
                let t = i / n;
                let deg = usize::from(t > 0) + usize::from(t + 1 < self.frames);
                let observed = if self.mask[i] { 2.0 } else { 0.0 };
                observed + 2.0 * self.c_t * deg as f64
            })
            .collect()
    }
}

fn dot(a: &[c64], b: &[c64]) -> c64 {
    linalg::dot_h(a, b)
}

/// Jacobi-preconditioned conjugate gradients, warm-started at `x`.
fn conjugate_gradient(op: &NormalOperator<'_>, b: &[c64], x: &mut [c64], tol: f64, max_iter: usize) -> usize {
    let len = b.len();
    let diag = op.diagonal();
    let precond = |r: &[c64]| -> Vec<c64> {
        r.iter()
            .zip(&diag)
            .map(|(v, d)| if *d > 0.0 { v / *d } else { *v })
            .collect()
    };
    let mut ax = vec![ZERO; len];
    op.apply(x, &mut ax);
    let mut r: Vec<c64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let b_norm = linalg::norm(b).max(f64::MIN_POSITIVE);
    if linalg::norm(&r) <= tol * b_norm {
        return 0;
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z).re;
    let mut ap = vec![ZERO; len];
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap).re;
        if pap <= 0.0 {
            return it;
        }
        let alpha = rz / pap;
        for i in 0..len {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        if linalg::norm(&r) <= tol * b_norm {
            return it;
        }
        z = precond(&r);
        let rz_new = dot(&r, &z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..len {
            p[i] = z[i] + p[i] * beta;
        }
    }
    max_iter
}

fn frames_map(s: MatRef<'_, c64>, v: &[c64], n: usize) -> Vec<c64> {
    v.chunks(n).flat_map(|f| linalg::mat_vec(s, f)).collect()
}

fn frames_map_h(s: MatRef<'_, c64>, v: &[c64], n: usize) -> Vec<c64> {
    v.chunks(n).flat_map(|f| linalg::mat_hvec(s, f)).collect()
}

/// Iterations between penalty updates.
const BALANCE_EVERY: usize = 10;

/// Solves `2 c_t L_T V + rho V + rho V G^T = R` for row-major frames `V`,
/// with `G = S^H S`, in the joint eigenbasis of the temporal path
/// Laplacian and `G`.
struct SplitSolver {
    /// Orthonormal eigenvectors of `L_T` (columns).
    q: Mat<c64>,
    mu: Vec<f64>,
    /// Unitary eigenvectors of `G` (columns).
    w: Mat<c64>,
    w_conj: Mat<c64>,
    sigma: Vec<f64>,
    c_t: f64,
}

impl SplitSolver {
    fn new(s: MatRef<'_, c64>, frames: usize, c_t: f64) -> Result<Self> {
        let lap = Mat::<f64>::from_fn(frames, frames, |i, j| {
            if i == j {
                (usize::from(i > 0) + usize::from(i + 1 < frames)) as f64
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        });
        let le = lap
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| GspError::Singular(format!("eigendecomposition failed: {e:?}")))?;
        let gram = s.adjoint() * s;
        let ge = gram
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| GspError::Singular(format!("eigendecomposition failed: {e:?}")))?;
        let n = s.nrows();
        let w = ge.U().to_owned();
        Ok(SplitSolver {
            q: linalg::from_real(le.U()),
            w_conj: Mat::from_fn(n, n, |i, j| w[(i, j)].conj()),
            w,
            mu: (0..frames).map(|i| le.S().column_vector()[i]).collect(),
            sigma: (0..n).map(|i| ge.S().column_vector()[i].re.max(0.0)).collect(),
            c_t,
        })
    }

    fn solve(&self, rhs: &[c64], rho: f64) -> Vec<c64> {
        let (t, n) = (self.mu.len(), self.sigma.len());
        let r = Mat::<c64>::from_fn(t, n, |i, j| rhs[i * n + j]);
        let mut tr = self.q.transpose() * &r * &self.w_conj;
        for i in 0..t {
            for j in 0..n {
                tr[(i, j)] /= 2.0 * self.c_t * self.mu[i] + rho * (1.0 + self.sigma[j]);
            }
        }
        let v = &self.q * &tr * self.w.transpose();
        (0..t * n).map(|k| v[(k / n, k % n)]).collect()
    }
}

/// Fills unobserved entries of `observed` by minimizing the regularized
/// least-squares objective (see [`interpolation_objective`]). Works with any
/// shift operator, including a Kron-reduced one on the monitored buses.
pub fn interpolate(
    observed: &PhasorSeries,
    mask: &ObservationMask,
    op: &SpectralOperator,
    c_g: f64,
    c_t: f64,
    cfg: &InterpolationConfig,
) -> Result<InterpolationResult> {
    let (t, n) = (observed.len(), observed.n_buses());
    if mask.frames() != t || mask.buses() != n || op.dim() != n {
        return Err(GspError::Dimension {
            expected: t * n,
            got: mask.frames() * mask.buses(),
        });
    }
    if !(c_g >= 0.0 && c_t >= 0.0 && c_g.is_finite() && c_t.is_finite()) {
        return Err(GspError::invalid("weights", "c_g and c_t must be finite and nonnegative"));
    }
    let s = op.matrix();
    let flags = mask.flags();
    let y: Vec<c64> = observed
        .values()
        .iter()
        .zip(flags)
        .map(|(v, &o)| if o { *v } else { ZERO })
        .collect();
    let b_fit: Vec<c64> = y.iter().map(|v| v * 2.0).collect();

    // Quadratic part alone: the exact answer for c_g = 0 and the warm start
    // otherwise.
    let mut v = y.clone();
    let quad = NormalOperator {
        mask: flags,
        n,
        frames: t,
        c_t,
    };
    conjugate_gradient(&quad, &b_fit, &mut v, cfg.cg_tol, cfg.cg_max_iter);

    let mut iterations = 0;
    let (mut primal, mut dual) = (0.0, 0.0);
    if c_g > 0.0 {
        // The splitting uses S / ||S||_2 so that both constraint blocks have
        // comparable scale under one penalty.
        let s_norm = linalg::singular_values(s)?.first().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
        let s_scaled = Mat::<c64>::from_fn(n, n, |i, j| s[(i, j)] / s_norm);
        let sn = s_scaled.as_ref();
        let split = SplitSolver::new(sn, t, c_t)?;
        let mut rho = cfg.rho0;
        let mut x = v.clone();
        let mut z = frames_map(sn, &v, n);
        let mut u1 = vec![ZERO; t * n];
        let mut u2 = vec![ZERO; t * n];
        let abs_tol = 1e-3 * cfg.tol * linalg::norm(&y);
        let mut converged = false;
        let mut last_objective = f64::INFINITY;
        while iterations < cfg.max_iter {
            iterations += 1;
            let xu: Vec<c64> = x.iter().zip(&u1).map(|(a, b)| a - b).collect();
            let zu: Vec<c64> = z.iter().zip(&u2).map(|(a, b)| a - b).collect();
            let back = frames_map_h(sn, &zu, n);
            let rhs: Vec<c64> = xu.iter().zip(&back).map(|(a, b)| (a + b) * rho).collect();
            v = split.solve(&rhs, rho);
            let sv = frames_map(sn, &v, n);
            let x_old = std::mem::take(&mut x);
            let z_old = std::mem::take(&mut z);
            x = (0..t * n)
                .map(|i| {
                    let target = v[i] + u1[i];
                    if flags[i] {
                        (y[i] * 2.0 + target * rho) / (2.0 + rho)
                    } else {
                        target
                    }
                })
                .collect();
            z = sv.iter().zip(&u2).map(|(a, b)| soft_threshold(a + b, c_g * s_norm / rho)).collect();
            for i in 0..t * n {
                u1[i] += v[i] - x[i];
                u2[i] += sv[i] - z[i];
            }
            let r1: Vec<c64> = v.iter().zip(&x).map(|(a, b)| a - b).collect();
            let r2: Vec<c64> = sv.iter().zip(&z).map(|(a, b)| a - b).collect();
            primal = (linalg::norm_sq(&r1) + linalg::norm_sq(&r2)).sqrt();
            let dz: Vec<c64> = z.iter().zip(&z_old).map(|(a, b)| a - b).collect();
            let dual_vec: Vec<c64> = frames_map_h(sn, &dz, n)
                .iter()
                .zip(x.iter().zip(&x_old))
                .map(|(g, (a, b))| g + (a - b))
                .collect();
            dual = rho * linalg::norm(&dual_vec);
            let scale_primal = (linalg::norm_sq(&v) + linalg::norm_sq(&sv))
                .max(linalg::norm_sq(&x) + linalg::norm_sq(&z))
                .sqrt();
            let adj_u: Vec<c64> = frames_map_h(sn, &u2, n).iter().zip(&u1).map(|(a, b)| a + b).collect();
            let eps_pri = abs_tol + cfg.tol * scale_primal;
            let eps_dual = abs_tol + cfg.tol * rho * linalg::norm(&adj_u);
            let obj = interpolation_objective(&v, &y, mask, s, c_g, c_t);
            let stalled = (last_objective - obj).abs() <= 1e-8 * obj.abs().max(f64::MIN_POSITIVE);
            last_objective = obj;
            if primal <= eps_pri && (dual <= eps_dual || stalled) {
                converged = true;
                break;
            }
            if iterations % BALANCE_EVERY != 0 {
                continue;
            }
            if primal > 10.0 * dual {
                rho *= 2.0;
                u1.iter_mut().chain(u2.iter_mut()).for_each(|x| *x *= 0.5);
            } else if dual > 10.0 * primal {
                rho *= 0.5;
                u1.iter_mut().chain(u2.iter_mut()).for_each(|x| *x *= 2.0);
            }
        }
        if !converged {
            return Err(GspError::NotConverged {
                iterations,
                primal,
                dual,
            });
        }
    }
    let objective = interpolation_objective(&v, &y, mask, s, c_g, c_t);
    let series = PhasorSeries::new(v, observed.bus_ids().to_vec(), observed.rate_hz(), observed.kind())?;
    Ok(InterpolationResult {
        series,
        c_g,
        c_t,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        objective,
    })
}

/// Picks `(c_g, c_t)` from the configured grid by validation error on a
/// held-out fraction of the observed entries, then solves with all of them.
pub fn interpolate_auto(
    observed: &PhasorSeries,
    mask: &ObservationMask,
    op: &SpectralOperator,
    cfg: &InterpolationConfig,
    seed: u64,
) -> Result<InterpolationResult> {
    let (train, held) = mask.hold_out(cfg.holdout, seed)?;
    let mut best: Option<(f64, f64, f64)> = None;
    for &c_g in &cfg.auto_cg {
        for &c_t in &cfg.auto_ct {
            let fit = match interpolate(observed, &train, op, c_g, c_t, cfg) {
                Ok(f) => f,
                Err(GspError::NotConverged { .. }) => continue,
                Err(e) => return Err(e),
            };
            let err: f64 = held
                .iter()
                .map(|&i| (fit.series.values()[i] - observed.values()[i]).norm_sqr())
                .sum();
            log::debug!("c_g={c_g:e} c_t={c_t:e}: held-out error {err:.4e}");
            if best.is_none_or(|(_, _, e)| err < e) {
                best = Some((c_g, c_t, err));
            }
        }
    }
    let (c_g, c_t, _) = best.ok_or_else(|| GspError::invalid("auto weights", "no candidate converged"))?;
    interpolate(observed, mask, op, c_g, c_t, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::PhasorKind;

    fn small_op() -> SpectralOperator {
        let s = Mat::<c64>::from_fn(3, 3, |i, j| {
            if i == j {
                c64::new(0.5, -12.0)
            } else {
                c64::new(-0.2, 6.0)
            }
        });
        SpectralOperator::from_matrix(s).unwrap()
    }

    fn data(t: usize) -> PhasorSeries {
        let vals = (0..t * 3)
            .map(|i| c64::new(1.0 + 0.01 * ((i * 7) % 5) as f64, -0.05 * ((i * 3) % 4) as f64))
            .collect();
        PhasorSeries::new(vals, vec![1, 2, 3], 30.0, PhasorKind::Voltage).unwrap()
    }

    #[test]
    fn full_mask_no_regularization_returns_input() {
        let y = data(10);
        let mask = ObservationMask::full(10, 3);
        let out = interpolate(&y, &mask, &small_op(), 0.0, 0.0, &Default::default()).unwrap();
        assert_eq!(out.series.values(), y.values());
    }

    #[test]
    fn single_gap_is_average_of_neighbors() {
        let y = data(8);
        let mut flags = vec![true; 24];
        flags[4 * 3 + 1] = false;
        let mask = ObservationMask::from_flags(8, 3, flags).unwrap();
        let out = interpolate(&y, &mask, &small_op(), 0.0, 0.7, &Default::default()).unwrap();
        let v = out.series.values();
        let avg = (v[3 * 3 + 1] + v[5 * 3 + 1]) * 0.5;
        assert!((v[4 * 3 + 1] - avg).norm() < 1e-9);
    }
}
