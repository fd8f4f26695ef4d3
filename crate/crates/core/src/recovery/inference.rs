use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::grid_model::PhasorSeries;
use crate::linalg::{self, LuFactor, ONE, ZERO};
use crate::spectral::SpectralOperator;

use super::soft_threshold;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Weight of the squared off-diagonal Frobenius norm.
    pub gamma: f64,
    /// Target of `Re Tr(S) / N`.
    pub alpha: f64,
    /// Target of `Im Tr(S) / N`.
    pub beta: f64,
    /// Weight of the Ohm's-law fit `sum_t ||S v_t - i_t||^2`.
    #[serde(default = "default_weight")]
    pub current_fit_weight: f64,
    #[serde(default = "default_rho")]
    pub rho0: f64,
    #[serde(default = "default_iter")]
    pub max_iter: usize,
    /// Relative primal/dual residual target.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Relative diagonal loading that makes the quadratic step unique.
    #[serde(default = "default_ridge")]
    pub ridge: f64,
}

fn default_weight() -> f64 {
    1.0
}
fn default_rho() -> f64 {
    1.0
}
fn default_iter() -> usize {
    20000
}
fn default_tol() -> f64 {
    1e-7
}
fn default_ridge() -> f64 {
    1e-10
}

impl InferenceConfig {
    pub fn new(alpha: f64, beta: f64) -> Self {
        InferenceConfig {
            gamma: 0.0,
            alpha,
            beta,
            current_fit_weight: default_weight(),
            rho0: default_rho(),
            max_iter: default_iter(),
            tol: default_tol(),
            ridge: default_ridge(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub op: SpectralOperator,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
}

/// Free parameters of a complex symmetric matrix: the upper triangle,
/// diagonal included, row by row.
struct SymParams {
    n: usize,
    pairs: Vec<(usize, usize)>,
    index: Vec<usize>,
}

impl SymParams {
    fn new(n: usize) -> Self {
        let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
        let mut index = vec![0; n * n];
        for a in 0..n {
            for b in a..n {
                index[a * n + b] = pairs.len();
                index[b * n + a] = pairs.len();
                pairs.push((a, b));
            }
        }
        SymParams { n, pairs, index }
    }

    fn len(&self) -> usize {
        self.pairs.len()
    }

    /// The unit patterns `E_p` as lists of `(row, col)` positions.
    fn terms(&self, p: usize) -> &'static [(bool, bool)] {
        let (a, b) = self.pairs[p];
        if a == b {
            &[(false, false)]
        } else {
            &[(false, true), (true, false)]
        }
    }

    fn pos(&self, p: usize, flip: (bool, bool)) -> (usize, usize) {
        let (a, b) = self.pairs[p];
        let pick = |f: bool| if f { b } else { a };
        (pick(flip.0), pick(flip.1))
    }

    fn matrix(&self, s: &[c64]) -> Mat<c64> {
        let n = self.n;
        Mat::from_fn(n, n, |i, j| s[self.index[i * n + j]])
    }

    /// `h_p = tr(E_p M)`.
    fn project(&self, m: &Mat<c64>) -> Vec<c64> {
        (0..self.len())
            .map(|p| {
                self.terms(p)
                    .iter()
                    .map(|&f| {
                        let (r, c) = self.pos(p, f);
                        m[(c, r)]
                    })
                    .sum()
            })
            .collect()
    }
}

/// `G_pq = tr(E_q C E_p)` with `C = V V^H`.
fn gram(params: &SymParams, c: &Mat<c64>) -> Mat<c64> {
    let p = params.len();
    let mut g = Mat::<c64>::zeros(p, p);
    for pi in 0..p {
        for qi in 0..p {
            let (a0, b0) = params.pairs[pi];
            let (c0, d0) = params.pairs[qi];
            if a0 != c0 && a0 != d0 && b0 != c0 && b0 != d0 {
                continue;
            }
            let mut acc = ZERO;
            for &fp in params.terms(pi) {
                let (a, b) = params.pos(pi, fp);
                for &fq in params.terms(qi) {
                    let (cc, d) = params.pos(qi, fq);
                    if b == cc {
                        acc += c[(d, a)];
                    }
                }
            }
            g[(pi, qi)] = acc;
        }
    }
    g
}

/// `V` as an `N x T` matrix with one column per frame.
fn columns_of(series: &PhasorSeries) -> Mat<c64> {
    Mat::from_fn(series.n_buses(), series.len(), |i, t| series.frame(t)[i])
}

fn kkt(params: &SymParams, g: &Mat<c64>, gamma: f64, w: f64, rho: f64, ridge: f64) -> LuFactor {
    let p = params.len();
    let scale = w + 0.5 * rho;
    let mut h = Mat::<c64>::zeros(p + 1, p + 1);
    let mut diag_max: f64 = 1.0;
    for i in 0..p {
        for j in 0..p {
            h[(i, j)] = g[(i, j)] * scale;
        }
        let (a, b) = params.pairs[i];
        if a != b {
            h[(i, i)] += c64::new(2.0 * gamma, 0.0);
        } else {
            h[(i, p)] = ONE;
            h[(p, i)] = ONE;
        }
        diag_max = diag_max.max(h[(i, i)].norm());
    }
    for i in 0..p {
        h[(i, i)] += c64::new(ridge * diag_max, 0.0);
    }
    LuFactor::new(h.as_ref())
}

fn objective(s: &Mat<c64>, v: &Mat<c64>, i: Option<&Mat<c64>>, gamma: f64, w: f64) -> f64 {
    let sv = s * v;
    let l1: f64 = sv.col_iter().flat_map(|c| c.iter()).map(|z| z.norm()).sum();
    let n = s.nrows();
    let mut off = 0.0;
    for a in 0..n {
        for b in 0..n {
            if a != b {
                off += s[(a, b)].norm_sqr();
            }
        }
    }
    let fit = match i {
        Some(i) if w > 0.0 => linalg::frobenius((&sv - i).as_ref()).powi(2),
        _ => 0.0,
    };
    l1 + gamma * off + w * fit
}

/// Learns a sparse complex symmetric GSO from voltage snapshots (and,
/// optionally, matching current injections) under the trace normalization
/// `Tr(S) = (alpha + j beta) N`.
pub fn infer_gso(v: &PhasorSeries, currents: Option<&PhasorSeries>, cfg: &InferenceConfig) -> Result<InferenceResult> {
    let (n, t) = (v.n_buses(), v.len());
    if t < 2 {
        return Err(GspError::invalid("series", format!("need T ≥ 2 frames, got {t}")));
    }
    if let Some(i) = currents {
        if i.n_buses() != n || i.len() != t {
            return Err(GspError::Dimension {
                expected: n * t,
                got: i.n_buses() * i.len(),
            });
        }
    }
    if !(cfg.gamma >= 0.0) || !cfg.alpha.is_finite() || !cfg.beta.is_finite() {
        return Err(GspError::invalid("inference config", "need gamma >= 0 and finite alpha, beta"));
    }
    if cfg.alpha.abs() <= 1.0 || cfg.beta.abs() <= 1.0 {
        log::warn!("trace targets |alpha|, |beta| <= 1 are unusual for grid admittances");
    }
    let w = if currents.is_some() { cfg.current_fit_weight.max(0.0) } else { 0.0 };
    let params = SymParams::new(n);
    let vm = columns_of(v);
    let im = currents.map(columns_of);
    let c = &vm * vm.adjoint();
    let g = gram(&params, &c);
    let h_cur = match &im {
        Some(i) if w > 0.0 => params.project(&(i * vm.adjoint())),
        _ => vec![ZERO; params.len()],
    };
    let trace = c64::new(cfg.alpha, cfg.beta) * n as f64;

    let mut rho = cfg.rho0;
    let mut lu = kkt(&params, &g, cfg.gamma, w, rho, cfg.ridge);
    let mut z = Mat::<c64>::zeros(n, t);
    let mut u = Mat::<c64>::zeros(n, t);
    let mut s = Mat::<c64>::zeros(n, n);
    let abs_tol = 1e-12 * ((n * t) as f64).sqrt();
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let target = &z - &u;
        let h_tgt = params.project(&(&target * vm.adjoint()));
        let mut rhs: Vec<c64> = h_cur.iter().zip(&h_tgt).map(|(a, b)| a * w + b * (0.5 * rho)).collect();
        rhs.push(trace);
        let sol = lu.solve(&rhs);
        s = params.matrix(&sol[..params.len()]);
        let sv = &s * &vm;
        let z_old = std::mem::replace(&mut z, Mat::zeros(n, t));
        for j in 0..t {
            for i in 0..n {
                z[(i, j)] = soft_threshold(sv[(i, j)] + u[(i, j)], 1.0 / rho);
            }
        }
        u += &sv - &z;
        primal = linalg::frobenius((&sv - &z).as_ref());
        dual = rho * linalg::norm(&params.project(&((&z - &z_old) * vm.adjoint())));
        let eps_pri = abs_tol + cfg.tol * linalg::frobenius(sv.as_ref()).max(linalg::frobenius(z.as_ref()));
        let eps_dual = abs_tol + cfg.tol * rho * linalg::norm(&params.project(&(&u * vm.adjoint())));
        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }
        let factor = if primal > 10.0 * dual {
            2.0
        } else if dual > 10.0 * primal {
            0.5
        } else {
            1.0
        };
        if factor != 1.0 {
            rho *= factor;
            u *= faer::Scale(c64::new(1.0 / factor, 0.0));
            lu = kkt(&params, &g, cfg.gamma, w, rho, cfg.ridge);
        }
    }
    if !converged {
        return Err(GspError::NotConverged {
            iterations,
            primal,
            dual,
        });
    }
    let objective = objective(&s, &vm, im.as_ref(), cfg.gamma, w);
    let op = SpectralOperator::from_matrix(s)?;
    Ok(InferenceResult {
        op,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        objective,
    })
}

/// F1 score of the estimated off-diagonal support, entries above
/// `rel_threshold * max |offdiag|`, against an undirected edge list.
pub fn support_f1(estimate: MatRef<'_, c64>, edges: &[(usize, usize)], rel_threshold: f64) -> f64 {
    let n = estimate.nrows();
    let max = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .map(|(a, b)| estimate[(a, b)].norm())
        .fold(0.0, f64::max);
    let truth: std::collections::HashSet<(usize, usize)> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    let (mut tp, mut fp) = (0usize, 0usize);
    for a in 0..n {
        for b in (a + 1)..n {
            if max > 0.0 && estimate[(a, b)].norm() > rel_threshold * max {
                if truth.contains(&(a, b)) {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
    }
    let fn_ = truth.len() - tp;
    if tp == 0 {
        return if truth.is_empty() && fp == 0 { 1.0 } else { 0.0 };
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}
