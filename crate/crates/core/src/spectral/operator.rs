use std::cmp::Ordering;

use faer::{c64, Mat, MatRef, Side};

use crate::config::Tolerances;
use crate::error::{GspError, Result};
use crate::linalg::{self, LuFactor, ONE, ZERO};

/// Graph filter families applied in the spectral domain.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterSpec {
    /// `S^{-1} x`, solved through the cached factorization.
    FullInverse,
    /// `U_K diag(1/lambda) U_K^T x` over the `k` lowest frequencies.
    LowPass(usize),
    /// `sum_k h_k S^k x`.
    Polynomial(Vec<c64>),
    /// `U_K U_K^T x` for an explicit set of frequency indices.
    Bandlimit(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDiagnostics {
    /// `||S U - U diag(L)||_F / ||S||_F`
    pub spectral_residual: f64,
    /// `||U^T U - I||_F`
    pub orthogonality_residual: f64,
    pub min_abs_eigenvalue: f64,
    pub max_abs_eigenvalue: f64,
}

/// A complex-symmetric shift operator `S = U diag(L) U^T` with eigenvalues
/// ordered by ascending modulus.
#[derive(Debug, Clone)]
pub struct SpectralOperator {
    s: Mat<c64>,
    eigenvalues: Vec<c64>,
    basis: Mat<c64>,
    lu: LuFactor,
    diagnostics: SpectralDiagnostics,
    tol: Tolerances,
}

impl SpectralOperator {
    pub fn from_matrix(s: Mat<c64>) -> Result<Self> {
        Self::with_tolerances(s, Tolerances::from_env())
    }

    /// Symmetrizes `s` and computes its complex-orthogonal eigenbasis.
    pub fn with_tolerances(mut s: Mat<c64>, tol: Tolerances) -> Result<Self> {
        check_square(s.as_ref())?;
        linalg::symmetrize(&mut s);
        let n = s.nrows();
        let evd = s
            .eigen()
            .map_err(|e| GspError::Singular(format!("eigendecomposition failed: {e:?}")))?;
        let raw_vals: Vec<c64> = (0..n).map(|i| evd.S().column_vector()[i]).collect();
        let raw_vecs = evd.U();
        let order = frequency_order(&raw_vals, tol.cluster);

        let eigenvalues: Vec<c64> = order.iter().map(|&i| raw_vals[i]).collect();
        let mut basis = Mat::<c64>::zeros(n, n);
        for (k, &i) in order.iter().enumerate() {
            let scale = linalg::norm(&linalg::col_to_vec(raw_vecs, i)).recip();
            for r in 0..n {
                basis[(r, k)] = raw_vecs[(r, i)] * scale;
            }
        }
        complex_orthonormalize(&mut basis, &eigenvalues, &tol)?;
        Self::assemble(s, eigenvalues, basis, tol)
    }

    /// Real symmetric operators get a real orthonormal basis.
    pub fn from_real_symmetric(s: MatRef<'_, f64>, tol: Tolerances) -> Result<Self> {
        if s.nrows() != s.ncols() || s.nrows() == 0 {
            return Err(GspError::invalid("operator", "expected a non-empty square matrix"));
        }
        let n = s.nrows();
        let sym = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
        let evd = sym
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| GspError::Singular(format!("eigendecomposition failed: {e:?}")))?;
        let raw_vals: Vec<c64> = (0..n).map(|i| c64::new(evd.S().column_vector()[i], 0.0)).collect();
        let order = frequency_order(&raw_vals, tol.cluster);
        let eigenvalues = order.iter().map(|&i| raw_vals[i]).collect();
        let basis = Mat::<c64>::from_fn(n, n, |r, k| c64::new(evd.U()[(r, order[k])], 0.0));
        Self::assemble(linalg::from_real(sym.as_ref()), eigenvalues, basis, tol)
    }

    fn assemble(s: Mat<c64>, eigenvalues: Vec<c64>, basis: Mat<c64>, tol: Tolerances) -> Result<Self> {
        let n = s.nrows();
        let su = &s * &basis;
        let mut resid = 0.0;
        for j in 0..n {
            for i in 0..n {
                resid += (su[(i, j)] - basis[(i, j)] * eigenvalues[j]).norm_sqr();
            }
        }
        let s_norm = linalg::frobenius(s.as_ref());
        let spectral_residual = if s_norm > 0.0 { resid.sqrt() / s_norm } else { resid.sqrt() };
        let gram = basis.transpose() * &basis;
        let orthogonality_residual = linalg::frobenius((gram - linalg::identity(n)).as_ref());
        let diagnostics = SpectralDiagnostics {
            spectral_residual,
            orthogonality_residual,
            min_abs_eigenvalue: eigenvalues.first().map_or(0.0, |l| l.norm()),
            max_abs_eigenvalue: eigenvalues.last().map_or(0.0, |l| l.norm()),
        };
        if spectral_residual > tol.spectral_residual {
            log::warn!("spectral residual {spectral_residual:.3e} exceeds {:.1e}", tol.spectral_residual);
        }
        if orthogonality_residual > tol.orthogonality {
            log::warn!("orthogonality residual {orthogonality_residual:.3e} exceeds {:.1e}", tol.orthogonality);
        }
        let lu = LuFactor::new(s.as_ref());
        Ok(SpectralOperator {
            s,
            eigenvalues,
            basis,
            lu,
            diagnostics,
            tol,
        })
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.s.as_ref()
    }

    pub fn eigenvalues(&self) -> &[c64] {
        &self.eigenvalues
    }

    /// Eigenvectors as columns, normalized so that `U^T U = I`.
    pub fn basis(&self) -> MatRef<'_, c64> {
        self.basis.as_ref()
    }

    pub fn diagnostics(&self) -> SpectralDiagnostics {
        self.diagnostics
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn is_invertible(&self) -> bool {
        let d = self.diagnostics;
        d.max_abs_eigenvalue > 0.0 && d.min_abs_eigenvalue > self.tol.singularity * d.max_abs_eigenvalue
    }

    fn check_len(&self, x: &[c64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(GspError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Graph Fourier transform `U^T x`.
    pub fn gft(&self, x: &[c64]) -> Result<Vec<c64>> {
        self.check_len(x)?;
        Ok(linalg::mat_tvec(self.basis.as_ref(), x))
    }

    /// Inverse transform `U x`.
    pub fn inverse_gft(&self, xt: &[c64]) -> Result<Vec<c64>> {
        self.check_len(xt)?;
        Ok(linalg::mat_vec(self.basis.as_ref(), xt))
    }

    /// `S x`.
    pub fn shift(&self, x: &[c64]) -> Result<Vec<c64>> {
        self.check_len(x)?;
        Ok(linalg::mat_vec(self.s.as_ref(), x))
    }

    /// `S^{-1} b` from the cached LU factors.
    pub fn solve(&self, b: &[c64]) -> Result<Vec<c64>> {
        self.check_len(b)?;
        if !self.is_invertible() {
            return Err(GspError::Singular(format!(
                "min |lambda| = {:.3e} relative to max {:.3e}",
                self.diagnostics.min_abs_eigenvalue, self.diagnostics.max_abs_eigenvalue
            )));
        }
        Ok(self.lu.solve(b))
    }

    pub fn lu(&self) -> &LuFactor {
        &self.lu
    }

    pub fn apply_filter(&self, spec: &FilterSpec, x: &[c64]) -> Result<Vec<c64>> {
        self.check_len(x)?;
        let n = self.dim();
        match spec {
            FilterSpec::FullInverse => self.solve(x),
            FilterSpec::LowPass(k) => {
                if *k == 0 || *k > n {
                    return Err(GspError::invalid("filter", format!("low-pass order {k} outside [1, {n}]")));
                }
                if self.eigenvalues[..*k].iter().any(|l| l.norm() == 0.0) {
                    return Err(GspError::Singular("zero eigenvalue inside the low-pass band".into()));
                }
                let band: Vec<usize> = (0..*k).collect();
                Ok(self.spectral_apply(&band, x, |l| l.inv()))
            }
            FilterSpec::Bandlimit(set) => {
                if let Some(&bad) = set.iter().find(|&&i| i >= n) {
                    return Err(GspError::invalid("filter", format!("frequency index {bad} out of range")));
                }
                Ok(self.spectral_apply(set, x, |_| ONE))
            }
            FilterSpec::Polynomial(h) => {
                if h.is_empty() || h.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
                    return Err(GspError::invalid("filter", "polynomial coefficients must be finite and non-empty"));
                }
                let mut y: Vec<c64> = x.iter().map(|&v| v * h[h.len() - 1]).collect();
                for &hk in h.iter().rev().skip(1) {
                    y = linalg::mat_vec(self.s.as_ref(), &y);
                    for (yi, &xi) in y.iter_mut().zip(x) {
                        *yi += hk * xi;
                    }
                }
                Ok(y)
            }
        }
    }

    fn spectral_apply(&self, band: &[usize], x: &[c64], gain: impl Fn(c64) -> c64) -> Vec<c64> {
        let n = self.dim();
        let mut y = vec![ZERO; n];
        for &k in band {
            let mut coef = ZERO;
            for i in 0..n {
                coef += self.basis[(i, k)] * x[i];
            }
            coef *= gain(self.eigenvalues[k]);
            for i in 0..n {
                y[i] += self.basis[(i, k)] * coef;
            }
        }
        y
    }
}

fn check_square(s: MatRef<'_, c64>) -> Result<()> {
    if s.nrows() != s.ncols() || s.nrows() == 0 {
        return Err(GspError::invalid("operator", "expected a non-empty square matrix"));
    }
    if s.col_iter().flat_map(|c| c.iter()).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(GspError::invalid("operator", "non-finite entry"));
    }
    Ok(())
}

/// Ascending modulus; near-ties broken by principal phase, then position.
fn frequency_order(vals: &[c64], rel_tol: f64) -> Vec<usize> {
    let scale = vals.iter().map(|l| l.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[a].norm().total_cmp(&vals[b].norm()).then(a.cmp(&b)));
    let mut out = Vec::with_capacity(idx.len());
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && vals[idx[end]].norm() - vals[idx[end - 1]].norm() <= rel_tol * scale {
            end += 1;
        }
        let mut group = idx[start..end].to_vec();
        group.sort_by(|&a, &b| match principal_arg(vals[a]).total_cmp(&principal_arg(vals[b])) {
            Ordering::Equal => a.cmp(&b),
            o => o,
        });
        out.extend(group);
        start = end;
    }
    out
}

/// Phase in `(-pi, pi]`, so that a negative zero imaginary part does not
/// flip the branch.
fn principal_arg(z: c64) -> f64 {
    let a = z.arg();
    if a <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        a
    }
}

/// Rescales unit-norm eigenvectors so that `u^T u = 1`, orthogonalizing
/// within clusters of (numerically) repeated eigenvalues under the bilinear
/// form `u^T v`.
fn complex_orthonormalize(basis: &mut Mat<c64>, vals: &[c64], tol: &Tolerances) -> Result<()> {
    let n = basis.nrows();
    let scale = vals.iter().map(|l| l.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for k in 0..n {
        let cluster: Vec<usize> = (0..k)
            .filter(|&p| (vals[p] - vals[k]).norm() <= tol.cluster * scale)
            .collect();
        let mut u = linalg::col_to_vec(basis.as_ref(), k);
        let unit = linalg::norm(&u).recip();
        u.iter_mut().for_each(|z| *z *= unit);
        let q = linalg::dot_t(&u, &u);
        if q.norm() < tol.quasi_null {
            return Err(GspError::NonDiagonalizable { index: k, norm: q.norm() });
        }
        for &p in &cluster {
            let up = linalg::col_to_vec(basis.as_ref(), p);
            let c = linalg::dot_t(&up, &u);
            for (ui, &pi) in u.iter_mut().zip(&up) {
                *ui -= c * pi;
            }
        }
        let q = linalg::dot_t(&u, &u);
        if q.norm() < tol.quasi_null * linalg::norm_sq(&u).max(f64::MIN_POSITIVE) {
            return Err(GspError::NonDiagonalizable { index: k, norm: q.norm() });
        }
        let r = q.sqrt().inv();
        for i in 0..n {
            basis[(i, k)] = u[i] * r;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::J;

    fn two_bus() -> SpectralOperator {
        let s = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => -J * 15.0,
            (1, 1) => -J * 5.0,
            _ => J * 5.0,
        });
        SpectralOperator::from_matrix(s).unwrap()
    }

    #[test]
    fn two_bus_eigenvalues_ordered() {
        let op = two_bus();
        let r = 50f64.sqrt();
        assert!((op.eigenvalues()[0] - c64::new(0.0, -(10.0 - r))).norm() < 1e-12);
        assert!((op.eigenvalues()[1] - c64::new(0.0, -(10.0 + r))).norm() < 1e-12);
        assert!(op.diagnostics().orthogonality_residual < 1e-12);
    }

    #[test]
    fn first_eigenvector_transforms_to_unit_coordinate() {
        let op = two_bus();
        let u0 = linalg::col_to_vec(op.basis(), 0);
        let xt = op.gft(&u0).unwrap();
        assert!((xt[0] - ONE).norm() < 1e-12 && xt[1].norm() < 1e-12);
    }

    #[test]
    fn scalar_operator() {
        let op = SpectralOperator::from_matrix(Mat::from_fn(1, 1, |_, _| -J)).unwrap();
        assert_eq!(op.eigenvalues(), &[-J]);
        assert!((op.basis()[(0, 0)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nilpotent_symmetric_matrix_is_rejected() {
        let s = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => ONE,
            (1, 1) => -ONE,
            _ => J,
        });
        let err = SpectralOperator::from_matrix(s).unwrap_err();
        assert!(matches!(err, GspError::NonDiagonalizable { .. }), "{err}");
    }

    #[test]
    fn repeated_eigenvalue_gets_orthogonal_basis() {
        let s = Mat::from_fn(3, 3, |i, j| if i == j { c64::new(2.0, -1.0) } else { ZERO });
        let op = SpectralOperator::from_matrix(s).unwrap();
        assert!(op.diagnostics().orthogonality_residual < 1e-12);
    }

    #[test]
    fn ties_broken_by_phase() {
        let s = Mat::from_fn(3, 3, |i, j| {
            if i != j {
                ZERO
            } else {
                [J, -ONE, ONE][i]
            }
        });
        let op = SpectralOperator::from_matrix(s).unwrap();
        assert_eq!(op.eigenvalues(), &[ONE, J, -ONE]);
    }

    #[test]
    fn diagonal_inverse() {
        let s = Mat::from_fn(2, 2, |i, j| if i == j { -J } else { ZERO });
        let op = SpectralOperator::from_matrix(s).unwrap();
        let y = op.apply_filter(&FilterSpec::FullInverse, &[ONE, ONE]).unwrap();
        assert!((y[0] - J).norm() < 1e-15 && (y[1] - J).norm() < 1e-15);
    }

    #[test]
    fn low_pass_one_matches_hand_projection() {
        let op = two_bus();
        let x = [ONE, ZERO];
        let y = op.apply_filter(&FilterSpec::LowPass(1), &x).unwrap();
        // Explicit 2x2 inverse of [[a, b], [b, d]].
        let (a, b, d) = (-J * 15.0, J * 5.0, -J * 5.0);
        let det = a * d - b * b;
        let inv_x = [d / det, -b / det];
        let u = linalg::col_to_vec(op.basis(), 0);
        let coef = linalg::dot_t(&u, &inv_x);
        for i in 0..2 {
            assert!((y[i] - u[i] * coef).norm() < 1e-12);
        }
    }

    #[test]
    fn polynomial_matches_explicit_powers() {
        let op = two_bus();
        let h = vec![c64::new(1.0, 0.5), c64::new(-0.2, 0.0), c64::new(0.01, 0.03)];
        let x = vec![c64::new(0.3, -1.0), c64::new(2.0, 0.1)];
        let y = op.apply_filter(&FilterSpec::Polynomial(h.clone()), &x).unwrap();
        let sx = op.shift(&x).unwrap();
        let ssx = op.shift(&sx).unwrap();
        for i in 0..2 {
            let want = h[0] * x[i] + h[1] * sx[i] + h[2] * ssx[i];
            assert!((y[i] - want).norm() < 1e-12 * want.norm().max(1.0));
        }
    }

    #[test]
    fn bad_filter_orders_rejected() {
        let op = two_bus();
        assert!(op.apply_filter(&FilterSpec::LowPass(0), &[ONE, ONE]).is_err());
        assert!(op.apply_filter(&FilterSpec::LowPass(3), &[ONE, ONE]).is_err());
        assert!(op.gft(&[ONE]).is_err());
    }
}
