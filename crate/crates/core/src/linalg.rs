//! Dense complex linear-algebra helpers on top of `faer`.
//!
//! Matrix-vector products and triangular solves are written as plain loops
//! so that results are bit-reproducible regardless of thread count; the
//! codec relies on this for encoder/decoder synchronization.

use faer::linalg::solvers::Svd;
use faer::{c64, Mat, MatRef};

use crate::error::{GspError, Result};

pub const ZERO: c64 = c64::new(0.0, 0.0);
pub const ONE: c64 = c64::new(1.0, 0.0);
pub const J: c64 = c64::new(0.0, 1.0);

fn col_slice<'a>(a: MatRef<'a, c64>, j: usize) -> std::borrow::Cow<'a, [c64]> {
    match a.col(j).try_as_col_major() {
        Some(c) => std::borrow::Cow::Borrowed(c.as_slice()),
        None => std::borrow::Cow::Owned(a.col(j).iter().copied().collect()),
    }
}

/// `A x`.
pub fn mat_vec(a: MatRef<'_, c64>, x: &[c64]) -> Vec<c64> {
    assert_eq!(a.ncols(), x.len());
    let mut out = vec![ZERO; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == ZERO {
            continue;
        }
        let col = col_slice(a, j);
        for (o, &c) in out.iter_mut().zip(col.iter()) {
            *o += c * xj;
        }
    }
    out
}

/// `A^T x` (plain transpose, no conjugation).
pub fn mat_tvec(a: MatRef<'_, c64>, x: &[c64]) -> Vec<c64> {
    assert_eq!(a.nrows(), x.len());
    (0..a.ncols())
        .map(|j| {
            let col = col_slice(a, j);
            let mut acc = ZERO;
            for (&c, &xi) in col.iter().zip(x) {
                acc += c * xi;
            }
            acc
        })
        .collect()
}

/// `A^H x`.
pub fn mat_hvec(a: MatRef<'_, c64>, x: &[c64]) -> Vec<c64> {
    assert_eq!(a.nrows(), x.len());
    (0..a.ncols())
        .map(|j| {
            let col = col_slice(a, j);
            let mut acc = ZERO;
            for (&c, &xi) in col.iter().zip(x) {
                acc += c.conj() * xi;
            }
            acc
        })
        .collect()
}

/// Bilinear product `x^T y`.
pub fn dot_t(x: &[c64], y: &[c64]) -> c64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Sesquilinear product `x^H y`.
pub fn dot_h(x: &[c64], y: &[c64]) -> c64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sq(x: &[c64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(x: &[c64]) -> f64 {
    norm_sq(x).sqrt()
}

pub fn frobenius(a: MatRef<'_, c64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

pub fn identity(n: usize) -> Mat<c64> {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn from_real(a: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

pub fn submatrix(a: MatRef<'_, c64>, rows: &[usize], cols: &[usize]) -> Mat<c64> {
    Mat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Columns of `a` selected by `cols`.
pub fn columns(a: MatRef<'_, c64>, cols: &[usize]) -> Mat<c64> {
    Mat::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

pub fn col_to_vec(a: MatRef<'_, c64>, j: usize) -> Vec<c64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn vec_to_col(x: &[c64]) -> Mat<c64> {
    Mat::from_fn(x.len(), 1, |i, _| x[i])
}

/// Forces exact symmetry by averaging with the transpose.
pub fn symmetrize(a: &mut Mat<c64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = (a[(i, j)] + a[(j, i)]) * 0.5;
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct LuFactor {
    l: Mat<c64>,
    u: Mat<c64>,
    perm: Vec<usize>,
}

impl LuFactor {
    pub fn new(a: MatRef<'_, c64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "LU of a non-square matrix");
        let lu = a.partial_piv_lu();
        let (fwd, _) = lu.P().arrays();
        LuFactor {
            l: lu.L().to_owned(),
            u: lu.U().to_owned(),
            perm: fwd.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Smallest pivot modulus, a cheap singularity indicator.
    pub fn min_pivot(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.u[(i, i)].norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_pivot(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.u[(i, i)].norm())
            .fold(0.0, f64::max)
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[c64]) -> Vec<c64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y: Vec<c64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..n {
            let yj = y[j];
            if yj == ZERO {
                continue;
            }
            for i in (j + 1)..n {
                y[i] -= self.l[(i, j)] * yj;
            }
        }
        for j in (0..n).rev() {
            y[j] /= self.u[(j, j)];
            let yj = y[j];
            if yj == ZERO {
                continue;
            }
            for i in 0..j {
                y[i] -= self.u[(i, j)] * yj;
            }
        }
        y
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: MatRef<'_, c64>) -> Mat<c64> {
        let mut out = Mat::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let x = self.solve(&col_to_vec(b, j));
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }
}

/// Singular value decomposition `A = U diag(s) V^H` with real, descending `s`.
pub struct SvdParts {
    pub u: Mat<c64>,
    pub s: Vec<f64>,
    pub v: Mat<c64>,
}

fn svd_impl(a: MatRef<'_, c64>, thin: bool) -> Result<SvdParts> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(SvdParts {
            u: Mat::zeros(a.nrows(), if thin { 0 } else { a.nrows() }),
            s: Vec::new(),
            v: Mat::zeros(a.ncols(), if thin { 0 } else { a.ncols() }),
        });
    }
    let svd = if thin { Svd::new_thin(a) } else { Svd::new(a) }
        .map_err(|e| GspError::Singular(format!("svd failed: {e:?}")))?;
    let k = a.nrows().min(a.ncols());
    let diag = svd.S().column_vector();
    let s = (0..k).map(|i| diag[i].re).collect();
    Ok(SvdParts {
        u: svd.U().to_owned(),
        s,
        v: svd.V().to_owned(),
    })
}

pub fn svd_thin(a: MatRef<'_, c64>) -> Result<SvdParts> {
    svd_impl(a, true)
}

pub fn svd_full(a: MatRef<'_, c64>) -> Result<SvdParts> {
    svd_impl(a, false)
}

pub fn singular_values(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values()
        .map_err(|e| GspError::Singular(format!("svd failed: {e:?}")))
}

/// Smallest of the `min(rows, cols)` singular values.
pub fn sigma_min(a: MatRef<'_, c64>) -> Result<f64> {
    Ok(singular_values(a)?.last().copied().unwrap_or(0.0))
}

/// Number of singular values above `rel_cut * s_max`.
fn numerical_rank(s: &[f64], rel_cut: f64) -> usize {
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().take_while(|&&x| x > rel_cut * smax).count()
}

/// Orthonormal basis (columns) of the range of `a`.
pub fn range_basis(a: MatRef<'_, c64>, rel_cut: f64) -> Result<Mat<c64>> {
    let svd = svd_thin(a)?;
    let r = numerical_rank(&svd.s, rel_cut);
    Ok(svd.u.subcols(0, r).to_owned())
}

/// Orthonormal basis (columns) of the null space of `a`.
pub fn null_space(a: MatRef<'_, c64>, rel_cut: f64) -> Result<Mat<c64>> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Ok(identity(n));
    }
    let svd = svd_full(a)?;
    let r = numerical_rank(&svd.s, rel_cut);
    Ok(svd.v.subcols(r, n - r).to_owned())
}

/// Moore-Penrose pseudo-inverse with relative singular value cutoff.
pub fn pinv(a: MatRef<'_, c64>, rel_cut: f64) -> Result<Mat<c64>> {
    let svd = svd_thin(a)?;
    let r = numerical_rank(&svd.s, rel_cut);
    let mut out = Mat::<c64>::zeros(a.ncols(), a.nrows());
    for k in 0..r {
        let inv = 1.0 / svd.s[k];
        for j in 0..a.nrows() {
            let uk = svd.u[(j, k)].conj() * inv;
            for i in 0..a.ncols() {
                out[(i, j)] += svd.v[(i, k)] * uk;
            }
        }
    }
    Ok(out)
}

/// Full-column-rank least squares `argmin ||A x - b||`; `None` when the
/// numerical rank (relative cutoff `rel_cut`) is below the column count.
pub fn lstsq(a: MatRef<'_, c64>, b: &[c64], rel_cut: f64) -> Option<Vec<c64>> {
    let svd = svd_thin(a).ok()?;
    if a.ncols() == 0 || numerical_rank(&svd.s, rel_cut) < a.ncols() {
        return None;
    }
    let utb = mat_hvec(svd.u.as_ref(), b);
    let scaled: Vec<c64> = utb.iter().zip(&svd.s).map(|(c, s)| c / *s).collect();
    Some(mat_vec(svd.v.as_ref(), &scaled))
}

/// Real analogue of [`lstsq`].
pub fn lstsq_real(a: MatRef<'_, f64>, b: &[f64], rel_cut: f64) -> Option<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return None;
    }
    let svd = Svd::new_thin(a).ok()?;
    let k = a.ncols().min(a.nrows());
    let s: Vec<f64> = (0..k).map(|i| svd.S().column_vector()[i]).collect();
    if numerical_rank(&s, rel_cut) < a.ncols() {
        return None;
    }
    let (u, v) = (svd.U(), svd.V());
    let mut x = vec![0.0; a.ncols()];
    for c in 0..k {
        let mut dot = 0.0;
        for i in 0..a.nrows() {
            dot += u[(i, c)] * b[i];
        }
        let coef = dot / s[c];
        for (r, xr) in x.iter_mut().enumerate() {
            *xr += v[(r, c)] * coef;
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix() -> Mat<c64> {
        Mat::from_fn(4, 4, |i, j| {
            c64::new(
                ((i * 7 + j * 3) % 5) as f64 - 1.5 + if i == j { 4.0 } else { 0.0 },
                ((i + 2 * j) % 3) as f64 - 1.0,
            )
        })
    }

    #[test]
    fn lu_solve_matches_product() {
        let a = test_matrix();
        let b: Vec<c64> = (0..4).map(|i| c64::new(i as f64, 1.0 - i as f64)).collect();
        let x = LuFactor::new(a.as_ref()).solve(&b);
        let back = mat_vec(a.as_ref(), &x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let a = test_matrix();
        let p = pinv(a.as_ref(), 1e-12).unwrap();
        let prod = &a * &p;
        let err = frobenius((&prod - identity(4)).as_ref());
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn lstsq_recovers_exact_solution_and_flags_rank() {
        let a = test_matrix();
        let x: Vec<c64> = (0..4).map(|i| c64::new(1.0, i as f64)).collect();
        let b = mat_vec(a.as_ref(), &x);
        let got = lstsq(a.as_ref(), &b, 1e-12).unwrap();
        assert!(got.iter().zip(&x).all(|(u, v)| (u - v).norm() < 1e-10));
        let r = Mat::from_fn(3, 2, |i, _| i as f64 + 1.0);
        assert!(lstsq_real(r.as_ref(), &[1.0, 2.0, 3.0], 1e-10).is_none());
    }

    #[test]
    fn null_space_of_rank_one() {
        let a = Mat::from_fn(2, 3, |i, j| c64::new((i + 1) as f64 * (j + 1) as f64, 0.0));
        let ns = null_space(a.as_ref(), 1e-10).unwrap();
        assert_eq!(ns.ncols(), 2);
        let prod = &a * &ns;
        assert!(frobenius(prod.as_ref()) < 1e-12);
    }
}
