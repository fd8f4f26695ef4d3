use faer::{c64, Mat, MatRef};

use crate::config::Tolerances;
use crate::error::{GspError, Result};
use crate::grid_model::{partition_indices, GridCase};
use crate::linalg::{self, LuFactor};
use crate::spectral::SpectralOperator;

/// `S = Y + diag([y_g + y_sh^g; y_sh^l])` in file bus order.
pub fn gso_matrix(case: &GridCase) -> Mat<c64> {
    let mut s = case.network_matrix();
    let (gens, _) = partition_indices(case);
    for (&g, y) in gens.iter().zip(case.gen_admittance()) {
        s[(g, g)] += y;
    }
    s
}

/// The grid shift operator with its ordered eigendecomposition.
pub fn build_gso(case: &GridCase) -> Result<SpectralOperator> {
    let op = SpectralOperator::from_matrix(gso_matrix(case))?;
    if !op.is_invertible() {
        return Err(GspError::Singular(format!(
            "grid GSO has min |lambda| = {:.3e}",
            op.diagnostics().min_abs_eigenvalue
        )));
    }
    Ok(op)
}

fn complement(n: usize, keep: &[usize]) -> Result<Vec<usize>> {
    let mut mask = vec![false; n];
    for &k in keep {
        if k >= n {
            return Err(GspError::invalid("keep", format!("index {k} out of range for {n} nodes")));
        }
        if mask[k] {
            return Err(GspError::invalid("keep", format!("index {k} repeated")));
        }
        mask[k] = true;
    }
    Ok((0..n).filter(|&i| !mask[i]).collect())
}

/// `S_MM - S_MMc S_McMc^{-1} S_MMc^T` for the kept index set `M`.
pub fn schur_complement(s: MatRef<'_, c64>, keep: &[usize], tol: &Tolerances) -> Result<Mat<c64>> {
    let n = s.nrows();
    let elim = complement(n, keep)?;
    let s_mm = linalg::submatrix(s, keep, keep);
    if elim.is_empty() {
        return Ok(s_mm);
    }
    let s_cc = linalg::submatrix(s, &elim, &elim);
    let lu = LuFactor::new(s_cc.as_ref());
    let scale = s_cc.col_iter().flat_map(|c| c.iter()).map(|z| z.norm()).fold(0.0, f64::max);
    if !(lu.min_pivot() > tol.singularity * scale) {
        return Err(GspError::Singular("eliminated block of the Kron reduction".into()));
    }
    let s_mc = linalg::submatrix(s, keep, &elim);
    let x = lu.solve_mat(s_mc.transpose());
    let mut red = s_mm - &s_mc * &x;
    linalg::symmetrize(&mut red);
    Ok(red)
}

/// Kron reduction of the operator onto `keep`, with its own spectrum.
pub fn kron_reduce(op: &SpectralOperator, keep: &[usize]) -> Result<SpectralOperator> {
    let red = schur_complement(op.matrix(), keep, op.tolerances())?;
    SpectralOperator::with_tolerances(red, *op.tolerances())
}

/// The generator-only network seen by the internal sources.
#[derive(Debug, Clone)]
pub struct GeneratorGso {
    /// `M^{-1/2} Y_red M^{-1/2}` with a real orthonormal basis.
    pub op: SpectralOperator,
    /// Susceptance-like Laplacian part, `-Im(Sh)`.
    pub y_red: Mat<f64>,
    /// Conductance-like part `Re(Sh)`, dropped from the operator.
    pub e_red: Mat<f64>,
    pub mass: Vec<f64>,
}

impl GeneratorGso {
    /// `||E_red||_F / ||Y_red||_F`.
    pub fn neglected_ratio(&self) -> f64 {
        let fro = |m: &Mat<f64>| m.col_iter().flat_map(|c| c.iter()).map(|v| v * v).sum::<f64>().sqrt();
        fro(&self.e_red) / fro(&self.y_red)
    }
}

/// Eliminates every grid bus, with loads as constant admittances, leaving
/// the internal generator nodes.
pub fn build_generator_gso(case: &GridCase) -> Result<GeneratorGso> {
    let (gens, loads) = partition_indices(case);
    if gens.is_empty() {
        return Err(GspError::invalid("case", "no generator buses"));
    }
    let tol = Tolerances::from_env();
    let mut s_ci = gso_matrix(case);
    for (&l, y) in loads.iter().zip(case.load_admittance()) {
        s_ci[(l, l)] += y;
    }
    let lu = LuFactor::new(s_ci.as_ref());
    let scale = s_ci.col_iter().flat_map(|c| c.iter()).map(|z| z.norm()).fold(0.0, f64::max);
    if !(lu.min_pivot() > tol.singularity * scale) {
        return Err(GspError::Singular("grid matrix with load admittances".into()));
    }
    let n = case.n_buses();
    let ng = gens.len();
    let d: Vec<c64> = case
        .gen_admittance()
        .iter()
        .zip(case.shunt_gen())
        .map(|(y, sh)| y + sh)
        .collect();
    let rhs = Mat::<c64>::from_fn(n, ng, |i, k| if i == gens[k] { linalg::ONE } else { linalg::ZERO });
    let inv_cols = lu.solve_mat(rhs.as_ref());
    let mut y_red = Mat::<f64>::zeros(ng, ng);
    let mut e_red = Mat::<f64>::zeros(ng, ng);
    for a in 0..ng {
        for b in 0..ng {
            let sym = 0.5 * (inv_cols[(gens[a], b)] + inv_cols[(gens[b], a)]);
            let mut sh = -d[a] * sym * d[b];
            if a == b {
                sh += d[a];
            }
            y_red[(a, b)] = -sh.im;
            e_red[(a, b)] = sh.re;
        }
    }
    let mass = case.gen_mass();
    let s_red = Mat::<f64>::from_fn(ng, ng, |a, b| y_red[(a, b)] / (mass[a] * mass[b]).sqrt());
    let op = SpectralOperator::from_real_symmetric(s_red.as_ref(), tol)?;
    Ok(GeneratorGso { op, y_red, e_red, mass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{J, ZERO};

    #[test]
    fn path_laplacian_reduction() {
        let s = Mat::<c64>::from_fn(3, 3, |i, j| {
            if i == j {
                c64::new(2.0, 0.0)
            } else if i.abs_diff(j) == 1 {
                c64::new(-1.0, 0.0)
            } else {
                ZERO
            }
        });
        let red = schur_complement(s.as_ref(), &[0, 2], &Tolerances::default()).unwrap();
        let want = [[1.5, -0.5], [-0.5, 1.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((red[(i, j)] - c64::new(want[i][j], 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn keeping_everything_is_identity() {
        let s = Mat::<c64>::from_fn(3, 3, |i, j| c64::new((i + j) as f64, (i * j) as f64 + 1.0));
        let red = schur_complement(s.as_ref(), &[0, 1, 2], &Tolerances::default()).unwrap();
        assert_eq!(red, s);
    }

    #[test]
    fn singular_interior_block_rejected() {
        let s = Mat::<c64>::from_fn(2, 2, |i, j| if i == 0 && j == 0 { J } else { ZERO });
        assert!(schur_complement(s.as_ref(), &[0], &Tolerances::default()).is_err());
    }
}
