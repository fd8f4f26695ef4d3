//! Numerical tolerances shared by the spectral routines.
//!
//! All thresholds live in one record so property tests and the CLI can
//! tighten or loosen them in one place. Environment overrides:
//! `GRIDGSP_TOL_SPECTRAL`, `GRIDGSP_TOL_ORTHO`, `GRIDGSP_TOL_SINGULAR`,
//! `GRIDGSP_TOL_QUASI_NULL`.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Bound on `||S U - U diag(L)||_F / ||S||_F`.
    pub spectral_residual: f64,
    /// Bound on `||U^T U - I||_F`.
    pub orthogonality: f64,
    /// Relative singularity threshold for `min |lambda| / max |lambda|`.
    pub singularity: f64,
    /// Minimum `|u^T u|` for a unit-norm eigenvector before it is
    /// declared quasi-null.
    pub quasi_null: f64,
    /// Relative gap under which eigenvalues are treated as one cluster.
    pub cluster: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            spectral_residual: 1e-10,
            orthogonality: 1e-8,
            singularity: 1e-12,
            quasi_null: 1e-8,
            cluster: 1e-7,
        }
    }
}

impl Tolerances {
    /// Defaults with any `GRIDGSP_TOL_*` environment overrides applied.
    pub fn from_env() -> Self {
        let mut tol = Tolerances::default();
        let read = |name: &str| -> Option<f64> {
            std::env::var(name)
                .ok()
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite() && *v > 0.0)
        };
        if let Some(v) = read("GRIDGSP_TOL_SPECTRAL") {
            tol.spectral_residual = v;
        }
        if let Some(v) = read("GRIDGSP_TOL_ORTHO") {
            tol.orthogonality = v;
        }
        if let Some(v) = read("GRIDGSP_TOL_SINGULAR") {
            tol.singularity = v;
        }
        if let Some(v) = read("GRIDGSP_TOL_QUASI_NULL") {
            tol.quasi_null = v;
        }
        tol
    }
}
