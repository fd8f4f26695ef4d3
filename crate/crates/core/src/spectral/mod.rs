//! Graph shift operators of the grid, their ordered complex-orthogonal
//! eigendecompositions, and graph-frequency filtering.

mod gso;
mod operator;

pub use gso::{build_generator_gso, build_gso, gso_matrix, kron_reduce, schur_complement, GeneratorGso};
pub use operator::{FilterSpec, SpectralDiagnostics, SpectralOperator};
