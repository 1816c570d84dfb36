//! Spectral and linear-programming primitives for Metzler and nonnegative
//! matrices.

pub mod exact;
mod lp;
mod metzler;
mod nullspace;

use thiserror::Error;

pub use lp::{solve_strict_feasibility, FeasibilityProblem, LinearProgram, LpOutcome, Relation};
pub use metzler::{
    find_cycle, inverse_support, strong_components, is_hurwitz_metzler, is_metzler, pf_eigenvalue, spectral_radius_nonneg,
    HurwitzCheck, HurwitzVerdict, SpectralRadius, MARGINAL_BAND, METZLER_TOL,
};
pub use nullspace::left_nullspace_basis;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Metzler: entry ({row}, {col}) = {value}")]
    NotMetzler { row: usize, col: usize, value: f64 },
    #[error("matrix is not nonnegative: entry ({row}, {col}) = {value}")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("LP and eigenvalue disagree: lambda_pf = {lambda_pf}, LP feasible = {lp_feasible}")]
    NumericalInconsistency { lambda_pf: f64, lp_feasible: bool },
    #[error("LP relaxation is unbounded; the encoding lacks a normalization")]
    UnboundedRelaxation,
    #[error("LP solution violates its constraints by {violation}")]
    InaccurateSolution { violation: f64 },
}
