//! Numerical laboratory for the p-Laplacian Lichnerowicz equation
//!
//! ```text
//! Δ_p u + h u^(p-1) = f u^(p*-1) + a u^(-p*-1)
//! ```
//!
//! on the unit flat torus, where `Δ_p u = -div(|∇u|^(p-2) ∇u)` and `h < 0`.
//! Solutions are obtained from the subcritical regularization
//! `Δ_p u + h u^(p-1) = f u^(q-1) + a u / (u² + ε)^(q/2+1)` by constrained
//! energy minimization, a numerical mountain pass and continuation in `(ε, q)`.

pub mod eigen;
pub mod energy;
pub mod expr;
pub mod field_io;
pub mod minimize;
pub mod solver;
pub mod thresholds;
pub mod torus;

pub use energy::{ProblemData, SubcriticalParams};
pub use torus::{ScalarField, TorusGrid, VectorField};

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("singular term diverges at node {0}")]
    Singular(usize),
    #[error("infeasible constraint: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Expr(#[from] expr::ExprError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("hypothesis gate failed: {0}")]
    Gate(String),
}
