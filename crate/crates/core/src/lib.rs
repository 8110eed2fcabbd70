//! Multiple rotation averaging under the chordal metric, with a-posteriori
//! certificates of global optimality.
//!
//! Given a connected graph of relative rotation measurements
//! `R̃_ij ∈ SO(3)`, the library estimates absolute rotations
//! `R_1, …, R_n` minimizing the chordal cost `Σ ‖R_i R̃_ij − R_j‖²_F`.
//! The solver ([`sdp::solve_dd`]) runs block-coordinate descent on a
//! semidefinite relaxation whose blocks admit closed-form updates, and the
//! certifier ([`certificate::certify`]) checks strong duality of the
//! returned stationary point via the spectrum of the Lagrangian Hessian
//! `Λ* − R̃`, so a successful run proves the solution is a global optimum —
//! not merely a local one.
//!
//! Module layout:
//! - [`so3`]: rotation primitives and closed-form 3×3 symmetric kernels,
//! - [`graph`]: measurement graphs and spectral (Fiedler-value) noise bounds,
//! - [`problem`]: cost assembly, objectives, residuals,
//! - [`sdp`]: the block-coordinate solver and solution rounding,
//! - [`certificate`]: Lagrange multipliers and optimality verdicts,
//! - [`local`]: Levenberg–Marquardt refinement on the rotation manifold,
//! - [`synth`]: reproducible synthetic instance generation,
//! - [`io`]: problem-file parsing/serialization and JSON reports.

use thiserror::Error;

pub mod certificate;
mod eig;
pub mod graph;
pub mod io;
pub mod local;
pub mod problem;
pub mod sdp;
pub mod so3;
pub mod synth;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller handed in something structurally invalid (bad vertex index,
    /// duplicate edge, non-unit axis, mismatched dimensions, …).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The input is structurally fine but numerically degenerate
    /// (rank-deficient matrix where full rank is required).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A matrix required to be positive semidefinite is not.
    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    /// The measurement graph is disconnected; spectral bounds and
    /// certificates are defined only for connected graphs.
    #[error("measurement graph is disconnected")]
    Disconnected,

    /// A bound's preconditions do not hold for this instance.
    #[error("bound inapplicable: {0}")]
    BoundInapplicable(String),

    /// Rounding the relaxation iterate back to rotations failed.
    #[error("rounding failed: {0}")]
    Rounding(String),

    /// The solver reached an invalid internal state.
    #[error("solver state error: {0}")]
    SolverState(String),

    /// A problem file violates the grammar; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
