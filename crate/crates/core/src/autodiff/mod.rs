//! Forward and reverse automatic differentiation.
//!
//! Model code is generic over [`Real`]. Forward levels are [`Dual`] numbers
//! (nestable), the reverse level is a [`Var`] recorded on a [`Tape`]. The
//! sweep functions in this module compose them: at most one reverse sweep,
//! always last.

mod dual;
mod plan;
mod scalar;
mod sweep;
mod tape;

use thiserror::Error;

pub use dual::{seed, Dual};
pub use plan::{run_plan, Sweep, SweepMode, SweepPlan, VariableBlock, MAX_FORWARD_LEVELS};
pub use scalar::{weighted_sum, Real};
pub use sweep::{
    block_hessian, check_block_structure, dense_hessian, fwd_sweep, gradient, hessian_contraction_gradient,
    hessian_vector, rev_sweep, strided_tangent, third_order_diag, ScalarField, SweepCounter, VectorField,
};
pub use tape::{Op, Tape, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value produced by `{op}` at tape node {node}")]
    NonFinite { op: Op, node: usize },
    #[error("tape has already been swept; record again before another reverse sweep")]
    TapeConsumed,
    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),
    #[error("`{operation}` needs {required} derivative levels but the model supports {supported}")]
    Capability {
        operation: String,
        required: usize,
        supported: usize,
    },
    #[error("block size {m} does not divide latent dimension {n}")]
    NotDivisible { n: usize, m: usize },
}
