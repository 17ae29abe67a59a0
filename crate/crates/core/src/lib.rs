//! Rank-based loss minimisation for linear binary classifiers.
//!
//! The solver is a proximal ADMM on the split `z = Dw`, `D = −diag(y)X`:
//! the z-step is a chain-constrained separable program solved by a
//! pool-adjacent-violators method, the w-step a strongly convex regularised
//! least-squares problem. A smoothed variant replaces the regulariser by its
//! Moreau envelope.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod baselines;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod oracle;
pub mod pava;
pub mod problem;
pub mod regularizers;
pub mod trace;
pub mod weights;
pub mod wsolver;

pub use admm::{admm_solve, sadmm_solve, IterationTrace, ScheduleSpec, SolveResult, SolverConfig, SolverState};
pub use error::{Error, Result};
pub use linalg::{CsrMatrix, DesignMatrix};
pub use losses::LossKind;
pub use pava::{solve_z_subproblem, Block, BlockPartition};
pub use problem::Problem;
pub use regularizers::{MoreauParams, RegularizerSpec};
pub use weights::{ResolvedWeights, WeightScheme};
