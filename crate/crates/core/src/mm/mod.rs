//! Majorization-minimization solver for the weighted hybrid objective.
//!
//! Each iteration replaces every residual with a quadratic upper bound that
//! touches it at the current iterate. The bounds share the Hessian structure
//! `diag(z, z, z + z̃)`, so the surrogate has a closed-form minimizer and the
//! objective can only go down.

pub mod bounds;
pub mod solver;
pub mod surrogate;

pub use bounds::{bound_neg_norm, bound_norm_quadratic, bound_square_diff};
pub use solver::{assemble, assemble_kind, mm_step, solve, Init, MmState, Solution, SolverConfig, Termination};
pub use surrogate::{
    aoa_split_value, surrogate_aoa, surrogate_rss, surrogate_tdoa, surrogate_toa, tdoa_split_value, AoaAux,
    DiagQuadratic, TdoaAux,
};
