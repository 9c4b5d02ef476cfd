//! Joint optimization of a kernel-density mode and per-view inlierness
//! scores, plus plain MeanShift.

mod inlierness;
mod mode;
mod mta;
mod objective;
mod params;

pub use inlierness::{
    cccp_y_update, solve_y, y_fixed_point_residual, InliernessVector, YPhase, YUpdate,
};
pub use mode::{classic_meanshift, fixed_point_m_update, solve_m, MPhase, MUpdate, MeanShiftRun, ModeState};
pub use mta::{
    mta_solve, ConvergenceTrace, MtaProblem, MtaSolution, OuterRecord, SolverFlag,
    DESCENT_TOLERANCE, MONOTONICITY_TOLERANCE,
};
pub use objective::{entropy, objective, objective_from_kernels};
pub use params::{Filtering, Hyperparams, ModeUpdate};
