//! Exact solver for the planners' mixed-integer programs.

mod lp;
mod mixed;
mod oracle;

pub use lp::{
    solve_lp, Constraint, LinearProgram, LpError, LpSolution, LpStatus, Relation, FEAS_TOL,
};
pub use mixed::{
    improves, solve_mixed, solve_mixed_capped, stop_vector_order, Evaluation, MixedError,
    MixedPlanProblem, MixedPlanSolution, MixedStatus, PlanMode, StopData, DEFAULT_ENUMERATION_CAP,
    TIE_TOL,
};
pub use oracle::{brute_force_oracle, ORACLE_MAX_HORIZON};
