//! Exact and approximate worst-case evaluation for k stocks, plus
//! fixed-k portfolio search.
//!
//! The exact route models the feasible joint tables directly as a linear
//! program over the table entries (polynomial in m^k, exponential in k).
//! The striping route pairs stocks along a balanced binary tree, replacing
//! each pair's table by parallel-band sums to keep the program polynomial
//! at an additive cost in the result. On the cent lattice the bands align
//! with every attainable partial return, so the same pipeline is exact.

mod exact;
mod search;
mod simplex;
mod striping;

pub use exact::{lp_region_extremum, lp_worst_case_exact, lp_worst_case_exact_with_budget};
pub use search::{optimal_portfolio_fixed_k, SearchMode};
pub use simplex::{
    max_constraint_violation, solve_lp, standardize, Constraint, ConstraintOp, LpProblem,
    LpSolution, StandardForm,
};
pub use striping::{
    build_striping_plan, cents_worst_case_exact, striping_worst_case, StripingPlan,
};

/// Default cap on the number of exact-LP table entries (m^k).
pub const DEFAULT_ENTRY_BUDGET: usize = 1_000_000;
