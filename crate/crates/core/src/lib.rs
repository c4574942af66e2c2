//! Simulation and analysis of continuous-time multi-agent consensus under
//! time-varying interaction weights.
//!
//! The crate provides:
//!
//! - [`weights`]: piecewise weight schedules with exact integrals and cut
//!   aggregates over agent subsets;
//! - [`dynamics`]: a Caratheodory ODE integrator for the switched averaging
//!   dynamics, stepping by exact matrix exponentials on constant stretches;
//! - [`ordering`]: the order-preserving relabeled trajectory and executable
//!   checks of its structural properties;
//! - [`analysis`]: reciprocity ratios, the unit-influence time rescaling,
//!   per-period contraction bounds and connectivity/balance checkers;
//! - [`scenarios`]: built-in example systems with closed-form oracles.
//!
//! All types are immutable after construction and safe to share across
//! threads; simulations and analyses are pure functions of their inputs.

// Negated comparisons like `!(a < b)` reject NaN inputs where the positive
// comparison would accept them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod ordering;
pub mod scenarios;
pub mod weights;

pub use analysis::{
    check_cut_balance, contraction_audit, contraction_bound, max_ratio, moreau_edge_set,
    persistent_connectivity_report, product_bound, rate_bound, ratio_r_s, rescaling_sequence,
    running_max_ratio, slow_divergence_check, BoundReport, CutBalanceReport, MoreauReport,
    PersistenceReport, RatioValue, RescalingSequence, SamplingPlan, SlowDivergenceReport,
    TrendVerdict,
};
pub use dynamics::{
    detect_consensus, diameter, generator_matrix, simulate, ConsensusOutcome, SolverConfig,
    SolverMethod, State, Trajectory,
};
pub use error::{Error, Result};
pub use linalg::{expm, DenseMatrix};
pub use ordering::{
    blocks_constant_on, constancy_windows, cut_ratio_bound_check, lyapunov_gap_check,
    movement_certificate, ordered_view, sort_permutation, CutRatioReport, GapBounds,
    MovementCertificate, MovementSearch, OrderedView, SortPermutation,
};
pub use scenarios::{
    build_odd_chain, build_three_agent, build_two_agent_constant, build_two_agent_reciprocal,
    build_ultimate_counterexample, lambda_coefficient, oracle_three_agent_step,
    oracle_ultimate_gap, RhoSequence, Scenario, ScenarioName, ScenarioSpec,
};
pub use weights::{
    AgentSet, SegmentForm, SystemBuilder, SystemDefinition, TimeSegment, WeightFunction,
};
