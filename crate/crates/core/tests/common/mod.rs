//! Shared helpers for the integration test suites.
#![allow(dead_code)] // each suite uses its own subset

use consensus_dynamics::{simulate, RhoSequence, Scenario, SolverConfig, Trajectory};

pub fn rel_close(got: f64, expect: f64, tol: f64) -> bool {
    (got - expect).abs() <= tol * expect.abs().max(1e-300)
}

/// Absolute comparison with a floor: positions are O(1) in every scenario,
/// so "relative per coordinate" uses max(1, |expected|) as the scale.
pub fn coord_close(got: f64, expect: f64, tol: f64) -> bool {
    (got - expect).abs() <= tol * expect.abs().max(1.0)
}

/// A modest simulation horizon roster covering all built-in scenarios.
pub fn scenario_roster() -> Vec<Scenario> {
    vec![
        consensus_dynamics::build_ultimate_counterexample(10).unwrap(),
        consensus_dynamics::build_three_agent(&RhoSequence::constant(1.0), 10).unwrap(),
        consensus_dynamics::build_three_agent(&RhoSequence::Linear, 10).unwrap(),
        consensus_dynamics::build_three_agent(&RhoSequence::power(2.0), 10).unwrap(),
        consensus_dynamics::build_odd_chain(2, &RhoSequence::constant(1.0), 6).unwrap(),
        consensus_dynamics::build_odd_chain(5, &RhoSequence::power(0.4), 4).unwrap(),
        consensus_dynamics::build_two_agent_reciprocal(2).unwrap(),
        consensus_dynamics::build_two_agent_constant(10).unwrap(),
    ]
}

pub fn run_scenario(sc: &Scenario) -> Trajectory {
    simulate(
        &sc.system,
        &sc.x0,
        sc.system.domain_start(),
        sc.horizon,
        &SolverConfig::default(),
    )
    .unwrap_or_else(|e| panic!("{} failed to simulate: {e}", sc.name))
}
