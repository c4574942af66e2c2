//! Prepared inputs shared by the benchmark suite.

use consensus_dynamics::{
    build_odd_chain, build_three_agent, generator_matrix, DenseMatrix, RhoSequence, Scenario,
};

/// The 11-agent chain with unit gains.
pub fn eleven_agent_chain(periods: usize) -> Scenario {
    build_odd_chain(5, &RhoSequence::constant(1.0), periods).expect("valid chain")
}

/// The alternating three-agent line with linearly growing gains.
pub fn three_agent_linear(periods: usize) -> Scenario {
    build_three_agent(&RhoSequence::Linear, periods).expect("valid line")
}

/// An 11x11 generator matrix scaled to a typical integration step.
pub fn chain_step_generator() -> DenseMatrix {
    let sc = eleven_agent_chain(1);
    generator_matrix(&sc.system, 0.5)
        .expect("in domain")
        .scale(0.1)
}
