//! Built-in example systems and their closed-form oracles.
//!
//! Schedules whose segments depend on a period index are materialized up to a
//! requested number of periods; the underlying definitions extend to all
//! periods, so pick the horizon before building.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{SystemDefinition, TimeSegment, WeightFunction};

/// The per-period gain sequence used by the switched scenarios.
/// Values are at least 1 and non-decreasing in the period index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhoSequence {
    Constant {
        value: f64,
    },
    /// `(1 + p) ^ exponent`.
    Power {
        exponent: f64,
    },
    /// `max(1, p)`; the floor at 1 keeps the first period admissible while
    /// preserving the linear growth that matters asymptotically.
    Linear,
    Custom {
        values: Vec<f64>,
    },
}

impl RhoSequence {
    pub fn constant(value: f64) -> Self {
        RhoSequence::Constant { value }
    }

    pub fn power(exponent: f64) -> Self {
        RhoSequence::Power { exponent }
    }

    pub fn value(&self, p: usize) -> f64 {
        match self {
            RhoSequence::Constant { value } => *value,
            RhoSequence::Power { exponent } => (1.0 + p as f64).powf(*exponent),
            RhoSequence::Linear => (p as f64).max(1.0),
            RhoSequence::Custom { values } => values[p.min(values.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::OutOfRange(msg));
        match self {
            RhoSequence::Constant { value } => {
                if !(*value >= 1.0) || !value.is_finite() {
                    return bad(format!("constant rho must be >= 1, got {value}"));
                }
            }
            RhoSequence::Power { exponent } => {
                if !(*exponent >= 0.0) || !exponent.is_finite() {
                    return bad(format!("power rho needs exponent >= 0, got {exponent}"));
                }
            }
            RhoSequence::Linear => {}
            RhoSequence::Custom { values } => {
                if values.is_empty() {
                    return bad("custom rho sequence is empty".to_string());
                }
                for pair in values.windows(2) {
                    if !(pair[0] <= pair[1]) {
                        return bad("custom rho sequence must be non-decreasing".to_string());
                    }
                }
                if !(values[0] >= 1.0) || values.iter().any(|v| !v.is_finite()) {
                    return bad("custom rho values must be finite and >= 1".to_string());
                }
            }
        }
        Ok(())
    }
}

/// A built scenario: the system plus the metadata the analyses need.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub system: Arc<SystemDefinition>,
    /// Default initial positions.
    pub x0: Vec<f64>,
    /// Schedule period length, when the schedule is periodic.
    pub period: Option<f64>,
    /// End of the generated schedule (simulate within this horizon).
    pub horizon: f64,
}

/// Names understood by the CLI configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    UltimateCounterexample,
    ThreeAgent,
    OddChain,
    TwoAgentReciprocal,
    TwoAgentConstant,
}

/// A declarative scenario description, the vocabulary of run configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    /// Chain half-width for `odd_chain` (n = 2m + 1); defaults to 5.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub rho: Option<RhoSequence>,
    /// Initial positions; scenario defaults are used when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Horizon measured in schedule periods.
    pub periods: usize,
}

impl ScenarioSpec {
    pub fn build(&self) -> Result<Scenario> {
        if self.periods == 0 {
            return Err(Error::OutOfRange("periods must be >= 1".to_string()));
        }
        let rho = self
            .rho
            .clone()
            .unwrap_or(RhoSequence::Constant { value: 1.0 });
        let mut scenario = match self.name {
            ScenarioName::UltimateCounterexample => build_ultimate_counterexample(self.periods)?,
            ScenarioName::ThreeAgent => build_three_agent(&rho, self.periods)?,
            ScenarioName::OddChain => build_odd_chain(self.m.unwrap_or(5), &rho, self.periods)?,
            ScenarioName::TwoAgentReciprocal => build_two_agent_reciprocal(self.periods)?,
            ScenarioName::TwoAgentConstant => build_two_agent_constant(self.periods)?,
        };
        if let Some(x0) = &self.x0 {
            let n = scenario.system.agent_count();
            if x0.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "x0 has length {}, scenario has {n} agents",
                    x0.len()
                )));
            }
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::OutOfRange("x0 entries must be finite".to_string()));
            }
            scenario.x0 = x0.clone();
        }
        Ok(scenario)
    }
}

fn constant_schedule(intervals: &[(f64, f64, f64)]) -> WeightFunction {
    let segments = intervals
        .iter()
        .map(|&(a, b, c)| TimeSegment::constant(a, b, c).expect("valid schedule segment"))
        .collect();
    WeightFunction::new(segments).expect("sorted schedule segments")
}

/// Two agents with symmetric unit bursts `[k, k + 2^-(k+1))`.
///
/// The burst widths decay geometrically, so the total interaction mass is
/// finite: the pair keeps interacting forever but never accumulates enough
/// influence to close the gap. Bursts narrower than one ulp of `k` are
/// dropped; their mass is below 2^-46 and cannot be represented anyway.
pub fn build_ultimate_counterexample(periods: usize) -> Result<Scenario> {
    let mut intervals = Vec::new();
    for k in 0..periods {
        let start = k as f64;
        let end = start + 0.5f64.powi(k as i32 + 1);
        if end > start {
            intervals.push((start, end, 1.0));
        }
    }
    let system = SystemDefinition::builder(2)
        .weight(0, 1, constant_schedule(&intervals))
        .weight(1, 0, constant_schedule(&intervals))
        .build()?;
    Ok(Scenario {
        name: "ultimate_counterexample".to_string(),
        system: Arc::new(system),
        x0: vec![0.0, 1.0],
        period: Some(1.0),
        horizon: periods as f64,
    })
}

/// Gap between the two agents of the ultimate counterexample at integer time
/// `k`: `e^(-2 (1 - 2^-k)) * gap0`, which stays above `e^-2 * gap0`.
pub fn oracle_ultimate_gap(k: u32, gap0: f64) -> f64 {
    gap0 * (-2.0 * (1.0 - 0.5f64.powi(k as i32))).exp()
}

/// Three agents on an alternating line: on `[2p, 2p+1)` agents 1 and 2
/// interact with weights 1 and rho_p while agent 3 is frozen; on
/// `[2p+1, 2p+2)` agents 2 and 3 interact while agent 1 is frozen.
pub fn build_three_agent(rho: &RhoSequence, periods: usize) -> Result<Scenario> {
    rho.validate()?;
    let mut w01 = Vec::new();
    let mut w10 = Vec::new();
    let mut w12 = Vec::new();
    let mut w21 = Vec::new();
    for p in 0..periods {
        let base = 2.0 * p as f64;
        let r = rho.value(p);
        w01.push((base, base + 1.0, 1.0));
        w10.push((base, base + 1.0, r));
        w12.push((base + 1.0, base + 2.0, r));
        w21.push((base + 1.0, base + 2.0, 1.0));
    }
    let system = SystemDefinition::builder(3)
        .weight(0, 1, constant_schedule(&w01))
        .weight(1, 0, constant_schedule(&w10))
        .weight(1, 2, constant_schedule(&w12))
        .weight(2, 1, constant_schedule(&w21))
        .build()?;
    Ok(Scenario {
        name: "three_agent".to_string(),
        system: Arc::new(system),
        x0: vec![-1.0, 0.0, 1.0],
        period: Some(2.0),
        horizon: 2.0 * periods as f64,
    })
}

/// The mixing coefficient of one half-period of the three-agent system.
pub fn lambda_coefficient(rho: f64) -> f64 {
    (1.0 - (-(rho + 1.0)).exp()) / (1.0 + rho)
}

/// Exact affine maps for one full period of the three-agent system: returns
/// the states at times `2p + 1` and `2p + 2` given the state at `2p`.
pub fn oracle_three_agent_step(x: &[f64; 3], rho_p: f64) -> ([f64; 3], [f64; 3]) {
    let lam = lambda_coefficient(rho_p);
    let rho_lam = rho_p * lam;
    let half = [
        (1.0 - lam) * x[0] + lam * x[1],
        rho_lam * x[0] + (1.0 - rho_lam) * x[1],
        x[2],
    ];
    let full = [
        half[0],
        (1.0 - rho_lam) * half[1] + rho_lam * half[2],
        lam * half[1] + (1.0 - lam) * half[2],
    ];
    (half, full)
}

/// A chain of `n = 2m + 1` agents whose interactions sweep inward from both
/// ends over a period of `m + 1` unit sub-intervals, with the asymmetric
/// gain rho_p on the inward direction.
pub fn build_odd_chain(m: usize, rho: &RhoSequence, periods: usize) -> Result<Scenario> {
    if m < 2 {
        return Err(Error::OutOfRange(format!(
            "odd chain needs half-width m >= 2, got {m}"
        )));
    }
    rho.validate()?;
    let n = 2 * m + 1;
    let mut schedules: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); n * n];
    let mut push = |i: usize, j: usize, a: f64, b: f64, c: f64| {
        schedules[i * n + j].push((a, b, c));
    };
    for p in 0..periods {
        let base = ((m + 1) * p) as f64;
        let r = rho.value(p);
        // Paired updates sweeping in from both ends of the chain.
        for i in 0..=m - 2 {
            let (a, b) = (base + i as f64, base + i as f64 + 1.0);
            push(i, i + 1, a, b, 1.0);
            push(i + 1, i, a, b, r);
            push(n - 2 - i, n - 1 - i, a, b, r);
            push(n - 1 - i, n - 2 - i, a, b, 1.0);
        }
        // Left-middle pair.
        let (a, b) = (base + (m - 1) as f64, base + m as f64);
        push(m - 1, m, a, b, 1.0);
        push(m, m - 1, a, b, r);
        // Right-middle pair.
        let (a, b) = (base + m as f64, base + (m + 1) as f64);
        push(m, m + 1, a, b, r);
        push(m + 1, m, a, b, 1.0);
    }
    let mut builder = SystemDefinition::builder(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && !schedules[i * n + j].is_empty() {
                builder = builder.weight(i, j, constant_schedule(&schedules[i * n + j]));
            }
        }
    }
    let mut x0 = vec![-1.0; m];
    x0.push(0.0);
    x0.extend(vec![1.0; m]);
    Ok(Scenario {
        name: format!("odd_chain(m={m})"),
        system: Arc::new(builder.build()?),
        x0,
        period: Some((m + 1) as f64),
        horizon: ((m + 1) * periods) as f64,
    })
}

/// Two agents with symmetric `1/t` weights, starting at t = 1 where the
/// reciprocal shape becomes summable. The unit-influence times are `e^p` and
/// the diameter decays exactly like `(domain_start / t)^2`, the two
/// symmetric weights contributing one factor each.
pub fn build_two_agent_reciprocal(periods: usize) -> Result<Scenario> {
    let weight = || {
        WeightFunction::with_domain_start(
            1.0,
            vec![TimeSegment::reciprocal(1.0, f64::INFINITY, 1.0).expect("valid segment")],
        )
        .expect("single segment")
    };
    let system = SystemDefinition::builder(2)
        .domain_start(1.0)
        .weight(0, 1, weight())
        .weight(1, 0, weight())
        .build()?;
    Ok(Scenario {
        name: "two_agent_reciprocal".to_string(),
        system: Arc::new(system),
        x0: vec![0.0, 1.0],
        period: None,
        horizon: std::f64::consts::E.powi(periods as i32),
    })
}

/// Two agents with symmetric constant unit weights; the simplest baseline
/// with unit-influence times at every integer.
pub fn build_two_agent_constant(periods: usize) -> Result<Scenario> {
    let weight = || constant_schedule(&[(0.0, f64::INFINITY, 1.0)]);
    let system = SystemDefinition::builder(2)
        .weight(0, 1, weight())
        .weight(1, 0, weight())
        .build()?;
    Ok(Scenario {
        name: "two_agent_constant".to_string(),
        system: Arc::new(system),
        x0: vec![0.0, 1.0],
        period: Some(1.0),
        horizon: periods as f64,
    })
}
