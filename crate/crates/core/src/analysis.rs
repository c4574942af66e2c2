//! Diagnostics over a system's interaction weights: reciprocity ratios, the
//! unit-influence time rescaling, per-period contraction bounds, and the
//! connectivity / balance assumption checkers.
//!
//! Cut quantities enumerate all `2^n - 2` proper subsets, which is inherent
//! to their definitions; enumeration is capped at [`SUBSET_ENUMERATION_LIMIT`]
//! agents.

use std::fmt;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::weights::{AgentSet, SystemDefinition};

/// Cut enumeration cap: 2^16 - 2 = 65534 subsets.
pub const SUBSET_ENUMERATION_LIMIT: usize = 16;

/// Fraction of first-half mass the second half must carry for an edge to be
/// flagged as a divergence candidate by the persistence heuristic.
pub const PERSISTENCE_MASS_FRACTION: f64 = 0.25;

/// An extended non-negative ratio. The infinite value arises only from the
/// explicit zero-denominator branch, never from floating-point overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioValue {
    Finite(f64),
    Infinite,
}

impl RatioValue {
    /// The three-branch ratio of cut sums: `num/den` when the denominator is
    /// positive, 1 when both vanish, infinite when only the numerator is
    /// positive.
    pub fn from_sums(numerator: f64, denominator: f64) -> RatioValue {
        if denominator > 0.0 {
            RatioValue::Finite(numerator / denominator)
        } else if numerator > 0.0 {
            RatioValue::Infinite
        } else {
            RatioValue::Finite(1.0)
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, RatioValue::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            RatioValue::Finite(v) => Some(*v),
            RatioValue::Infinite => None,
        }
    }

    /// Collapses to `f64`, mapping the infinite branch to `f64::INFINITY`.
    pub fn as_f64(&self) -> f64 {
        match self {
            RatioValue::Finite(v) => *v,
            RatioValue::Infinite => f64::INFINITY,
        }
    }

    pub fn max(self, other: RatioValue) -> RatioValue {
        if self.as_f64() >= other.as_f64() {
            self
        } else {
            other
        }
    }
}

impl fmt::Display for RatioValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatioValue::Finite(v) => write!(f, "{v}"),
            RatioValue::Infinite => write!(f, "inf"),
        }
    }
}

/// Non-zero weight entries `(i, j, a_ij)` at a probe instant.
fn weight_entries(
    sys: &SystemDefinition,
    t: f64,
    left_limit: bool,
) -> Result<Vec<(usize, usize, f64)>> {
    let n = sys.agent_count();
    let mut entries = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = sys.weight(i, j);
            if w.is_zero() {
                continue;
            }
            let v = if left_limit {
                w.evaluate_left_limit(t)?
            } else {
                w.evaluate(t)?
            };
            if v != 0.0 {
                entries.push((i, j, v));
            }
        }
    }
    Ok(entries)
}

fn cut_sums(entries: &[(usize, usize, f64)], s: AgentSet) -> (f64, f64) {
    let mut inflow = 0.0;
    let mut outflow = 0.0;
    for &(i, j, w) in entries {
        if s.contains(i) && !s.contains(j) {
            inflow += w;
        } else if s.contains(j) && !s.contains(i) {
            outflow += w;
        }
    }
    (inflow, outflow)
}

/// Reciprocity ratio of subset `S` at time `t`: the influence arriving on `S`
/// from outside divided by the influence `S` sends out.
pub fn ratio_r_s(sys: &SystemDefinition, s: AgentSet, t: f64) -> Result<RatioValue> {
    sys.validate_subset(s)?;
    let entries = weight_entries(sys, t, false)?;
    let (inflow, outflow) = cut_sums(&entries, s);
    Ok(RatioValue::from_sums(inflow, outflow))
}

fn check_enumeration_limit(n: usize) -> Result<()> {
    if n > SUBSET_ENUMERATION_LIMIT {
        Err(Error::EnumerationLimit {
            n,
            limit: SUBSET_ENUMERATION_LIMIT,
        })
    } else {
        Ok(())
    }
}

fn max_ratio_entries(n: usize, entries: &[(usize, usize, f64)]) -> (RatioValue, AgentSet) {
    let mut best = RatioValue::Finite(1.0);
    let mut witness = AgentSet::singleton(0);
    for s in AgentSet::proper_subsets(n) {
        let (inflow, outflow) = cut_sums(entries, s);
        let r = RatioValue::from_sums(inflow, outflow);
        if r.as_f64() > best.as_f64() {
            best = r;
            witness = s;
        }
    }
    (best, witness)
}

fn max_ratio_probe(
    sys: &SystemDefinition,
    t: f64,
    left_limit: bool,
) -> Result<(RatioValue, AgentSet)> {
    check_enumeration_limit(sys.agent_count())?;
    let entries = weight_entries(sys, t, left_limit)?;
    Ok(max_ratio_entries(sys.agent_count(), &entries))
}

/// Worst reciprocity ratio over all non-empty proper subsets at time `t`.
pub fn max_ratio(sys: &SystemDefinition, t: f64) -> Result<RatioValue> {
    max_ratio_probe(sys, t, false).map(|(r, _)| r)
}

#[derive(Debug, Clone, Copy)]
struct Probe {
    t: f64,
    left_limit: bool,
}

/// Probe instants covering a window so the supremum of the piecewise ratio
/// is attained at a probe.
///
/// Between consecutive weight breakpoints each cut ratio is a Moebius
/// function of time (per-cut sums are `c + d/t`), hence monotone, so probing
/// both edges of every elementary interval is exact for the supported weight
/// family; the left limit is used at right edges where segments switch. A
/// midpoint probe is included as well.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    probes: Vec<Probe>,
}

impl SamplingPlan {
    pub fn covering(sys: &SystemDefinition, t0: f64, t1: f64) -> SamplingPlan {
        let mut edges = Vec::new();
        edges.push(t0);
        edges.extend(sys.breakpoints(t0, t1));
        edges.push(t1);
        let mut probes = Vec::new();
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if !(a < b) {
                continue;
            }
            probes.push(Probe {
                t: a,
                left_limit: false,
            });
            probes.push(Probe {
                t: 0.5 * (a + b),
                left_limit: false,
            });
            probes.push(Probe {
                t: b,
                left_limit: true,
            });
        }
        probes.push(Probe {
            t: t1,
            left_limit: false,
        });
        SamplingPlan { probes }
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }
}

/// Running supremum of [`max_ratio`] over `[domain start, t]`, evaluated on
/// the probes of `plan` that do not exceed `t`. Always at least 1.
pub fn running_max_ratio(
    sys: &SystemDefinition,
    t: f64,
    plan: &SamplingPlan,
) -> Result<RatioValue> {
    let mut best = RatioValue::Finite(1.0);
    let cutoff = t + 1e-12 * t.abs().max(1.0);
    for probe in &plan.probes {
        if probe.t > cutoff {
            continue;
        }
        let (r, _) = max_ratio_probe(sys, probe.t, probe.left_limit)?;
        best = best.max(r);
    }
    Ok(best)
}

/// The unit-influence time rescaling: `t_{p+1}` is reached from `t_p` by
/// floor(n/2) steps, each advancing to the earliest time every cut has
/// accumulated one unit of incoming influence.
#[derive(Debug, Clone)]
pub struct RescalingSequence {
    times: Vec<f64>,
    intermediates: Vec<Vec<f64>>,
    max_ratio_at: Vec<RatioValue>,
}

impl RescalingSequence {
    pub fn period_count(&self) -> usize {
        self.times.len() - 1
    }

    /// The times `t_0 .. t_P`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, p: usize) -> f64 {
        self.times[p]
    }

    /// Intermediate step times of period `p`, from `t_p` to `t_{p+1}`
    /// inclusive (floor(n/2) steps, so floor(n/2) + 1 entries).
    pub fn intermediates(&self, p: usize) -> &[f64] {
        &self.intermediates[p]
    }

    /// Running maximal ratio at `t_p`.
    pub fn max_ratio_at(&self, p: usize) -> RatioValue {
        self.max_ratio_at[p]
    }

    pub fn max_ratios(&self) -> &[RatioValue] {
        &self.max_ratio_at
    }
}

/// Computes the rescaling sequence for `periods` periods.
///
/// Per step, the earliest unit-influence time of each cut is found by
/// closed-form inversion (bisection only when constant and reciprocal forms
/// are simultaneously active); the step time is their maximum, which by
/// monotonicity of cut integrals equals the earliest time the minimum over
/// cuts reaches 1. Errors with the starving cut if the schedule ends before
/// a cut accumulates a unit.
pub fn rescaling_sequence(sys: &SystemDefinition, periods: usize) -> Result<RescalingSequence> {
    check_enumeration_limit(sys.agent_count())?;
    if periods == 0 {
        return Err(Error::OutOfRange("periods must be >= 1".to_string()));
    }
    let n = sys.agent_count();
    let steps = n / 2;
    let mut t = sys.domain_start();
    let mut times = vec![t];
    let mut intermediates = Vec::with_capacity(periods);
    let mut rmax = max_ratio(sys, t)?;
    let mut max_ratio_at = vec![rmax];

    for _ in 0..periods {
        let mut steps_of_period = Vec::with_capacity(steps + 1);
        steps_of_period.push(t);
        let mut cur = t;
        for _ in 0..steps {
            let mut next = cur;
            for s in AgentSet::proper_subsets(n) {
                let hit = sys.cut_first_hit(s, cur, 1.0)?;
                if hit > next {
                    next = hit;
                }
            }
            cur = next;
            steps_of_period.push(cur);
        }
        let plan = SamplingPlan::covering(sys, t, cur);
        rmax = rmax.max(running_max_ratio(sys, cur, &plan)?);
        times.push(cur);
        intermediates.push(steps_of_period);
        max_ratio_at.push(rmax);
        t = cur;
    }

    Ok(RescalingSequence {
        times,
        intermediates,
        max_ratio_at,
    })
}

/// Per-period diameter contraction factor `1 - rmax^-floor(n/2) / (8n^2)^floor(n/2)`.
/// An unbounded ratio yields the vacuous factor 1.
pub fn contraction_bound(n: usize, rmax: RatioValue) -> f64 {
    let steps = (n / 2) as i32;
    match rmax.finite() {
        None => 1.0,
        Some(r) => {
            debug_assert!(r >= 1.0, "running max ratio is always >= 1");
            1.0 - r.powi(-steps) / (8.0 * (n * n) as f64).powi(steps)
        }
    }
}

/// Product of per-period contraction factors; 1 for an empty sequence.
pub fn product_bound(rmax_seq: &[RatioValue], n: usize) -> f64 {
    rmax_seq.iter().map(|r| contraction_bound(n, *r)).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrendVerdict {
    Diverging,
    Converging,
}

/// Heuristic check of the slow-divergence condition: whether the series of
/// `rmax_p^-floor(n/2)` terms looks divergent. The verdict is a trend label
/// from a power-law fit of the tail, never a proof.
#[derive(Debug, Clone)]
pub struct SlowDivergenceReport {
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Exponent alpha from fitting the last half of the terms to `p^-alpha`.
    pub tail_exponent: f64,
    pub verdict: TrendVerdict,
}

pub fn slow_divergence_check(rmax_seq: &[RatioValue], n: usize) -> SlowDivergenceReport {
    assert!(!rmax_seq.is_empty(), "need at least one ratio sample");
    let steps = (n / 2) as i32;
    let terms: Vec<f64> = rmax_seq
        .iter()
        .map(|r| {
            r.finite()
                .expect("slow-divergence check needs finite ratios")
                .powi(-steps)
        })
        .collect();
    let mut partial_sums = Vec::with_capacity(terms.len());
    let mut acc = 0.0;
    for &v in &terms {
        acc += v;
        partial_sums.push(acc);
    }
    let start = (terms.len() / 2).max(1);
    let points: Vec<(f64, f64)> = (start..terms.len())
        .filter(|&p| terms[p] > 0.0)
        .map(|p| ((p as f64).ln(), terms[p].ln()))
        .collect();
    let tail_exponent = -slope(&points);
    let verdict = if tail_exponent <= 1.0 + 1e-6 {
        TrendVerdict::Diverging
    } else {
        TrendVerdict::Converging
    };
    SlowDivergenceReport {
        terms,
        partial_sums,
        tail_exponent,
        verdict,
    }
}

fn slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Estimate of the uniform cut-balance constant over a finite horizon.
#[derive(Debug, Clone)]
pub struct CutBalanceReport {
    /// Supremum over probes of the worst cut ratio.
    pub k_estimate: RatioValue,
    /// Subset and time achieving the estimate.
    pub witness: Option<(AgentSet, f64)>,
    /// True when the running estimate kept growing in the second half of the
    /// horizon, suggesting no uniform bound exists.
    pub unbounded_trend: bool,
}

pub fn check_cut_balance(
    sys: &SystemDefinition,
    plan: &SamplingPlan,
    horizon: f64,
) -> Result<CutBalanceReport> {
    let mid = 0.5 * (sys.domain_start() + horizon);
    let mut best = RatioValue::Finite(1.0);
    let mut witness = None;
    let mut first_half = RatioValue::Finite(1.0);
    let mut second_half = RatioValue::Finite(1.0);
    let cutoff = horizon + 1e-12 * horizon.abs().max(1.0);
    for probe in &plan.probes {
        if probe.t > cutoff {
            continue;
        }
        let (r, s) = max_ratio_probe(sys, probe.t, probe.left_limit)?;
        if witness.is_none() || r.as_f64() > best.as_f64() {
            witness = Some((s, probe.t));
        }
        best = best.max(r);
        if probe.t <= mid {
            first_half = first_half.max(r);
        } else {
            second_half = second_half.max(r);
        }
    }
    let unbounded_trend = second_half.as_f64() > first_half.as_f64() * (1.0 + 1e-9);
    Ok(CutBalanceReport {
        k_estimate: best,
        witness,
        unbounded_trend,
    })
}

/// Windowed-influence graph: which directed influences carry more than
/// `delta` mass over `[t, t + window]`, and whether that graph has a
/// spanning tree.
#[derive(Debug, Clone)]
pub struct MoreauReport {
    /// Directed edges `(j, i)`: agent `j` influences agent `i`.
    pub edges: Vec<(usize, usize)>,
    pub has_spanning_tree: bool,
}

pub fn moreau_edge_set(
    sys: &SystemDefinition,
    t: f64,
    window: f64,
    delta: f64,
) -> Result<MoreauReport> {
    if !(window > 0.0) || !(delta > 0.0) {
        return Err(Error::OutOfRange(format!(
            "need window > 0 and delta > 0, got {window} and {delta}"
        )));
    }
    let n = sys.agent_count();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if sys.weight(i, j).integrate(t, t + window)? > delta {
                edges.push((j, i));
            }
        }
    }
    let has_spanning_tree = (0..n).any(|root| reachable_from(n, &edges, root).len() == n);
    Ok(MoreauReport {
        edges,
        has_spanning_tree,
    })
}

fn reachable_from(n: usize, edges: &[(usize, usize)], root: usize) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(from, to) in edges {
        adj[from].push(to);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![root];
    let mut order = Vec::new();
    seen[root] = true;
    while let Some(v) = stack.pop() {
        order.push(v);
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    order
}

/// Mass profile of one directed influence across the horizon.
#[derive(Debug, Clone)]
pub struct EdgeMassProfile {
    /// Influencing agent `j` of the weight `a_ij`.
    pub influencer: usize,
    /// Influenced agent `i`.
    pub influenced: usize,
    pub checkpoint_mass: Vec<f64>,
    pub first_half: f64,
    pub second_half: f64,
    pub divergence_candidate: bool,
}

/// Finite-horizon screen for persistent connectivity. Divergent integrals
/// are undecidable from finite data, so edges whose mass keeps arriving
/// (second-half mass at least [`PERSISTENCE_MASS_FRACTION`] of the first
/// half) are labeled divergence candidates, and strong connectivity is
/// reported for the candidate graph.
#[derive(Debug, Clone)]
pub struct PersistenceReport {
    pub edges: Vec<EdgeMassProfile>,
    pub strongly_connected: bool,
    pub horizon: f64,
    pub checkpoints: usize,
}

pub fn persistent_connectivity_report(
    sys: &SystemDefinition,
    horizon: f64,
    checkpoints: usize,
) -> Result<PersistenceReport> {
    assert!(checkpoints >= 2, "need at least two checkpoints");
    let start = sys.domain_start();
    if !(horizon > start) {
        return Err(Error::InvalidInterval {
            t0: start,
            t1: horizon,
        });
    }
    let n = sys.agent_count();
    let mid = 0.5 * (start + horizon);
    let width = (horizon - start) / checkpoints as f64;
    let mut edges = Vec::new();
    let mut candidate_edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || sys.weight(i, j).is_zero() {
                continue;
            }
            let w = sys.weight(i, j);
            let checkpoint_mass: Vec<f64> = (0..checkpoints)
                .map(|k| {
                    let a = start + width * k as f64;
                    let b = if k + 1 == checkpoints {
                        horizon
                    } else {
                        start + width * (k + 1) as f64
                    };
                    w.integrate(a, b)
                })
                .collect::<Result<_>>()?;
            let first_half = w.integrate(start, mid)?;
            let second_half = w.integrate(mid, horizon)?;
            let divergence_candidate = first_half > 0.0
                && second_half > 0.0
                && second_half >= PERSISTENCE_MASS_FRACTION * first_half;
            if divergence_candidate {
                candidate_edges.push((j, i));
            }
            edges.push(EdgeMassProfile {
                influencer: j,
                influenced: i,
                checkpoint_mass,
                first_half,
                second_half,
                divergence_candidate,
            });
        }
    }
    // Strong connectivity: every node reachable from node 0 and node 0
    // reachable from every node.
    let forward = reachable_from(n, &candidate_edges, 0).len() == n;
    let reversed: Vec<(usize, usize)> = candidate_edges.iter().map(|&(a, b)| (b, a)).collect();
    let backward = reachable_from(n, &reversed, 0).len() == n;
    Ok(PersistenceReport {
        edges,
        strongly_connected: forward && backward,
        horizon,
        checkpoints,
    })
}

/// Diameter bound at time `t` under a uniform cut-balance constant `k`:
/// `(1 - 1 / (8 k n^2)^floor(n/2))^P(t) * d0` with `P(t)` the completed
/// rescaling periods.
pub fn rate_bound(t: f64, resc: &RescalingSequence, k: f64, n: usize, d0: f64) -> Result<f64> {
    if !(k >= 1.0) || !k.is_finite() {
        return Err(Error::OutOfRange(format!("need K >= 1, got {k}")));
    }
    let times = resc.times();
    let last = *times.last().expect("rescaling has at least t_0");
    if t < times[0] || t >= last {
        return Err(Error::OutOfRange(format!(
            "t = {t} outside computed rescaling range [{}, {last})",
            times[0]
        )));
    }
    let p = times.partition_point(|&tp| tp <= t) - 1;
    let steps = (n / 2) as i32;
    let factor = 1.0 - (8.0 * k * (n * n) as f64).powi(steps).recip();
    Ok(factor.powi(p as i32) * d0)
}

/// One audited rescaling period: the measured diameter contraction against
/// the certified factor.
#[derive(Debug, Clone, Copy)]
pub struct PeriodAudit {
    pub period: usize,
    pub measured: f64,
    pub bound: f64,
}

impl PeriodAudit {
    pub fn slack(&self) -> f64 {
        self.bound - self.measured
    }
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub periods: Vec<PeriodAudit>,
}

impl BoundReport {
    /// Smallest bound-minus-measured margin; negative means a violation.
    pub fn worst_slack(&self) -> f64 {
        self.periods
            .iter()
            .map(PeriodAudit::slack)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn all_bounded(&self, tolerance: f64) -> bool {
        self.periods
            .iter()
            .all(|p| p.measured <= p.bound + tolerance)
    }
}

/// Measures `diameter(t_{p+1}) / diameter(t_p)` per rescaling period against
/// the contraction bound evaluated at the running max ratio of `t_{p+1}`.
/// Periods starting from a zero diameter report a measured ratio of 0.
///
/// Ratios measured once the diameter has decayed to one ulp of the position
/// magnitude are floating-point artifacts, not properties of the dynamics;
/// audit horizons should keep diameters above that scale.
pub fn contraction_audit(traj: &Trajectory, resc: &RescalingSequence) -> Result<BoundReport> {
    let times = resc.times();
    let last = *times.last().expect("non-empty rescaling");
    if traj.end_time() < last - 1e-9 * last.abs().max(1.0) {
        return Err(Error::OutOfRange(format!(
            "trajectory ends at {} but the rescaling extends to {last}",
            traj.end_time()
        )));
    }
    let n = traj.system().agent_count();
    let diameters: Vec<f64> = times
        .iter()
        .map(|&tp| traj.state_at(tp).map(|s| s.diameter()))
        .collect::<Result<_>>()?;
    let mut periods = Vec::with_capacity(resc.period_count());
    for p in 0..resc.period_count() {
        let measured = if diameters[p] <= 0.0 {
            0.0
        } else {
            diameters[p + 1] / diameters[p]
        };
        periods.push(PeriodAudit {
            period: p,
            measured,
            bound: contraction_bound(n, resc.max_ratio_at(p + 1)),
        });
    }
    Ok(BoundReport { periods })
}
