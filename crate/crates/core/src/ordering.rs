//! The order-preserving view of a trajectory: positions relabeled per sample
//! by the sorting permutation so coordinates stay sorted, plus executable
//! checks of the structural facts the contraction estimate rests on.

use std::sync::Arc;

use crate::analysis::{running_max_ratio, RatioValue, RescalingSequence, SamplingPlan};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::weights::{AgentSet, SystemDefinition};

/// The permutation sorting `(x_i, i)` lexicographically: slot `k` holds the
/// original index of the k-th smallest position, ties broken by label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortPermutation {
    slots: Vec<usize>,
}

impl SortPermutation {
    pub fn compute(x: &[f64]) -> SortPermutation {
        let mut slots: Vec<usize> = (0..x.len()).collect();
        slots.sort_by(|&a, &b| {
            x[a].partial_cmp(&x[b])
                .expect("positions must not be NaN")
                .then(a.cmp(&b))
        });
        SortPermutation { slots }
    }

    /// Original agent index occupying sorted slot `k` (0-based).
    pub fn original(&self, slot: usize) -> usize {
        self.slots[slot]
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.slots.iter().enumerate().all(|(k, &v)| k == v)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.slots.iter().map(|&i| x[i]).collect()
    }

    /// Original labels of the `l` lowest sorted slots.
    pub fn lower_block(&self, l: usize) -> AgentSet {
        AgentSet::from_indices(&self.slots[..l])
    }
}

/// The sorting permutation of a position vector.
pub fn sort_permutation(x: &[f64]) -> SortPermutation {
    SortPermutation::compute(x)
}

/// Per-sample sorted positions and permutations of a trajectory. The
/// permuted weights `b_ij(t) = a_{sigma(i) sigma(j)}(t)` are derived on
/// demand from the stored system.
#[derive(Debug, Clone)]
pub struct OrderedView {
    times: Vec<f64>,
    sorted: Vec<Vec<f64>>,
    permutations: Vec<SortPermutation>,
    system: Arc<SystemDefinition>,
}

impl OrderedView {
    pub fn from_trajectory(traj: &Trajectory) -> OrderedView {
        let mut times = Vec::with_capacity(traj.samples().len());
        let mut sorted = Vec::with_capacity(traj.samples().len());
        let mut permutations = Vec::with_capacity(traj.samples().len());
        for s in traj.samples() {
            let sigma = SortPermutation::compute(&s.x);
            times.push(s.t);
            sorted.push(sigma.apply(&s.x));
            permutations.push(sigma);
        }
        OrderedView {
            times,
            sorted,
            permutations,
            system: Arc::clone(traj.system()),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn agent_count(&self) -> usize {
        self.system.agent_count()
    }

    pub fn system(&self) -> &Arc<SystemDefinition> {
        &self.system
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Sorted positions `y` at sample `k`.
    pub fn sorted_positions(&self, k: usize) -> &[f64] {
        &self.sorted[k]
    }

    pub fn permutation(&self, k: usize) -> &SortPermutation {
        &self.permutations[k]
    }

    pub fn sample_index_at(&self, t: f64) -> Option<usize> {
        let idx = self.times.partition_point(|&s| s < t);
        for cand in [idx.wrapping_sub(1), idx] {
            if let Some(&s) = self.times.get(cand) {
                if (s - t).abs() <= 1e-9 * t.abs().max(1.0) {
                    return Some(cand);
                }
            }
        }
        None
    }

    /// Permuted weight matrix at sample `k`: entry `(i, j)` is the weight of
    /// the agent in sorted slot `j` on the agent in sorted slot `i`.
    pub fn permuted_weights(&self, k: usize) -> Result<DenseMatrix> {
        let n = self.agent_count();
        let sigma = &self.permutations[k];
        let t = self.times[k];
        let mut b = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = self.system.weight(sigma.original(i), sigma.original(j));
                if !w.is_zero() {
                    b.set(i, j, w.evaluate(t)?);
                }
            }
        }
        Ok(b)
    }
}

/// Order-preserving view of a trajectory.
pub fn ordered_view(traj: &Trajectory) -> OrderedView {
    OrderedView::from_trajectory(traj)
}

/// The two sides of the weighted-gap inequality for sorted positions.
#[derive(Debug, Clone, Copy)]
pub struct GapBounds {
    /// `sum_{i<=l} R^-i sum_j b_ij (y_j - y_i)`.
    pub lhs: f64,
    /// `(y_{l+1} - y_l) R^-l sum_{i>l} sum_{j<=l} b_ji`.
    pub rhs: f64,
}

/// Evaluates both sides of the weighted-gap inequality for a sorted vector
/// `y`, non-negative weights `b` whose every cut ratio lies in
/// `[1/ratio_bound, ratio_bound]`, and a gap index `l` in `1..=n-1`
/// (the count of positions below the gap). Callers assert `lhs >= 0` and
/// `lhs >= rhs`.
pub fn lyapunov_gap_check(
    y: &[f64],
    b: &DenseMatrix,
    ratio_bound: f64,
    l: usize,
) -> Result<GapBounds> {
    let n = y.len();
    if b.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "weights are {}x{} but y has length {n}",
            b.dim(),
            b.dim()
        )));
    }
    if !(ratio_bound >= 1.0) {
        return Err(Error::OutOfRange(format!(
            "ratio bound must be >= 1, got {ratio_bound}"
        )));
    }
    if l == 0 || l >= n {
        return Err(Error::OutOfRange(format!(
            "gap index l must lie in 1..={}, got {l}",
            n - 1
        )));
    }
    if y.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::OutOfRange("y must be sorted".to_string()));
    }

    // Hypothesis: every cut ratio within [1/R, R], up to float slack.
    for s in AgentSet::proper_subsets(n) {
        let mut inflow = 0.0;
        let mut outflow = 0.0;
        for i in s.iter() {
            for j in s.complement(n).iter() {
                inflow += b.at(i, j);
                outflow += b.at(j, i);
            }
        }
        let tol = 1e-9 * (inflow + outflow) + 1e-300;
        if outflow > ratio_bound * inflow + tol || inflow > ratio_bound * outflow + tol {
            return Err(Error::RatioHypothesis(format!(
                "cut {} has sums {inflow:.6e} in / {outflow:.6e} out, outside ratio {ratio_bound}",
                s.label_string()
            )));
        }
    }

    let mut lhs = 0.0;
    for i in 1..=l {
        let weight = ratio_bound.powi(-(i as i32));
        let mut drift = 0.0;
        for j in 1..=n {
            if j != i {
                drift += b.at(i - 1, j - 1) * (y[j - 1] - y[i - 1]);
            }
        }
        lhs += weight * drift;
    }
    let mut reverse_cut = 0.0;
    for i in l + 1..=n {
        for j in 1..=l {
            reverse_cut += b.at(j - 1, i - 1);
        }
    }
    let rhs = (y[l] - y[l - 1]) * ratio_bound.powi(-(l as i32)) * reverse_cut;
    Ok(GapBounds { lhs, rhs })
}

/// Outcome of sweeping the permuted-weight cut bounds over a window.
#[derive(Debug, Clone)]
pub struct CutRatioReport {
    pub samples_checked: usize,
    pub cuts_per_sample: usize,
    pub ratio_bound: RatioValue,
    /// Largest amount by which any cut bound was exceeded; values at or
    /// below float noise mean the bounds hold. A genuine excess indicates an
    /// implementation bug, not a property of the system.
    pub worst_excess: f64,
}

/// Checks that the permuted weights inherit the cut ratio bounds of the
/// original weights on every sample up to `window_end`.
pub fn cut_ratio_bound_check(view: &OrderedView, window_end: f64) -> Result<CutRatioReport> {
    let sys = view.system();
    let n = view.agent_count();
    let plan = SamplingPlan::covering(sys, sys.domain_start(), window_end);
    let ratio_bound = running_max_ratio(sys, window_end, &plan)?;
    let cutoff = window_end + 1e-9 * window_end.abs().max(1.0);

    let mut samples_checked = 0;
    let mut worst_excess: f64 = 0.0;
    if let Some(r) = ratio_bound.finite() {
        for k in 0..view.len() {
            if view.time(k) > cutoff {
                break;
            }
            samples_checked += 1;
            let b = view.permuted_weights(k)?;
            for s in AgentSet::proper_subsets(n) {
                let mut inflow = 0.0;
                let mut outflow = 0.0;
                for i in s.iter() {
                    for j in s.complement(n).iter() {
                        inflow += b.at(i, j);
                        outflow += b.at(j, i);
                    }
                }
                worst_excess = worst_excess
                    .max(inflow / r - outflow)
                    .max(outflow - r * inflow);
            }
        }
    } else {
        // An unbounded ratio makes both inequalities vacuous.
        samples_checked = view.times().iter().take_while(|&&t| t <= cutoff).count();
    }
    Ok(CutRatioReport {
        samples_checked,
        cuts_per_sample: (1usize << n) - 2,
        ratio_bound,
        worst_excess,
    })
}

/// A witness that one of the `l` lowest sorted positions moved up by the
/// certified fraction of the gap within one unit-influence step.
#[derive(Debug, Clone, Copy)]
pub struct MovementCertificate {
    /// 1-based sorted slot of the moving position.
    pub slot: usize,
    pub witness_time: f64,
    pub movement: f64,
    pub required: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum MovementSearch {
    Found(MovementCertificate),
    /// The gap at `t_p` is already closed, so no movement is required.
    GapClosed,
    /// No witness among the samples: the sampling is too coarse or there is
    /// a bug; the underlying statement guarantees a witness on the continuum.
    NotFound,
}

/// Searches trajectory samples in `[t_p, t_p^1]` for a sorted slot
/// `m <= l` whose position rose by at least
/// `rmax(t_{p+1})^(m - l - 1) / (4n)` times the gap `y_{l+1} - y_l` at `t_p`.
pub fn movement_certificate(
    view: &OrderedView,
    p: usize,
    l: usize,
    resc: &RescalingSequence,
) -> Result<MovementSearch> {
    let n = view.agent_count();
    if p + 1 > resc.period_count() {
        return Err(Error::OutOfRange(format!(
            "period {p} outside the computed rescaling range (P = {})",
            resc.period_count()
        )));
    }
    if l == 0 || l >= n {
        return Err(Error::OutOfRange(format!(
            "gap index l must lie in 1..={}, got {l}",
            n - 1
        )));
    }
    let t_p = resc.time(p);
    let window_end = resc.intermediates(p)[1];
    let k0 = view.sample_index_at(t_p).ok_or_else(|| {
        Error::OutOfRange(format!("t_p = {t_p} is not a sample of the trajectory"))
    })?;
    let y0 = view.sorted_positions(k0);
    let gap = y0[l] - y0[l - 1];
    if gap <= 0.0 {
        return Ok(MovementSearch::GapClosed);
    }
    let rmax = resc.max_ratio_at(p + 1).finite().ok_or_else(|| {
        Error::RatioHypothesis("movement bound needs a finite running max ratio".to_string())
    })?;

    let cutoff = window_end + 1e-9 * window_end.abs().max(1.0);
    for k in k0..view.len() {
        let t = view.time(k);
        if t > cutoff {
            break;
        }
        let y = view.sorted_positions(k);
        for m in 1..=l {
            let movement = y[m - 1] - y0[m - 1];
            let required = rmax.powi(m as i32 - l as i32 - 1) / (4.0 * n as f64) * gap;
            if movement >= required - 1e-12 * gap {
                return Ok(MovementSearch::Found(MovementCertificate {
                    slot: m,
                    witness_time: t,
                    movement,
                    required,
                }));
            }
        }
    }
    Ok(MovementSearch::NotFound)
}

/// Maximal sample ranges `(first, last)` on which the gap between sorted
/// slots `l` and `l+1` stays uniformly open: the running max of `y_l` stays
/// strictly below the running min of `y_{l+1}` across the whole range.
pub fn constancy_windows(view: &OrderedView, l: usize) -> Vec<(usize, usize)> {
    assert!(l >= 1 && l < view.agent_count());
    let mut windows = Vec::new();
    let mut start = 0;
    let mut lo_max = f64::NEG_INFINITY;
    let mut hi_min = f64::INFINITY;
    for k in 0..view.len() {
        let y = view.sorted_positions(k);
        let new_lo = lo_max.max(y[l - 1]);
        let new_hi = hi_min.min(y[l]);
        if new_lo < new_hi {
            lo_max = new_lo;
            hi_min = new_hi;
        } else {
            if k > start {
                windows.push((start, k - 1));
            }
            start = k;
            lo_max = y[l - 1];
            hi_min = y[l];
            if lo_max >= hi_min {
                // No gap at this sample; restart at the next one.
                start = k + 1;
                lo_max = f64::NEG_INFINITY;
                hi_min = f64::INFINITY;
            }
        }
    }
    if start < view.len() && view.len() - start >= 1 && lo_max < hi_min {
        windows.push((start, view.len() - 1));
    }
    windows
}

/// True when the sets of original labels below and above the gap stay
/// constant across the sample range.
pub fn blocks_constant_on(view: &OrderedView, range: (usize, usize), l: usize) -> bool {
    let expect = view.permutation(range.0).lower_block(l);
    (range.0..=range.1).all(|k| view.permutation(k).lower_block(l) == expect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::rescaling_sequence;
    use crate::dynamics::{simulate, SolverConfig};
    use crate::scenarios::{build_three_agent, RhoSequence};
    use crate::weights::{SystemDefinition, TimeSegment, WeightFunction};

    #[test]
    fn sort_permutation_examples() {
        // x = (3,1,2) sorts to y = (1,2,3) through slots (2,3,1) 1-based.
        let sigma = sort_permutation(&[3.0, 1.0, 2.0]);
        assert_eq!(sigma.slots(), &[1, 2, 0]);
        assert_eq!(sigma.apply(&[3.0, 1.0, 2.0]), vec![1.0, 2.0, 3.0]);
        // Ties break by original label.
        assert_eq!(sort_permutation(&[1.0, 1.0]).slots(), &[0, 1]);
        assert!(sort_permutation(&[-2.0, 0.0, 5.0]).is_identity());
    }

    fn symmetric_pair() -> Arc<SystemDefinition> {
        let unit = || {
            WeightFunction::new(vec![TimeSegment::constant(0.0, f64::INFINITY, 1.0).unwrap()])
                .unwrap()
        };
        Arc::new(
            SystemDefinition::builder(2)
                .weight(0, 1, unit())
                .weight(1, 0, unit())
                .build()
                .unwrap(),
        )
    }

    #[test]
    fn view_of_crossing_free_pair_keeps_sigma_constant() {
        let sys = symmetric_pair();
        let traj = simulate(&sys, &[0.0, 1.0], 0.0, 3.0, &SolverConfig::default()).unwrap();
        let view = ordered_view(&traj);
        for k in 0..view.len() {
            assert!(view.permutation(k).is_identity());
            let y = view.sorted_positions(k);
            assert!(y[0] <= y[1]);
            let state = &traj.samples()[k];
            assert!((y[1] - y[0] - state.diameter()).abs() < 1e-15);
        }
    }

    #[test]
    fn view_of_consensus_start_is_constant() {
        let sys = symmetric_pair();
        let traj = simulate(&sys, &[2.0, 2.0], 0.0, 1.0, &SolverConfig::default()).unwrap();
        let view = ordered_view(&traj);
        for k in 0..view.len() {
            assert!(view.permutation(k).is_identity());
            assert_eq!(view.sorted_positions(k), &[2.0, 2.0]);
        }
    }

    #[test]
    fn gap_check_hand_example_is_tight() {
        let b = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let bounds = lyapunov_gap_check(&[0.0, 1.0], &b, 1.0, 1).unwrap();
        assert!((bounds.lhs - 1.0).abs() < 1e-15);
        assert!((bounds.rhs - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gap_check_zero_gaps() {
        let b = DenseMatrix::from_rows(&[&[0.0, 2.0], &[2.0, 0.0]]);
        let bounds = lyapunov_gap_check(&[1.0, 1.0], &b, 1.0, 1).unwrap();
        assert_eq!(bounds.lhs, 0.0);
        assert_eq!(bounds.rhs, 0.0);
    }

    #[test]
    fn gap_check_rejects_one_directional_weights() {
        let b = DenseMatrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(
            lyapunov_gap_check(&[0.0, 1.0], &b, 1.0, 1),
            Err(Error::RatioHypothesis(_))
        ));
    }

    #[test]
    fn gap_check_rejects_unsorted_input() {
        let b = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(lyapunov_gap_check(&[1.0, 0.0], &b, 1.0, 1).is_err());
        assert!(lyapunov_gap_check(&[0.0, 1.0], &b, 1.0, 2).is_err());
        assert!(lyapunov_gap_check(&[0.0, 1.0], &b, 0.5, 1).is_err());
    }

    #[test]
    fn cut_bounds_hold_on_symmetric_run() {
        let sys = symmetric_pair();
        let traj = simulate(&sys, &[0.0, 1.0], 0.0, 2.0, &SolverConfig::default()).unwrap();
        let view = ordered_view(&traj);
        let report = cut_ratio_bound_check(&view, 2.0).unwrap();
        assert_eq!(report.ratio_bound, RatioValue::Finite(1.0));
        assert!(report.worst_excess <= 1e-12);
        assert!(report.samples_checked > 0);
    }

    #[test]
    fn movement_certificate_on_three_agent_start() {
        let sc = build_three_agent(&RhoSequence::constant(1.0), 4).unwrap();
        let resc = rescaling_sequence(&sc.system, 2).unwrap();
        let traj = simulate(&sc.system, &sc.x0, 0.0, 4.0, &SolverConfig::default()).unwrap();
        let view = ordered_view(&traj);
        match movement_certificate(&view, 0, 1, &resc).unwrap() {
            MovementSearch::Found(cert) => {
                assert!(cert.movement >= cert.required - 1e-12);
                assert!(cert.slot == 1);
            }
            other => panic!("expected a certificate, got {other:?}"),
        }
        // Degenerate gap: nothing to certify.
        let flat = simulate(
            &sc.system,
            &[0.0, 0.0, 0.0],
            0.0,
            4.0,
            &SolverConfig::default(),
        )
        .unwrap();
        let view = ordered_view(&flat);
        assert!(matches!(
            movement_certificate(&view, 0, 1, &resc).unwrap(),
            MovementSearch::GapClosed
        ));
        // Out-of-range period is an argument error.
        assert!(movement_certificate(&view, 5, 1, &resc).is_err());
    }

    #[test]
    fn constancy_windows_track_open_gaps() {
        let sc = build_three_agent(&RhoSequence::constant(1.0), 3).unwrap();
        let traj = simulate(&sc.system, &sc.x0, 0.0, 6.0, &SolverConfig::default()).unwrap();
        let view = ordered_view(&traj);
        for l in 1..=2 {
            let windows = constancy_windows(&view, l);
            assert!(!windows.is_empty());
            for w in windows {
                assert!(blocks_constant_on(&view, w, l), "window {w:?} at l={l}");
            }
        }
    }
}
