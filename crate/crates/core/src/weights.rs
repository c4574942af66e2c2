//! Piecewise-defined interaction weights with exact closed-form integrals.
//!
//! A weight is a non-negative function of time built from half-open segments
//! `[t_start, t_end)`, each carrying a constant value `c` or a reciprocal
//! shape `c / t`. The weight is zero outside all segments. All integrals are
//! evaluated analytically per segment; numeric quadrature exists only in the
//! test suite as an independent oracle.

use crate::error::{Error, Result};

/// Functional form of a weight on a single segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentForm {
    /// Constant value `c >= 0`.
    Constant(f64),
    /// `c / t` with `c >= 0`; only admissible on segments starting after 0.
    Reciprocal(f64),
    /// Identically zero.
    Zero,
}

impl SegmentForm {
    /// Pointwise value at time `t` (assumed inside the segment).
    pub fn value_at(self, t: f64) -> f64 {
        match self {
            SegmentForm::Constant(c) => c,
            SegmentForm::Reciprocal(c) => c / t,
            SegmentForm::Zero => 0.0,
        }
    }

    /// Exact integral over `[lo, hi]`, assumed inside the segment.
    fn integral(self, lo: f64, hi: f64) -> f64 {
        match self {
            SegmentForm::Constant(c) => c * (hi - lo),
            SegmentForm::Reciprocal(c) => c * (hi / lo).ln(),
            SegmentForm::Zero => 0.0,
        }
    }

    fn magnitude(self) -> f64 {
        match self {
            SegmentForm::Constant(c) | SegmentForm::Reciprocal(c) => c,
            SegmentForm::Zero => 0.0,
        }
    }
}

/// One half-open piece `[t_start, t_end)` of a piecewise weight schedule.
///
/// `t_end` may be `f64::INFINITY`, but only on the last segment of a
/// schedule. The half-open convention lets consecutive segments tile time
/// without double counting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSegment {
    t_start: f64,
    t_end: f64,
    form: SegmentForm,
}

impl TimeSegment {
    pub fn new(t_start: f64, t_end: f64, form: SegmentForm) -> Result<Self> {
        if !t_start.is_finite() {
            return Err(Error::InvalidSegment(format!(
                "segment start must be finite, got {t_start}"
            )));
        }
        if !(t_start < t_end) {
            return Err(Error::InvalidSegment(format!(
                "segment needs t_start < t_end, got [{t_start}, {t_end})"
            )));
        }
        let c = form.magnitude();
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidSegment(format!(
                "weight magnitude must be finite and non-negative, got {c}"
            )));
        }
        if matches!(form, SegmentForm::Reciprocal(_)) && t_start <= 0.0 {
            return Err(Error::InvalidSegment(format!(
                "reciprocal segments need t_start > 0 (c/t is not summable at 0), got {t_start}"
            )));
        }
        Ok(TimeSegment {
            t_start,
            t_end,
            form,
        })
    }

    pub fn constant(t_start: f64, t_end: f64, c: f64) -> Result<Self> {
        Self::new(t_start, t_end, SegmentForm::Constant(c))
    }

    pub fn reciprocal(t_start: f64, t_end: f64, c: f64) -> Result<Self> {
        Self::new(t_start, t_end, SegmentForm::Reciprocal(c))
    }

    pub fn start(&self) -> f64 {
        self.t_start
    }

    pub fn end(&self) -> f64 {
        self.t_end
    }

    pub fn form(&self) -> SegmentForm {
        self.form
    }

    /// Half-open membership `t_start <= t < t_end`.
    pub fn contains(&self, t: f64) -> bool {
        self.t_start <= t && t < self.t_end
    }
}

/// A piecewise weight function, zero outside its segments.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction {
    domain_start: f64,
    segments: Vec<TimeSegment>,
}

impl WeightFunction {
    /// Builds a weight defined on `[0, +inf)` from sorted segments.
    pub fn new(segments: Vec<TimeSegment>) -> Result<Self> {
        Self::with_domain_start(0.0, segments)
    }

    /// Builds a weight defined on `[domain_start, +inf)`.
    pub fn with_domain_start(domain_start: f64, segments: Vec<TimeSegment>) -> Result<Self> {
        if !domain_start.is_finite() {
            return Err(Error::InvalidSegment(format!(
                "domain start must be finite, got {domain_start}"
            )));
        }
        for (k, seg) in segments.iter().enumerate() {
            if seg.t_start < domain_start {
                return Err(Error::InvalidSegment(format!(
                    "segment [{}, {}) precedes domain start {domain_start}",
                    seg.t_start, seg.t_end
                )));
            }
            if seg.t_end == f64::INFINITY && k + 1 != segments.len() {
                return Err(Error::InvalidSegment(
                    "only the last segment may be unbounded".to_string(),
                ));
            }
            if k > 0 && segments[k - 1].t_end > seg.t_start {
                return Err(Error::OverlappingSegments(seg.t_start));
            }
        }
        Ok(WeightFunction {
            domain_start,
            segments,
        })
    }

    /// The identically-zero weight (no segments, domain `[0, +inf)`).
    pub fn zero() -> Self {
        WeightFunction {
            domain_start: 0.0,
            segments: Vec::new(),
        }
    }

    pub fn domain_start(&self) -> f64 {
        self.domain_start
    }

    pub fn segments(&self) -> &[TimeSegment] {
        &self.segments
    }

    /// True when no segment can ever contribute a positive value.
    pub fn is_zero(&self) -> bool {
        self.segments.iter().all(|s| s.form.magnitude() == 0.0)
    }

    pub(crate) fn segment_at(&self, t: f64) -> Option<&TimeSegment> {
        // Last segment with t_start <= t, if it still contains t.
        let idx = self.segments.partition_point(|s| s.t_start <= t);
        if idx == 0 {
            return None;
        }
        let seg = &self.segments[idx - 1];
        seg.contains(t).then_some(seg)
    }

    /// Pointwise value at `t`, using half-open segment membership.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if t < self.domain_start {
            return Err(Error::BeforeDomainStart {
                t,
                start: self.domain_start,
            });
        }
        Ok(self.segment_at(t).map_or(0.0, |s| s.form.value_at(t)))
    }

    /// Left limit `lim_{s -> t^-} a(s)`: the value the segment active just
    /// below `t` takes at `t`. Used by the ratio probes, where suprema over a
    /// half-open piece are attained in the limit at its right edge.
    pub fn evaluate_left_limit(&self, t: f64) -> Result<f64> {
        if t <= self.domain_start {
            return Err(Error::BeforeDomainStart {
                t,
                start: self.domain_start,
            });
        }
        let idx = self.segments.partition_point(|s| s.t_start < t);
        if idx == 0 {
            return Ok(0.0);
        }
        let seg = &self.segments[idx - 1];
        Ok(if t <= seg.t_end {
            seg.form.value_at(t)
        } else {
            0.0
        })
    }

    /// Exact integral over `[t0, t1]` as a sum of per-segment antiderivatives.
    pub fn integrate(&self, t0: f64, t1: f64) -> Result<f64> {
        if t0 < self.domain_start {
            return Err(Error::BeforeDomainStart {
                t: t0,
                start: self.domain_start,
            });
        }
        if !(t0 <= t1) || !t1.is_finite() {
            return Err(Error::InvalidInterval { t0, t1 });
        }
        let mut total = 0.0;
        for seg in &self.segments {
            if seg.t_start >= t1 {
                break;
            }
            let lo = seg.t_start.max(t0);
            let hi = seg.t_end.min(t1);
            if lo < hi {
                total += seg.form.integral(lo, hi);
            }
        }
        Ok(total)
    }

    /// End of the last segment; `domain_start` when there are none.
    pub fn schedule_end(&self) -> f64 {
        self.segments.last().map_or(self.domain_start, |s| s.t_end)
    }
}

/// A subset of agents encoded as a bitmask over 0-based agent indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgentSet {
    bits: u64,
}

impl AgentSet {
    pub fn from_bits(bits: u64) -> Self {
        AgentSet { bits }
    }

    pub fn from_indices(indices: &[usize]) -> Self {
        let mut bits = 0u64;
        for &i in indices {
            assert!(i < 64, "agent index {i} out of range");
            bits |= 1 << i;
        }
        AgentSet { bits }
    }

    pub fn singleton(i: usize) -> Self {
        Self::from_indices(&[i])
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn contains(&self, i: usize) -> bool {
        i < 64 && self.bits >> i & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..64).filter(|&i| self.contains(i))
    }

    pub fn complement(&self, n: usize) -> AgentSet {
        let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        AgentSet {
            bits: full & !self.bits,
        }
    }

    /// True when the set is a non-empty proper subset of `{0..n-1}`.
    pub fn is_proper_nonempty(&self, n: usize) -> bool {
        let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        self.bits != 0 && self.bits & !full == 0 && self.bits != full
    }

    /// Iterates over all `2^n - 2` non-empty proper subsets.
    pub fn proper_subsets(n: usize) -> impl Iterator<Item = AgentSet> {
        let full = (1u64 << n) - 1;
        (1..full).map(AgentSet::from_bits)
    }

    /// 1-based display, e.g. `{2,3}` for agents with 0-based indices 1 and 2.
    pub fn label_string(&self) -> String {
        let labels: Vec<String> = self.iter().map(|i| (i + 1).to_string()).collect();
        format!("{{{}}}", labels.join(","))
    }
}

/// A system of `n` agents with one weight function per ordered pair.
///
/// `weight(i, j)` is the strength with which agent `j` influences agent `i`.
/// Diagonal entries are identically zero. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SystemDefinition {
    n: usize,
    domain_start: f64,
    weights: Vec<WeightFunction>,
}

pub struct SystemBuilder {
    n: usize,
    domain_start: f64,
    weights: Vec<WeightFunction>,
}

impl SystemBuilder {
    pub fn domain_start(mut self, t: f64) -> Self {
        self.domain_start = t;
        self
    }

    /// Sets the weight of agent `j` on agent `i`.
    pub fn weight(mut self, i: usize, j: usize, w: WeightFunction) -> Self {
        assert!(
            i < self.n && j < self.n && i != j,
            "bad weight index ({i},{j})"
        );
        self.weights[i * self.n + j] = w;
        self
    }

    pub fn build(self) -> Result<SystemDefinition> {
        if self.n < 2 {
            return Err(Error::TooFewAgents(self.n));
        }
        for w in &self.weights {
            if w.domain_start > self.domain_start && !w.segments.is_empty() {
                return Err(Error::InvalidSegment(format!(
                    "weight domain starts at {} but the system starts at {}",
                    w.domain_start, self.domain_start
                )));
            }
        }
        Ok(SystemDefinition {
            n: self.n,
            domain_start: self.domain_start,
            weights: self.weights,
        })
    }
}

impl SystemDefinition {
    pub fn builder(n: usize) -> SystemBuilder {
        assert!(n <= 64, "at most 64 agents supported");
        SystemBuilder {
            n,
            domain_start: 0.0,
            weights: vec![WeightFunction::zero(); n * n],
        }
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn domain_start(&self) -> f64 {
        self.domain_start
    }

    /// The weight of agent `j` on agent `i`.
    pub fn weight(&self, i: usize, j: usize) -> &WeightFunction {
        &self.weights[i * self.n + j]
    }

    pub fn validate_subset(&self, s: AgentSet) -> Result<()> {
        if s.is_proper_nonempty(self.n) {
            Ok(())
        } else {
            Err(Error::InvalidSubset { n: self.n })
        }
    }

    /// Ordered pairs `(i in S, j not in S)` whose weight is not identically
    /// zero; these are the only terms that can contribute to the cut.
    pub(crate) fn cut_pairs(&self, s: AgentSet) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for i in 0..self.n {
            if !s.contains(i) {
                continue;
            }
            for j in 0..self.n {
                if i != j && !s.contains(j) && !self.weight(i, j).is_zero() {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    /// Total instantaneous influence on members of `S` from outside:
    /// the sum of `a_ij(t)` over `i in S`, `j not in S`.
    pub fn cut_weight(&self, s: AgentSet, t: f64) -> Result<f64> {
        self.validate_subset(s)?;
        let mut total = 0.0;
        for (i, j) in self.cut_pairs(s) {
            total += self.weight(i, j).evaluate(t)?;
        }
        Ok(total)
    }

    /// Cumulative influence on `S` from outside over `[t0, t1]`.
    pub fn cut_integral(&self, s: AgentSet, t0: f64, t1: f64) -> Result<f64> {
        self.validate_subset(s)?;
        if !(t0 <= t1) {
            return Err(Error::InvalidInterval { t0, t1 });
        }
        let mut total = 0.0;
        for (i, j) in self.cut_pairs(s) {
            total += self.weight(i, j).integrate(t0, t1)?;
        }
        Ok(total)
    }

    /// All segment boundaries of all weights strictly inside `(t0, t1)`,
    /// sorted and deduplicated.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut times = Vec::new();
        for w in &self.weights {
            for seg in w.segments() {
                for t in [seg.start(), seg.end()] {
                    if t > t0 && t < t1 && t.is_finite() {
                        times.push(t);
                    }
                }
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
        times
    }

    /// Smallest `t >= t0` at which the cut integral from `t0` reaches
    /// `target`. Inversion is closed-form on pure constant or pure reciprocal
    /// stretches and falls back to bisection when both kinds are active.
    ///
    /// The walk advances a cursor per cut pair instead of materializing all
    /// future boundaries; the rescaling computation calls this once per cut
    /// per step, and hits usually arrive within a few segments.
    pub(crate) fn cut_first_hit(&self, s: AgentSet, t0: f64, target: f64) -> Result<f64> {
        self.validate_subset(s)?;
        let pairs = self.cut_pairs(s);
        // Cursor per pair: index of the first segment ending after lo.
        let mut cursors: Vec<(&WeightFunction, usize)> = pairs
            .iter()
            .map(|&(i, j)| {
                let w = self.weight(i, j);
                let idx = w.segments().partition_point(|seg| seg.end() <= t0);
                (w, idx)
            })
            .collect();

        let mut acc = 0.0f64;
        let mut lo = t0;
        loop {
            // Active coefficient sums at lo and the next boundary beyond it.
            // Between boundaries the integrand is c + d/t.
            let mut c = 0.0f64;
            let mut d = 0.0f64;
            let mut next: Option<f64> = None;
            for (w, idx) in cursors.iter_mut() {
                let segs = w.segments();
                while *idx < segs.len() && segs[*idx].end() <= lo {
                    *idx += 1;
                }
                let Some(seg) = segs.get(*idx) else { continue };
                let boundary = if seg.start() > lo {
                    seg.start()
                } else {
                    match seg.form() {
                        SegmentForm::Constant(cc) => c += cc,
                        SegmentForm::Reciprocal(cc) => d += cc,
                        SegmentForm::Zero => {}
                    }
                    seg.end()
                };
                if boundary.is_finite() {
                    next = Some(next.map_or(boundary, |n: f64| n.min(boundary)));
                }
            }
            let remaining = target - acc;
            match next {
                Some(hi) => {
                    let gain = c * (hi - lo) + if d > 0.0 { d * (hi / lo).ln() } else { 0.0 };
                    if acc + gain >= target {
                        return Ok(invert_on_interval(lo, hi, c, d, remaining));
                    }
                    acc += gain;
                    lo = hi;
                }
                None => {
                    // Tail [lo, inf): only unbounded segments remain active.
                    if c > 0.0 && d > 0.0 {
                        return Ok(invert_on_interval(lo, f64::INFINITY, c, d, remaining));
                    }
                    if c > 0.0 {
                        return Ok(lo + remaining / c);
                    }
                    if d > 0.0 {
                        return Ok(lo * (remaining / d).exp());
                    }
                    return Err(Error::ConnectivityHorizon {
                        cut: s.label_string(),
                        reached: acc,
                        horizon: lo,
                    });
                }
            }
        }
    }
}

/// Solves `c (x - lo) + d ln(x / lo) = remaining` for `x in [lo, hi]`.
fn invert_on_interval(lo: f64, hi: f64, c: f64, d: f64, remaining: f64) -> f64 {
    if remaining <= 0.0 {
        return lo;
    }
    if d == 0.0 {
        return lo + remaining / c;
    }
    if c == 0.0 {
        return lo * (remaining / d).exp();
    }
    // Both forms active: bisection on a monotone function.
    let mut a = lo;
    let mut b = if hi.is_finite() {
        hi
    } else {
        // Expand until the target is bracketed.
        let mut b = lo + remaining / c;
        while c * (b - a) + d * (b / lo).ln() < remaining {
            b *= 2.0;
        }
        b
    };
    while b - a > 1e-12 * a.abs().max(1.0) {
        let mid = 0.5 * (a + b);
        if c * (mid - lo) + d * (mid / lo).ln() < remaining {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}
