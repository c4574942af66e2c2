//! Integration of the switched consensus dynamics `x'(t) = A(t) x(t)`.
//!
//! The right-hand side is discontinuous at segment boundaries, so solutions
//! are understood in the integral (Caratheodory) sense and every boundary is
//! a step boundary. On stretches where all active weights are constant the
//! integrator steps by the exact matrix exponential of the generator; on
//! stretches with `c / t` weights it uses an embedded adaptive Runge-Kutta
//! pair.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{expm, DenseMatrix};
use crate::weights::{SegmentForm, SystemDefinition};

/// Agent positions at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub x: Vec<f64>,
}

impl State {
    /// Group diameter: max minus min position.
    pub fn diameter(&self) -> f64 {
        diameter(&self.x)
    }
}

/// Max minus min of a position vector; zero for empty input.
pub fn diameter(x: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in x {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if x.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Exact matrix-exponential steps on constant stretches, adaptive
    /// Runge-Kutta elsewhere.
    ExactExponential,
    /// Adaptive Runge-Kutta everywhere.
    RungeKutta,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Relative local error target for adaptive steps.
    pub step_tolerance: f64,
    /// Upper bound on the step size; also the output sampling density.
    pub max_step: f64,
    /// Keep every `sample_stride`-th interior step in the output.
    /// Segment boundaries and the final time are always kept.
    pub sample_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: SolverMethod::ExactExponential,
            step_tolerance: 1e-10,
            max_step: 0.1,
            sample_stride: 1,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step_tolerance > 0.0) || !(self.max_step > 0.0) || self.sample_stride == 0 {
            return Err(Error::OutOfRange(format!(
                "solver config needs step_tolerance > 0, max_step > 0, sample_stride >= 1 \
                 (got {}, {}, {})",
                self.step_tolerance, self.max_step, self.sample_stride
            )));
        }
        Ok(())
    }
}

/// A simulated trajectory: time-ordered samples plus the segment boundaries
/// crossed. Holds the system and solver configuration so states between
/// samples can be reconstructed exactly by re-integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    samples: Vec<State>,
    breakpoints: Vec<f64>,
    system: Arc<SystemDefinition>,
    config: SolverConfig,
}

impl Trajectory {
    pub fn samples(&self) -> &[State] {
        &self.samples
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn system(&self) -> &Arc<SystemDefinition> {
        &self.system
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn start_time(&self) -> f64 {
        self.samples.first().expect("trajectory is non-empty").t
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().expect("trajectory is non-empty").t
    }

    pub fn final_state(&self) -> &State {
        self.samples.last().expect("trajectory is non-empty")
    }

    /// Index of the sample at time `t`, if one matches to within a relative
    /// tolerance of 1e-9.
    pub fn sample_index_at(&self, t: f64) -> Option<usize> {
        let idx = self.samples.partition_point(|s| s.t < t);
        for cand in [idx.wrapping_sub(1), idx] {
            if let Some(s) = self.samples.get(cand) {
                if (s.t - t).abs() <= 1e-9 * t.abs().max(1.0) {
                    return Some(cand);
                }
            }
        }
        None
    }

    /// State at an arbitrary `t` inside the trajectory span. Exact samples
    /// are returned directly; other times are recovered by re-integrating
    /// from the nearest earlier sample with the stored configuration.
    pub fn state_at(&self, t: f64) -> Result<State> {
        if let Some(k) = self.sample_index_at(t) {
            return Ok(self.samples[k].clone());
        }
        if t < self.start_time() || t > self.end_time() {
            return Err(Error::OutOfRange(format!(
                "t = {t} outside trajectory span [{}, {}]",
                self.start_time(),
                self.end_time()
            )));
        }
        let idx = self.samples.partition_point(|s| s.t <= t);
        let from = &self.samples[idx - 1];
        let partial = simulate(&self.system, &from.x, from.t, t, &self.config)?;
        Ok(partial.final_state().clone())
    }
}

/// The generator `A(t)`: off-diagonal `(i, j)` entries are `a_ij(t)`,
/// diagonal entries make every row sum to zero.
pub fn generator_matrix(sys: &SystemDefinition, t: f64) -> Result<DenseMatrix> {
    let n = sys.agent_count();
    let mut a = DenseMatrix::zeros(n);
    for i in 0..n {
        let mut total = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = sys.weight(i, j).evaluate(t)?;
            a.set(i, j, w);
            total += w;
        }
        a.set(i, i, -total);
    }
    Ok(a)
}

/// Generator split `A(t) = constant + reciprocal / t`, valid on a stretch
/// where no weight changes segment.
struct GeneratorSplit {
    constant: DenseMatrix,
    reciprocal: Option<DenseMatrix>,
}

impl GeneratorSplit {
    fn collect(sys: &SystemDefinition, t: f64) -> Self {
        let n = sys.agent_count();
        let mut constant = DenseMatrix::zeros(n);
        let mut reciprocal = DenseMatrix::zeros(n);
        let mut has_reciprocal = false;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                match sys.weight(i, j).segment_at(t).map(|s| s.form()) {
                    Some(SegmentForm::Constant(c)) if c != 0.0 => {
                        constant.add_at(i, j, c);
                        constant.add_at(i, i, -c);
                    }
                    Some(SegmentForm::Reciprocal(c)) if c != 0.0 => {
                        reciprocal.add_at(i, j, c);
                        reciprocal.add_at(i, i, -c);
                        has_reciprocal = true;
                    }
                    _ => {}
                }
            }
        }
        GeneratorSplit {
            constant,
            reciprocal: has_reciprocal.then_some(reciprocal),
        }
    }

    fn derivative(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut dx = self.constant.matvec(x);
        if let Some(rec) = &self.reciprocal {
            let extra = rec.matvec(x);
            for (d, e) in dx.iter_mut().zip(extra) {
                *d += e / t;
            }
        }
        dx
    }
}

/// Integrates the system from `x0` over `[t0, t1]`.
///
/// Every segment boundary inside the span becomes a sample; numerical
/// failure (a non-finite state) is an error, never silently repaired.
pub fn simulate(
    sys: &Arc<SystemDefinition>,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = sys.agent_count();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "x0 has length {}, system has {} agents",
            x0.len(),
            n
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure { t: t0 });
    }
    if !(t0 < t1) {
        return Err(Error::InvalidInterval { t0, t1 });
    }
    if t0 < sys.domain_start() {
        return Err(Error::BeforeDomainStart {
            t: t0,
            start: sys.domain_start(),
        });
    }

    let breakpoints = sys.breakpoints(t0, t1);
    let mut knots = Vec::with_capacity(breakpoints.len() + 2);
    knots.push(t0);
    knots.extend_from_slice(&breakpoints);
    knots.push(t1);

    let mut run = Run {
        samples: vec![State {
            t: t0,
            x: x0.to_vec(),
        }],
        x: x0.to_vec(),
        stride: cfg.sample_stride,
        step_count: 0,
    };

    for pair in knots.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if !(a < b) {
            continue;
        }
        let split = GeneratorSplit::collect(sys, a);
        let use_exponential =
            cfg.method == SolverMethod::ExactExponential && split.reciprocal.is_none();
        if use_exponential {
            run.exponential_span(&split.constant, a, b, cfg)?;
        } else {
            run.adaptive_span(&split, a, b, cfg)?;
        }
    }

    Ok(Trajectory {
        samples: run.samples,
        breakpoints,
        system: Arc::clone(sys),
        config: cfg.clone(),
    })
}

struct Run {
    samples: Vec<State>,
    x: Vec<f64>,
    stride: usize,
    step_count: usize,
}

impl Run {
    fn record(&mut self, t: f64, boundary: bool) {
        self.step_count += 1;
        if boundary || self.step_count.is_multiple_of(self.stride) {
            self.samples.push(State {
                t,
                x: self.x.clone(),
            });
        }
    }

    fn check_finite(&self, t: f64) -> Result<()> {
        if self.x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NumericalFailure { t })
        }
    }

    /// Uniform exact-exponential steps across a constant stretch. One Padé
    /// exponential is reused for all steps of the stretch.
    fn exponential_span(
        &mut self,
        generator: &DenseMatrix,
        a: f64,
        b: f64,
        cfg: &SolverConfig,
    ) -> Result<()> {
        let span = b - a;
        let steps = (span / cfg.max_step).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let step_matrix = expm(&generator.scale(h));
        for k in 1..=steps {
            self.x = step_matrix.matvec(&self.x);
            let t = if k == steps { b } else { a + h * k as f64 };
            self.check_finite(t)?;
            self.record(t, k == steps);
        }
        Ok(())
    }

    /// Dormand-Prince 5(4) with standard step-size control.
    fn adaptive_span(
        &mut self,
        split: &GeneratorSplit,
        a: f64,
        b: f64,
        cfg: &SolverConfig,
    ) -> Result<()> {
        let n = self.x.len();
        let tol = cfg.step_tolerance;
        let mut t = a;
        let mut h = cfg.max_step.min(b - a);
        loop {
            let last = h >= b - t - 1e-14 * b.abs().max(1.0);
            if last {
                h = b - t;
            }

            let k1 = split.derivative(t, &self.x);
            let mut y = stage(&self.x, h, &[(A21, &k1)]);
            let k2 = split.derivative(t + C2 * h, &y);
            y = stage(&self.x, h, &[(A31, &k1), (A32, &k2)]);
            let k3 = split.derivative(t + C3 * h, &y);
            y = stage(&self.x, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            let k4 = split.derivative(t + C4 * h, &y);
            y = stage(
                &self.x,
                h,
                &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
            );
            let k5 = split.derivative(t + C5 * h, &y);
            y = stage(
                &self.x,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            );
            let k6 = split.derivative(t + h, &y);
            let y5 = stage(
                &self.x,
                h,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            );
            let k7 = split.derivative(t + h, &y5);

            // Weighted RMS of the embedded error estimate.
            let mut err = 0.0f64;
            for i in 0..n {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let scale = tol * (1.0 + self.x[i].abs().max(y5[i].abs()));
                err += (e / scale) * (e / scale);
            }
            err = (err / n as f64).sqrt();

            if !err.is_finite() {
                return Err(Error::NumericalFailure { t });
            }

            if err <= 1.0 {
                t = if last { b } else { t + h };
                self.x = y5;
                self.check_finite(t)?;
                self.record(t, last);
                if last {
                    return Ok(());
                }
                let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
                h = (h * factor).min(cfg.max_step);
            } else {
                let factor = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                h *= factor;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::NumericalFailure { t });
            }
        }
    }
}

fn stage(base: &[f64], h: f64, terms: &[(f64, &Vec<f64>)]) -> Vec<f64> {
    let mut out = base.to_vec();
    for &(coeff, k) in terms {
        for (o, &v) in out.iter_mut().zip(k.iter()) {
            *o += h * coeff * v;
        }
    }
    out
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Result of scanning a trajectory for consensus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConsensusOutcome {
    /// First sample time at which the diameter fell to the tolerance.
    Reached {
        t: f64,
    },
    NotReached {
        final_diameter: f64,
    },
}

/// First sample time with diameter at most `tol`.
pub fn detect_consensus(traj: &Trajectory, tol: f64) -> ConsensusOutcome {
    assert!(tol > 0.0, "consensus tolerance must be positive");
    for s in traj.samples() {
        if s.diameter() <= tol {
            return ConsensusOutcome::Reached { t: s.t };
        }
    }
    ConsensusOutcome::NotReached {
        final_diameter: traj.final_state().diameter(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{TimeSegment, WeightFunction};

    fn symmetric_pair(c: f64, t_end: f64) -> Arc<SystemDefinition> {
        let w =
            || WeightFunction::new(vec![TimeSegment::constant(0.0, t_end, c).unwrap()]).unwrap();
        Arc::new(
            SystemDefinition::builder(2)
                .weight(0, 1, w())
                .weight(1, 0, w())
                .build()
                .unwrap(),
        )
    }

    #[test]
    fn generator_of_symmetric_pair() {
        let sys = symmetric_pair(1.0, f64::INFINITY);
        let a = generator_matrix(&sys, 0.3).unwrap();
        assert_eq!(a.row(0), &[-1.0, 1.0]);
        assert_eq!(a.row(1), &[1.0, -1.0]);
    }

    #[test]
    fn generator_zero_when_weights_silent() {
        let sys = symmetric_pair(1.0, 1.0);
        let a = generator_matrix(&sys, 2.0).unwrap();
        assert_eq!(a, DenseMatrix::zeros(2));
    }

    #[test]
    fn generator_rows_of_three_agent_block() {
        let rho = 2.0;
        let sys = SystemDefinition::builder(3)
            .weight(
                0,
                1,
                WeightFunction::new(vec![TimeSegment::constant(0.0, 1.0, 1.0).unwrap()]).unwrap(),
            )
            .weight(
                1,
                0,
                WeightFunction::new(vec![TimeSegment::constant(0.0, 1.0, rho).unwrap()]).unwrap(),
            )
            .build()
            .unwrap();
        let a = generator_matrix(&sys, 0.0).unwrap();
        assert_eq!(a.row(0), &[-1.0, 1.0, 0.0]);
        assert_eq!(a.row(1), &[rho, -rho, 0.0]);
        assert_eq!(a.row(2), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn symmetric_pair_gap_decays_exponentially() {
        let sys = symmetric_pair(1.0, f64::INFINITY);
        let traj = simulate(&sys, &[0.0, 1.0], 0.0, 4.0, &SolverConfig::default()).unwrap();
        for s in traj.samples() {
            let expect = (-2.0 * s.t).exp();
            let got = s.x[1] - s.x[0];
            assert!(
                (got - expect).abs() <= 1e-12 * expect.max(1e-12),
                "t={}: got {got}, expected {expect}",
                s.t
            );
        }
    }

    #[test]
    fn consensus_initial_condition_is_equilibrium() {
        let sys = symmetric_pair(3.0, f64::INFINITY);
        let traj = simulate(&sys, &[2.5, 2.5], 0.0, 3.0, &SolverConfig::default()).unwrap();
        for s in traj.samples() {
            assert!((s.x[0] - 2.5).abs() < 1e-12 && (s.x[1] - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn breakpoints_become_samples() {
        // One active burst [1, 1.25): both edges must appear as samples.
        let w =
            || WeightFunction::new(vec![TimeSegment::constant(1.0, 1.25, 1.0).unwrap()]).unwrap();
        let sys = Arc::new(
            SystemDefinition::builder(2)
                .weight(0, 1, w())
                .weight(1, 0, w())
                .build()
                .unwrap(),
        );
        let traj = simulate(&sys, &[0.0, 1.0], 0.0, 2.0, &SolverConfig::default()).unwrap();
        assert_eq!(traj.breakpoints(), &[1.0, 1.25]);
        assert!(traj.sample_index_at(1.0).is_some());
        assert!(traj.sample_index_at(1.25).is_some());
        // Gap contracts only during the burst: e^{-2 * 0.25}.
        let end = traj.final_state();
        assert!((end.x[1] - end.x[0] - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn sample_stride_keeps_boundaries() {
        let sys = symmetric_pair(1.0, f64::INFINITY);
        let cfg = SolverConfig {
            sample_stride: 7,
            ..SolverConfig::default()
        };
        let traj = simulate(&sys, &[0.0, 1.0], 0.0, 5.0, &cfg).unwrap();
        let dense = simulate(&sys, &[0.0, 1.0], 0.0, 5.0, &SolverConfig::default()).unwrap();
        assert!(traj.samples().len() < dense.samples().len());
        assert_eq!(traj.end_time(), 5.0);
    }

    #[test]
    fn adaptive_matches_exponential_on_constant_weights() {
        let sys = symmetric_pair(1.0, f64::INFINITY);
        let exact = simulate(&sys, &[0.0, 1.0], 0.0, 3.0, &SolverConfig::default()).unwrap();
        let rk_cfg = SolverConfig {
            method: SolverMethod::RungeKutta,
            ..SolverConfig::default()
        };
        let rk = simulate(&sys, &[0.0, 1.0], 0.0, 3.0, &rk_cfg).unwrap();
        let a = exact.final_state();
        let b = rk.final_state();
        for i in 0..2 {
            assert!((a.x[i] - b.x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn reciprocal_weights_match_closed_form() {
        // Symmetric 1/t weights from t = 1. The gap obeys
        // gap' = -(a_12 + a_21) gap = -(2/t) gap, so the diameter is exactly
        // 1/t^2 (not 1/t: the two symmetric weights each contribute).
        let w = || {
            WeightFunction::with_domain_start(
                1.0,
                vec![TimeSegment::reciprocal(1.0, f64::INFINITY, 1.0).unwrap()],
            )
            .unwrap()
        };
        let sys = Arc::new(
            SystemDefinition::builder(2)
                .domain_start(1.0)
                .weight(0, 1, w())
                .weight(1, 0, w())
                .build()
                .unwrap(),
        );
        let traj = simulate(&sys, &[0.0, 1.0], 1.0, 40.0, &SolverConfig::default()).unwrap();
        for s in traj.samples() {
            let expect = 1.0 / (s.t * s.t);
            assert!(
                (s.diameter() - expect).abs() <= 1e-9 * expect,
                "t={}: diameter {} vs {expect}",
                s.t,
                s.diameter()
            );
        }
    }

    #[test]
    fn state_at_interpolates_by_reintegration() {
        let sys = symmetric_pair(1.0, f64::INFINITY);
        let traj = simulate(&sys, &[0.0, 1.0], 0.0, 2.0, &SolverConfig::default()).unwrap();
        let s = traj.state_at(0.5 * std::f64::consts::FRAC_PI_4).unwrap();
        let expect = (-2.0 * s.t).exp();
        assert!((s.x[1] - s.x[0] - expect).abs() < 1e-11);
        assert!(traj.state_at(5.0).is_err());
    }

    #[test]
    fn non_finite_state_is_a_loud_failure() {
        let sys = symmetric_pair(1.0, f64::INFINITY);
        let err = simulate(&sys, &[f64::NAN, 0.0], 0.0, 1.0, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { .. }));
    }

    #[test]
    fn detect_consensus_on_symmetric_pair() {
        let sys = symmetric_pair(1.0, f64::INFINITY);
        let traj = simulate(&sys, &[0.0, 1.0], 0.0, 10.0, &SolverConfig::default()).unwrap();
        match detect_consensus(&traj, 1e-6) {
            ConsensusOutcome::Reached { t } => {
                // Gap e^{-2t} crosses 1e-6 at ln(1e6)/2; sampling adds at
                // most one max_step of delay.
                let crossing = (1e6f64).ln() / 2.0;
                assert!(t >= crossing - 1e-9 && t <= crossing + 0.1 + 1e-9, "t={t}");
            }
            other => panic!("expected consensus, got {other:?}"),
        }
        match detect_consensus(&traj, 1e-12) {
            ConsensusOutcome::NotReached { final_diameter } => {
                assert!(final_diameter > 1e-12);
            }
            other => panic!("expected no consensus, got {other:?}"),
        }
    }

    #[test]
    fn constant_trajectory_reaches_consensus_immediately() {
        let sys = symmetric_pair(1.0, f64::INFINITY);
        let traj = simulate(&sys, &[1.0, 1.0], 0.0, 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(
            detect_consensus(&traj, 1e-9),
            ConsensusOutcome::Reached { t: 0.0 }
        );
    }
}
