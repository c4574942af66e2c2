//! Property and invariant suites: exact-integral algebra against independent
//! quadrature, integrator monotonicity and convergence, the sorted-view
//! structure, and the internal consistency of the cut diagnostics.

mod common;

use common::{coord_close, rel_close, run_scenario, scenario_roster};
use consensus_dynamics::{
    lambda_coefficient, lyapunov_gap_check, max_ratio, oracle_three_agent_step, ordered_view,
    product_bound, rescaling_sequence, running_max_ratio, simulate, sort_permutation, AgentSet,
    DenseMatrix, RatioValue, RhoSequence, SamplingPlan, SolverConfig, SolverMethod,
    SystemDefinition, TimeSegment, WeightFunction,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Weights: closed-form integrals vs an independent midpoint quadrature.
// ---------------------------------------------------------------------------

/// Midpoint-rule quadrature of the cut weight, built directly from the
/// per-pair weight functions so it shares no code with `cut_integral`.
fn quadrature_cut(sys: &SystemDefinition, s: AgentSet, a: f64, b: f64, points: usize) -> f64 {
    let n = sys.agent_count();
    let h = (b - a) / points as f64;
    let mut total = 0.0;
    for k in 0..points {
        let t = a + h * (k as f64 + 0.5);
        let mut w = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j && s.contains(i) && !s.contains(j) {
                    w += sys.weight(i, j).evaluate(t).unwrap();
                }
            }
        }
        total += w * h;
    }
    total
}

#[test]
fn cut_integral_matches_quadrature_on_scenario_segments() {
    for sc in scenario_roster() {
        let sys = &sc.system;
        let n = sys.agent_count();
        let start = sys.domain_start();
        let horizon = sc.horizon.min(start + 30.0);
        let mut edges = vec![start];
        edges.extend(sys.breakpoints(start, horizon));
        edges.push(horizon);
        // Every elementary segment, a handful of cuts.
        let cuts: Vec<AgentSet> = AgentSet::proper_subsets(n).take(7).collect();
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a >= b {
                continue;
            }
            for &cut in &cuts {
                let exact = sys.cut_integral(cut, a, b).unwrap();
                let quad = quadrature_cut(sys, cut, a, b, 10_000);
                assert!(
                    (exact - quad).abs() <= 1e-6 * exact.abs().max(1e-9),
                    "{}: cut {} on [{a}, {b}]: exact {exact} vs quadrature {quad}",
                    sc.name,
                    cut.label_string()
                );
            }
        }
    }
}

#[test]
fn evaluate_is_non_negative_on_random_probes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for sc in scenario_roster() {
        let sys = &sc.system;
        let n = sys.agent_count();
        let start = sys.domain_start();
        for _ in 0..100_000 {
            let t = start + rng.gen::<f64>() * (sc.horizon - start);
            let i = rng.gen_range(0..n);
            let j = (i + 1 + rng.gen_range(0..n - 1)) % n;
            assert!(sys.weight(i, j).evaluate(t).unwrap() >= 0.0);
        }
    }
}

/// Random piecewise weight: alternating gaps and segments with constant or
/// reciprocal forms.
fn weight_strategy() -> impl Strategy<Value = WeightFunction> {
    (
        proptest::collection::vec((0.01f64..3.0, 0.01f64..3.0), 1..6),
        proptest::collection::vec(0.0f64..5.0, 6),
        any::<bool>(),
    )
        .prop_map(|(spans, magnitudes, reciprocal)| {
            let mut t = 0.5; // keep reciprocal forms away from 0
            let mut segments = Vec::new();
            for (k, (gap, width)) in spans.into_iter().enumerate() {
                t += gap;
                let c = magnitudes[k % magnitudes.len()];
                let seg = if reciprocal && k % 2 == 0 {
                    TimeSegment::reciprocal(t, t + width, c).unwrap()
                } else {
                    TimeSegment::constant(t, t + width, c).unwrap()
                };
                segments.push(seg);
                t += width;
            }
            WeightFunction::new(segments).unwrap()
        })
}

proptest! {
    #[test]
    fn integral_is_additive_over_adjacent_intervals(
        w in weight_strategy(),
        raw in proptest::collection::vec(0.0f64..40.0, 3),
    ) {
        let mut ts = raw.clone();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (t0, t1, t2) = (ts[0], ts[1], ts[2]);
        let whole = w.integrate(t0, t2).unwrap();
        let split = w.integrate(t0, t1).unwrap() + w.integrate(t1, t2).unwrap();
        prop_assert!((whole - split).abs() <= 1e-12, "{whole} vs {split}");
    }

    #[test]
    fn sort_permutation_is_lexicographic(x in proptest::collection::vec(-5.0f64..5.0, 2..9)) {
        // Force some ties.
        let mut x = x;
        if x.len() >= 4 {
            let v = x[0];
            x[2] = v;
        }
        let sigma = sort_permutation(&x);
        let y = sigma.apply(&x);
        for k in 1..y.len() {
            let strictly = y[k - 1] < y[k];
            let tie_by_label = y[k - 1] == y[k] && sigma.original(k - 1) < sigma.original(k);
            prop_assert!(strictly || tie_by_label);
        }
    }

    #[test]
    fn three_agent_period_map_respects_span_bound(
        gaps in (0.0f64..2.0, 0.0f64..2.0),
        base in -3.0f64..3.0,
        rho in 1.0f64..50.0,
    ) {
        // For any sorted start, the outer gap after a full period is at
        // least (1 - 2 lambda) times the starting outer gap.
        let x = [base, base + gaps.0, base + gaps.0 + gaps.1];
        let (_, full) = oracle_three_agent_step(&x, rho);
        let lam = lambda_coefficient(rho);
        let before = x[2] - x[0];
        let after = full[2] - full[0];
        prop_assert!(after >= (1.0 - 2.0 * lam) * before - 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Dynamics: generator structure, monotonicity, integrator convergence.
// ---------------------------------------------------------------------------

#[test]
fn generator_rows_sum_to_zero_at_random_times() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for sc in scenario_roster() {
        let sys = &sc.system;
        let start = sys.domain_start();
        for _ in 0..10_000 {
            let t = start + rng.gen::<f64>() * (sc.horizon - start);
            let a = consensus_dynamics::generator_matrix(sys, t).unwrap();
            for i in 0..sys.agent_count() {
                let s: f64 = a.row(i).iter().sum();
                assert!(
                    s.abs() <= 1e-14,
                    "{}: row {i} sums to {s} at t={t}",
                    sc.name
                );
            }
        }
    }
}

#[test]
fn extrema_are_monotone_along_trajectories() {
    for sc in scenario_roster() {
        let traj = run_scenario(&sc);
        let d0 = consensus_dynamics::diameter(&sc.x0);
        let slack = 1e-9 * d0.max(1.0);
        let mut prev_t = f64::NEG_INFINITY;
        let mut prev_max = f64::INFINITY;
        let mut prev_min = f64::NEG_INFINITY;
        let mut prev_diam = f64::INFINITY;
        for s in traj.samples() {
            assert!(
                s.t > prev_t,
                "{}: sample times not strictly increasing",
                sc.name
            );
            prev_t = s.t;
            let hi = s.x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = s.x.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(hi <= prev_max + slack, "{}: max grew at t={}", sc.name, s.t);
            assert!(lo >= prev_min - slack, "{}: min fell at t={}", sc.name, s.t);
            assert!(
                s.diameter() <= prev_diam + slack,
                "{}: diameter grew at t={}",
                sc.name,
                s.t
            );
            prev_max = hi;
            prev_min = lo;
            prev_diam = s.diameter();
        }
    }
}

#[test]
fn halving_the_tolerance_barely_moves_the_final_state() {
    let sc = consensus_dynamics::build_two_agent_reciprocal(2).unwrap();
    for tol in [1e-6, 1e-8] {
        let run = |t: f64| {
            let cfg = SolverConfig {
                method: SolverMethod::RungeKutta,
                step_tolerance: t,
                max_step: 1.0,
                sample_stride: 1,
            };
            simulate(&sc.system, &sc.x0, 1.0, sc.horizon, &cfg).unwrap()
        };
        let coarse = run(tol);
        let fine = run(tol / 2.0);
        for (a, b) in coarse
            .final_state()
            .x
            .iter()
            .zip(fine.final_state().x.iter())
        {
            assert!(
                (a - b).abs() <= 10.0 * tol,
                "tol={tol}: finals differ by {}",
                (a - b).abs()
            );
        }
    }
}

#[test]
fn exponential_and_adaptive_methods_agree() {
    for sc in [
        consensus_dynamics::build_ultimate_counterexample(10).unwrap(),
        consensus_dynamics::build_three_agent(&RhoSequence::constant(1.0), 5).unwrap(),
        consensus_dynamics::build_odd_chain(2, &RhoSequence::constant(2.0), 2).unwrap(),
        consensus_dynamics::build_two_agent_constant(5).unwrap(),
    ] {
        let exact = run_scenario(&sc);
        let cfg = SolverConfig {
            method: SolverMethod::RungeKutta,
            ..SolverConfig::default()
        };
        let adaptive = simulate(
            &sc.system,
            &sc.x0,
            sc.system.domain_start(),
            sc.horizon,
            &cfg,
        )
        .unwrap();
        for (a, b) in exact
            .final_state()
            .x
            .iter()
            .zip(adaptive.final_state().x.iter())
        {
            assert!(
                coord_close(*a, *b, 1e-8),
                "{}: methods disagree: {a} vs {b}",
                sc.name
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Ordering: the sorted-view structure along every scenario.
// ---------------------------------------------------------------------------

#[test]
fn sorted_view_trio_holds_on_all_scenarios() {
    for sc in scenario_roster() {
        let traj = run_scenario(&sc);
        let view = ordered_view(&traj);
        let slack = 1e-9 * consensus_dynamics::diameter(&sc.x0).max(1.0);
        let mut prev_lowest = f64::NEG_INFINITY;
        let mut prev_highest = f64::INFINITY;
        let n = view.agent_count();
        for k in 0..view.len() {
            let y = view.sorted_positions(k);
            for i in 1..n {
                assert!(y[i - 1] <= y[i], "{}: unsorted at sample {k}", sc.name);
            }
            assert!(y[0] >= prev_lowest - slack, "{}: y_1 fell", sc.name);
            assert!(y[n - 1] <= prev_highest + slack, "{}: y_n rose", sc.name);
            let diam = traj.samples()[k].diameter();
            assert!(
                (y[n - 1] - y[0] - diam).abs() <= 1e-12 * diam.max(1.0),
                "{}: diameter identity broke at sample {k}",
                sc.name
            );
            prev_lowest = y[0];
            prev_highest = y[n - 1];
        }
    }
}

#[test]
fn uniformly_open_gaps_freeze_the_block_sets() {
    for sc in scenario_roster() {
        let traj = run_scenario(&sc);
        let view = ordered_view(&traj);
        for l in 1..view.agent_count() {
            for window in consensus_dynamics::constancy_windows(&view, l) {
                assert!(
                    consensus_dynamics::blocks_constant_on(&view, window, l),
                    "{}: blocks changed on window {window:?} at l={l}",
                    sc.name
                );
            }
        }
    }
}

/// Admissible random weights: a symmetric non-negative base with a per-edge
/// asymmetry in [1/R, R]. Each directed pair then has ratio within [1/R, R],
/// and every cut sum ratio inherits the bound as a weighted mediant.
fn random_admissible_weights(rng: &mut ChaCha8Rng, n: usize, ratio_bound: f64) -> DenseMatrix {
    let mut b = DenseMatrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < 0.25 {
                continue; // leave some edges silent
            }
            let base = rng.gen::<f64>() * 2.0;
            let skew = ratio_bound.powf(rng.gen::<f64>() * 2.0 - 1.0);
            b.set(i, j, base * skew.sqrt());
            b.set(j, i, base / skew.sqrt());
        }
    }
    b
}

#[test]
fn weighted_gap_inequalities_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut accepted = 0;
    while accepted < 300 {
        let n = rng.gen_range(2..=6);
        let ratio_bound = [1.0, 2.0, 10.0][rng.gen_range(0..3)];
        let b = random_admissible_weights(&mut rng, n, ratio_bound);
        let mut y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        y.sort_by(|a, c| a.partial_cmp(c).unwrap());
        let l = rng.gen_range(1..n);
        let bounds = lyapunov_gap_check(&y, &b, ratio_bound, l).unwrap();
        assert!(bounds.lhs >= -1e-12, "lhs = {}", bounds.lhs);
        assert!(
            bounds.lhs >= bounds.rhs - 1e-12,
            "lhs {} < rhs {}",
            bounds.lhs,
            bounds.rhs
        );
        accepted += 1;
    }
}

// ---------------------------------------------------------------------------
// Analysis: ratio monotonicity, enumeration consistency, rescaling marks.
// ---------------------------------------------------------------------------

#[test]
fn running_max_ratio_is_monotone_and_at_least_one() {
    for sc in scenario_roster() {
        let sys = &sc.system;
        let start = sys.domain_start();
        let plan = SamplingPlan::covering(sys, start, sc.horizon);
        let mut prev = 0.0;
        for k in 0..=20 {
            let t = start + (sc.horizon - start) * k as f64 / 20.0;
            let r = running_max_ratio(sys, t, &plan).unwrap().as_f64();
            assert!(r >= 1.0, "{}: r = {r} at t = {t}", sc.name);
            assert!(r >= prev, "{}: running max decreased at t = {t}", sc.name);
            prev = r;
        }
    }
}

#[test]
fn half_enumeration_with_both_orientations_matches_full() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for sc in scenario_roster() {
        let sys = &sc.system;
        let n = sys.agent_count();
        let start = sys.domain_start();
        for _ in 0..50 {
            let t = start + rng.gen::<f64>() * (sc.horizon - start);
            let full = max_ratio(sys, t).unwrap().as_f64();
            // Subsets containing agent 0 cover each complement pair once.
            let mut half: f64 = 1.0;
            for s in AgentSet::proper_subsets(n).filter(|s| s.contains(0)) {
                let r = consensus_dynamics::ratio_r_s(sys, s, t).unwrap().as_f64();
                let r_comp = consensus_dynamics::ratio_r_s(sys, s.complement(n), t)
                    .unwrap()
                    .as_f64();
                half = half.max(r).max(r_comp);
            }
            assert!(
                half == full || (half.is_infinite() && full.is_infinite()),
                "{}: half {half} vs full {full} at t={t}",
                sc.name
            );
        }
    }
}

#[test]
fn rescaling_steps_deliver_unit_influence_to_every_cut() {
    let cases = vec![
        (
            consensus_dynamics::build_three_agent(&RhoSequence::power(2.0), 12).unwrap(),
            5,
        ),
        (
            consensus_dynamics::build_two_agent_reciprocal(4).unwrap(),
            4,
        ),
        (consensus_dynamics::build_two_agent_constant(8).unwrap(), 6),
        (
            consensus_dynamics::build_odd_chain(5, &RhoSequence::constant(1.0), 12).unwrap(),
            2,
        ),
    ];
    for (sc, periods) in cases {
        let sys = &sc.system;
        let resc = rescaling_sequence(sys, periods).unwrap();
        for p in 0..resc.period_count() {
            let steps = resc.intermediates(p);
            for q in 0..steps.len() - 1 {
                for s in AgentSet::proper_subsets(sys.agent_count()) {
                    let mass = sys.cut_integral(s, steps[q], steps[q + 1]).unwrap();
                    assert!(
                        mass >= 1.0 - 1e-9,
                        "{}: cut {} got {mass} on step ({p}, {q})",
                        sc.name,
                        s.label_string()
                    );
                }
            }
        }
    }
}

#[test]
fn product_bound_is_a_positive_non_increasing_product() {
    let sc = consensus_dynamics::build_three_agent(&RhoSequence::Linear, 12).unwrap();
    let resc = rescaling_sequence(&sc.system, 12).unwrap();
    let ratios = resc.max_ratios();
    let mut prev = 1.0;
    for upto in 0..=ratios.len() {
        let value = product_bound(&ratios[..upto], 3);
        assert!(value > 0.0 && value <= prev + 1e-15);
        let log_sum: f64 = ratios[..upto]
            .iter()
            .map(|r| consensus_dynamics::contraction_bound(3, *r).ln())
            .sum();
        assert!(rel_close(value.ln(), log_sum, 1e-12) || (upto == 0 && log_sum == 0.0));
        prev = value;
    }
}

#[test]
fn ratio_value_branches_are_explicit() {
    assert_eq!(RatioValue::from_sums(3.0, 0.0), RatioValue::Infinite);
    assert!(RatioValue::from_sums(0.0, 0.0).is_finite());
    assert_eq!(RatioValue::Infinite.as_f64(), f64::INFINITY);
}
