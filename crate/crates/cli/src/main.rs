//! Command-line front end: simulate the built-in scenarios, compute the
//! analysis report (rescaling table, contraction audit, assumption checks),
//! reproduce the 11-agent diameter study, or run the assumption checkers
//! alone.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 connectivity-horizon error (a cut starves before reaching unit
//! influence).

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use consensus_dynamics::{
    build_odd_chain, check_cut_balance, contraction_audit, detect_consensus, moreau_edge_set,
    persistent_connectivity_report, rescaling_sequence, simulate, slow_divergence_check,
    ConsensusOutcome, Error as CoreError, RescalingSequence, RhoSequence, SamplingPlan, Scenario,
    SolverConfig, SystemDefinition, Trajectory,
};
use output::{render_analysis, write_diameter_csv, write_trajectory_csv, AnalysisReport};

const CONSENSUS_TOLERANCE: f64 = 1e-9;
const MOREAU_WINDOW: f64 = 1.0;
const MOREAU_DELTA: f64 = 0.1;
const PERSISTENCE_CHECKPOINTS: usize = 4;

#[derive(Parser)]
#[command(
    name = "consensus-dynamics",
    version,
    about = "Simulate and analyze continuous-time consensus under time-varying weights"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write the trajectory CSV.
    Simulate(RunArgs),
    /// Rescaling table, contraction audit and assumption checks.
    Analyze(RunArgs),
    /// Reproduce the 11-agent chain diameter study (three gain sequences).
    Figure1(Figure1Args),
    /// Run the assumption checkers only.
    Check(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to a JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for output files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override scenario.periods from the config.
    #[arg(long)]
    periods: Option<usize>,
    /// Override solver.tolerance from the config.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct Figure1Args {
    /// Optional JSON run configuration; only the solver section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the three CSV files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Schedule periods to simulate.
    #[arg(long, default_value_t = 400)]
    periods: usize,
    /// Override the solver tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
}

struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn config(message: impl Into<String>) -> CliError {
        CliError {
            message: message.into(),
            code: 2,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> CliError {
        let code = match e {
            CoreError::NumericalFailure { .. } => 3,
            CoreError::ConnectivityHorizon { .. } => 4,
            _ => 2,
        };
        CliError {
            message: e.to_string(),
            code,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError {
            message: e.to_string(),
            code: 2,
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Figure1(args) => cmd_figure1(&args),
        Command::Check(args) => cmd_check(&args),
    }
}

fn load_run(args: &RunArgs) -> Result<(RunConfig, Scenario, SolverConfig), CliError> {
    let mut cfg = RunConfig::load(&args.config).map_err(CliError::config)?;
    if let Some(p) = args.periods {
        cfg.scenario.periods = p;
    }
    if let Some(tol) = args.tolerance {
        cfg.solver.tolerance = tol;
    }
    let scenario = cfg.scenario.build()?;
    let solver = cfg.solver_config();
    std::fs::create_dir_all(&args.out)?;
    Ok((cfg, scenario, solver))
}

fn run_scenario(sc: &Scenario, solver: &SolverConfig) -> Result<Trajectory, CliError> {
    let start = sc.system.domain_start();
    Ok(simulate(&sc.system, &sc.x0, start, sc.horizon, solver)?)
}

fn fmt_rho(rho: &RhoSequence) -> String {
    match rho {
        RhoSequence::Constant { value } => format!("constant({value})"),
        RhoSequence::Power { exponent } => format!("(1+p)^{exponent}"),
        RhoSequence::Linear => "max(1,p)".to_string(),
        RhoSequence::Custom { values } => format!("custom({} values)", values.len()),
    }
}

fn cmd_simulate(args: &RunArgs) -> Result<(), CliError> {
    let (cfg, scenario, solver) = load_run(args)?;
    let traj = run_scenario(&scenario, &solver)?;
    let csv_path = args.out.join(&cfg.outputs.trajectory_csv);
    write_trajectory_csv(&csv_path, &traj)?;
    let final_state = traj.final_state();
    println!(
        "{}: {} samples over [{}, {}] written to {}",
        scenario.name,
        traj.samples().len(),
        traj.start_time(),
        traj.end_time(),
        csv_path.display()
    );
    println!("final diameter: {:.12e}", final_state.diameter());
    match detect_consensus(&traj, CONSENSUS_TOLERANCE) {
        ConsensusOutcome::Reached { t } => {
            println!("consensus: reached at t = {t:.6} (diameter <= {CONSENSUS_TOLERANCE:e})");
        }
        ConsensusOutcome::NotReached { final_diameter } => {
            println!("consensus: not reached by the horizon (final diameter {final_diameter:.6e})");
        }
    }
    Ok(())
}

/// The widest rescaling the generated schedule supports, up to `upper`
/// periods. A starving first period is a genuine connectivity-horizon error.
fn widest_rescaling(sys: &SystemDefinition, upper: usize) -> Result<RescalingSequence, CoreError> {
    match rescaling_sequence(sys, upper) {
        Ok(r) => return Ok(r),
        Err(CoreError::ConnectivityHorizon { .. }) if upper > 1 => {}
        Err(e) => return Err(e),
    }
    let mut lo = 1usize;
    let mut hi = upper - 1;
    let mut best: Option<RescalingSequence> = None;
    while lo <= hi {
        let mid = lo + (hi - lo) / 2;
        match rescaling_sequence(sys, mid) {
            Ok(r) => {
                best = Some(r);
                lo = mid + 1;
            }
            Err(CoreError::ConnectivityHorizon { .. }) if mid > 1 => hi = mid - 1,
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| rescaling_sequence(sys, 1).unwrap_err())
}

fn cmd_analyze(args: &RunArgs) -> Result<(), CliError> {
    let (cfg, scenario, solver) = load_run(args)?;
    let sys = &scenario.system;
    let resc = widest_rescaling(sys, cfg.scenario.periods)?;
    let horizon = *resc.times().last().expect("at least t_0");

    let traj = simulate(sys, &scenario.x0, sys.domain_start(), horizon, &solver)?;
    let audit = contraction_audit(&traj, &resc)?;
    let divergence = slow_divergence_check(resc.max_ratios(), sys.agent_count());
    let plan = SamplingPlan::covering(sys, sys.domain_start(), horizon);
    let balance = check_cut_balance(sys, &plan, horizon)?;
    let persistence = persistent_connectivity_report(sys, horizon, PERSISTENCE_CHECKPOINTS)?;
    let moreau = moreau_edge_set(sys, sys.domain_start(), MOREAU_WINDOW, MOREAU_DELTA)?;

    let text = render_analysis(&AnalysisReport {
        scenario_name: &scenario.name,
        agent_count: sys.agent_count(),
        rescaling: &resc,
        audit: &audit,
        divergence: &divergence,
        balance: &balance,
        persistence: &persistence,
        moreau: &moreau,
        moreau_window: MOREAU_WINDOW,
        moreau_delta: MOREAU_DELTA,
    });
    let report_path = args.out.join(&cfg.outputs.analysis_report);
    std::fs::write(&report_path, &text)?;
    print!("{text}");
    println!("report written to {}", report_path.display());
    Ok(())
}

fn cmd_figure1(args: &Figure1Args) -> Result<(), CliError> {
    let mut solver = SolverConfig::default();
    if let Some(path) = &args.config {
        let cfg = RunConfig::load(path).map_err(CliError::config)?;
        solver = cfg.solver_config();
    }
    if let Some(tol) = args.tolerance {
        solver.step_tolerance = tol;
    }
    std::fs::create_dir_all(&args.out)?;

    let runs = [
        ("figure1_constant.csv", RhoSequence::constant(1.0)),
        ("figure1_power_one_fifth.csv", RhoSequence::power(0.2)),
        ("figure1_power_two_fifths.csv", RhoSequence::power(0.4)),
    ];
    // The three simulations are independent; run them concurrently.
    let results: Vec<Result<(String, f64), CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = runs
            .iter()
            .map(|(file, rho)| {
                let solver = solver.clone();
                let out: &Path = &args.out;
                scope.spawn(move || -> Result<(String, f64), CliError> {
                    let sc = build_odd_chain(5, rho, args.periods)?;
                    let traj = run_scenario(&sc, &solver)?;
                    let path = out.join(file);
                    write_diameter_csv(&path, &traj)?;
                    Ok((fmt_rho(rho), traj.final_state().diameter()))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    println!(
        "eleven-agent chain, {} periods, files in {}:",
        args.periods,
        args.out.display()
    );
    for r in results {
        let (label, final_diameter) = r?;
        println!("  rho = {label}: final diameter {final_diameter:.12e}");
    }
    Ok(())
}

/// Deterministic 64-bit mix for the probe sweep.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn cmd_check(args: &RunArgs) -> Result<(), CliError> {
    let (cfg, scenario, _) = load_run(args)?;
    let sys = &scenario.system;
    let start = sys.domain_start();
    let horizon = scenario.horizon;

    let plan = SamplingPlan::covering(sys, start, horizon);
    let balance = check_cut_balance(sys, &plan, horizon)?;
    let persistence = persistent_connectivity_report(sys, horizon, PERSISTENCE_CHECKPOINTS)?;
    let moreau = moreau_edge_set(sys, start, MOREAU_WINDOW, MOREAU_DELTA)?;

    // Seeded random sweep: weights must be non-negative everywhere.
    let n = sys.agent_count();
    let mut state = cfg.seed;
    let mut min_weight = f64::INFINITY;
    for _ in 0..100_000 {
        let u = splitmix64(&mut state) as f64 / u64::MAX as f64;
        let t = start + u * (horizon - start);
        let i = (splitmix64(&mut state) % n as u64) as usize;
        let j = (i + 1 + (splitmix64(&mut state) % (n as u64 - 1)) as usize) % n;
        min_weight = min_weight.min(sys.weight(i, j).evaluate(t)?);
    }

    println!("scenario: {} ({} agents)", scenario.name, n);
    let witness = balance
        .witness
        .map(|(s, t)| format!(" at (S = {}, t = {t:.6})", s.label_string()))
        .unwrap_or_default();
    println!(
        "cut balance: K estimate = {}{witness}, trend = {}",
        balance.k_estimate,
        if balance.unbounded_trend {
            "unbounded"
        } else {
            "bounded"
        }
    );
    println!(
        "persistent connectivity: candidate graph strongly connected = {} ({} candidate edges)",
        persistence.strongly_connected,
        persistence
            .edges
            .iter()
            .filter(|e| e.divergence_candidate)
            .count()
    );
    println!(
        "influence window (T = {MOREAU_WINDOW}, delta = {MOREAU_DELTA}): {} edges, spanning tree = {}",
        moreau.edges.len(),
        moreau.has_spanning_tree
    );
    println!(
        "weight probe (seed {}): minimum over 100000 samples = {min_weight:.3e} (must be >= 0)",
        cfg.seed
    );
    if min_weight < 0.0 {
        return Err(CliError::config("negative weight encountered"));
    }
    Ok(())
}
