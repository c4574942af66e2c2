//! Run configuration: a single JSON file describing the scenario, solver
//! settings, output paths and the seed for randomized probes.

use std::path::{Path, PathBuf};

use consensus_dynamics::{ScenarioSpec, SolverConfig, SolverMethod};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub outputs: OutputsSection,
    /// Seed for randomized probe sweeps (the `check` command); all other
    /// commands are deterministic.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_step")]
    pub max_step: f64,
    #[serde(default)]
    pub method: MethodName,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    ExactExponential,
    RungeKutta,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    #[serde(default = "default_trajectory_csv")]
    pub trajectory_csv: PathBuf,
    #[serde(default = "default_analysis_report")]
    pub analysis_report: PathBuf,
}

fn default_tolerance() -> f64 {
    1e-10
}

fn default_max_step() -> f64 {
    0.1
}

fn default_stride() -> usize {
    1
}

fn default_trajectory_csv() -> PathBuf {
    PathBuf::from("trajectory.csv")
}

fn default_analysis_report() -> PathBuf {
    PathBuf::from("analysis.txt")
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tolerance: default_tolerance(),
            max_step: default_max_step(),
            method: MethodName::default(),
            sample_stride: default_stride(),
        }
    }
}

impl Default for OutputsSection {
    fn default() -> Self {
        OutputsSection {
            trajectory_csv: default_trajectory_csv(),
            analysis_report: default_analysis_report(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            method: match self.solver.method {
                MethodName::ExactExponential => SolverMethod::ExactExponential,
                MethodName::RungeKutta => SolverMethod::RungeKutta,
            },
            step_tolerance: self.solver.tolerance,
            max_step: self.solver.max_step,
            sample_stride: self.solver.sample_stride,
        }
    }
}
