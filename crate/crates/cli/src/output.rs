//! CSV emission and text report rendering.
//!
//! CSV files use comma delimiters, LF line endings and 17 significant digits
//! (`{:.16e}`), enough to round-trip every f64 bit-exactly.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use consensus_dynamics::{
    BoundReport, CutBalanceReport, MoreauReport, PersistenceReport, RescalingSequence,
    SlowDivergenceReport, Trajectory, TrendVerdict,
};

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let n = traj.system().agent_count();
    let mut header = String::from("t");
    for i in 1..=n {
        header.push_str(&format!(",x_{i}"));
    }
    header.push_str(",diameter");
    writeln!(out, "{header}")?;
    for s in traj.samples() {
        let mut row = fmt(s.t);
        for v in &s.x {
            row.push(',');
            row.push_str(&fmt(*v));
        }
        row.push(',');
        row.push_str(&fmt(s.diameter()));
        writeln!(out, "{row}")?;
    }
    out.flush()
}

pub fn write_diameter_csv(path: &Path, traj: &Trajectory) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t,diameter,log10_diameter")?;
    for s in traj.samples() {
        let d = s.diameter();
        writeln!(out, "{},{},{}", fmt(s.t), fmt(d), fmt(d.log10()))?;
    }
    out.flush()
}

pub struct AnalysisReport<'a> {
    pub scenario_name: &'a str,
    pub agent_count: usize,
    pub rescaling: &'a RescalingSequence,
    pub audit: &'a BoundReport,
    pub divergence: &'a SlowDivergenceReport,
    pub balance: &'a CutBalanceReport,
    pub persistence: &'a PersistenceReport,
    pub moreau: &'a MoreauReport,
    pub moreau_window: f64,
    pub moreau_delta: f64,
}

pub fn render_analysis(report: &AnalysisReport) -> String {
    let mut text = String::new();
    let push = |text: &mut String, line: String| {
        text.push_str(&line);
        text.push('\n');
    };
    push(
        &mut text,
        format!(
            "scenario: {} ({} agents)",
            report.scenario_name, report.agent_count
        ),
    );
    push(&mut text, String::new());

    let resc = report.rescaling;
    push(
        &mut text,
        format!(
            "rescaling ({} periods, {} unit-influence steps per period)",
            resc.period_count(),
            resc.intermediates(0).len() - 1
        ),
    );
    push(
        &mut text,
        "  p      t_p                     r_max(t_p)   intermediates".to_string(),
    );
    for (p, &tp) in resc.times().iter().enumerate() {
        let steps = if p < resc.period_count() {
            let inner: Vec<String> = resc
                .intermediates(p)
                .iter()
                .map(|t| format!("{t:.6}"))
                .collect();
            format!("[{}]", inner.join(", "))
        } else {
            String::new()
        };
        push(
            &mut text,
            format!(
                "  {p:<6} {tp:<23.12e} {:<12} {steps}",
                report.rescaling.max_ratio_at(p).to_string()
            ),
        );
    }
    push(&mut text, String::new());

    push(
        &mut text,
        "contraction audit (diameter ratio per period vs certified factor)".to_string(),
    );
    push(
        &mut text,
        "  p      measured                bound                   slack".to_string(),
    );
    for audit in &report.audit.periods {
        push(
            &mut text,
            format!(
                "  {:<6} {:<23.12e} {:<23.12e} {:.3e}",
                audit.period,
                audit.measured,
                audit.bound,
                audit.slack()
            ),
        );
    }
    push(
        &mut text,
        format!(
            "  all periods within bound: {}",
            report.audit.all_bounded(1e-9)
        ),
    );
    push(&mut text, String::new());

    push(
        &mut text,
        "assumption checks (finite-horizon heuristics, not proofs)".to_string(),
    );
    let witness = report
        .balance
        .witness
        .map(|(s, t)| format!(" at (S = {}, t = {t:.6})", s.label_string()))
        .unwrap_or_default();
    push(
        &mut text,
        format!(
            "  cut balance: K estimate = {}{witness}, trend = {}",
            report.balance.k_estimate,
            if report.balance.unbounded_trend {
                "unbounded"
            } else {
                "bounded"
            }
        ),
    );
    push(
        &mut text,
        format!(
            "  slow divergence: {} (tail exponent {:.3}, partial sum of {} terms = {:.6})",
            match report.divergence.verdict {
                TrendVerdict::Diverging => "diverging-trend",
                TrendVerdict::Converging => "converging-trend",
            },
            report.divergence.tail_exponent,
            report.divergence.terms.len(),
            report
                .divergence
                .partial_sums
                .last()
                .copied()
                .unwrap_or(0.0)
        ),
    );
    push(
        &mut text,
        format!(
            "  persistent connectivity: candidate graph strongly connected = {}",
            report.persistence.strongly_connected
        ),
    );
    for edge in &report.persistence.edges {
        push(&mut text, format!(
            "    influence {} -> {}: first half {:.6}, second half {:.6}, divergence candidate = {}",
            edge.influencer + 1,
            edge.influenced + 1,
            edge.first_half,
            edge.second_half,
            edge.divergence_candidate
        ));
    }
    let edges: Vec<String> = report
        .moreau
        .edges
        .iter()
        .map(|(j, i)| format!("{}->{}", j + 1, i + 1))
        .collect();
    push(
        &mut text,
        format!(
            "  influence window (T = {}, delta = {}): {} edges [{}], spanning tree = {}",
            report.moreau_window,
            report.moreau_delta,
            edges.len(),
            edges.join(", "),
            report.moreau.has_spanning_tree
        ),
    );
    text
}
