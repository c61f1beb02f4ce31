//! Experiment driver: configuration, seeded Monte Carlo runs and report files.

pub mod config;
pub mod experiment;
pub mod output;

use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;
pub use experiment::{compare, run_experiment, sweep_inducing, ExperimentRecord, RunRecord, Sweep};

use crate::error::Result;

/// Writes per-run round tables, the summary and a regret plot for one
/// experiment. Returns the written paths.
pub fn write_run_outputs(record: &ExperimentRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    let policy = record.policy();
    let mut paths = Vec::new();
    for run in &record.runs {
        let p = dir.join(format!("{policy}_seed{}_rounds.csv", run.seed));
        output::write(&p, &output::rounds_csv(run))?;
        paths.push(p);
    }
    let p = dir.join("summary.csv");
    output::write(&p, &output::summary_csv(std::slice::from_ref(record)))?;
    paths.push(p);
    let p = dir.join(format!("{policy}_regret.svg"));
    let label = policy.to_string();
    let svg = output::line_plot_svg(
        &format!("{policy}: mean cumulative regret"),
        "round",
        "cumulative regret",
        &[(label.as_str(), &record.mean_curve)],
    );
    output::write(&p, &svg)?;
    paths.push(p);
    Ok(paths)
}

pub fn write_comparison_outputs(records: &[ExperimentRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    let labels: Vec<String> = records.iter().map(|r| r.policy().to_string()).collect();
    let series: Vec<(&str, &[f64])> = labels
        .iter()
        .zip(records)
        .map(|(l, r)| (l.as_str(), r.mean_curve.as_slice()))
        .collect();
    let csv = dir.join("compare.csv");
    output::write(&csv, &output::comparison_csv(records))?;
    let summary = dir.join("summary.csv");
    output::write(&summary, &output::summary_csv(records))?;
    let svg = dir.join("compare.svg");
    output::write(
        &svg,
        &output::line_plot_svg("Mean cumulative regret", "round", "cumulative regret", &series),
    )?;
    Ok(vec![csv, summary, svg])
}

pub fn write_sweep_outputs(sweep: &Sweep, dir: &Path) -> Result<Vec<PathBuf>> {
    let csv = dir.join("sweep.csv");
    output::write(&csv, &output::sweep_csv(sweep))?;
    let points: Vec<(f64, f64)> = sweep.points.iter().map(|p| (p.cost_ratio, p.regret_ratio)).collect();
    let svg = dir.join("sweep.svg");
    output::write(
        &svg,
        &output::scatter_svg(
            "S-CEPE relative to CEPE",
            "communication reduction (CEPE / S-CEPE)",
            "regret ratio (S-CEPE / CEPE)",
            &points,
        ),
    )?;
    Ok(vec![csv, svg])
}
