//! Config-driven experiment suites and their reports.

pub mod config;
pub mod instances;
pub mod report;
mod suites;

use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, ExperimentKind, GeneratorSpec, Grid, ScalingAxis, TeacherFit, ThetaName, ThetaSpec};
pub use report::{emit_report, render, ReportFormat, ResultRow};

use crate::error::Result;

/// Runs the suite named by `config.experiment`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let mut rows = suites::Rows::new(config.experiment.name(), config.hash());
    match config.experiment {
        ExperimentKind::Estimate => suites::estimate(config, &mut rows)?,
        ExperimentKind::MseSweep => suites::mse_sweep(config, &mut rows)?,
        ExperimentKind::GradientScaling => suites::gradient_scaling(config, &mut rows)?,
        ExperimentKind::MismatchCheck => suites::mismatch_check(config, &mut rows)?,
        ExperimentKind::VarianceCheck => suites::variance_check(config, &mut rows)?,
        ExperimentKind::CurriculumTrain => suites::curriculum_train(config, &mut rows)?,
        ExperimentKind::GradientCheck => suites::gradient_check(config, &mut rows)?,
    }
    Ok(rows.into_rows())
}

/// `<out>.config.json`: the canonical config whose hash tags every row.
pub fn config_echo_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}

/// Runs the experiment and writes the report, plus the config echo when the
/// report goes to a file.
pub fn run_and_emit(config: &ExperimentConfig, format: ReportFormat, out: Option<&Path>) -> Result<Vec<ResultRow>> {
    let rows = run_experiment(config)?;
    emit_report(&rows, format, out)?;
    if let Some(path) = out {
        std::fs::write(config_echo_path(path), config.canonical_json())?;
    }
    Ok(rows)
}
