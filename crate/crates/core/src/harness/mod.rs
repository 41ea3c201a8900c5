//! Experiment orchestration: configuration, the per-fold pipeline,
//! cross-validation over folds and dimensions, reports and scatter export.

mod config;
mod pipeline;
mod report;
mod scatter;

use std::time::Instant;

pub use config::{DataFormat, ExperimentConfig, LambdaSpec, Method, SubsampleConfig};
pub use pipeline::{check_dims, load_dataset, run_method, run_pipeline, FoldMetrics, FoldOutcome, FoldTiming, StageTime};
pub use report::{
    aggregate, export_scatter, folds_csv, render_markdown, render_report, write_outputs, DatasetSummary, DimensionReport,
    EvaluationReport, MethodReport, RunSettings, TimingReport,
};
pub use scatter::{scatter_panels, write_scatter, Panel};

use crate::data::{stratified_kfold, Dataset};
use crate::error::{Result, Stage, StageExt};

/// Runs every method in `methods` on every fold of one shared fold plan.
pub fn run_methods(cfg: &ExperimentConfig, ds: &Dataset, methods: &[Method]) -> Result<(EvaluationReport, TimingReport)> {
    cfg.validate()?;
    check_dims(cfg, ds)?;
    let start = Instant::now();
    let plan = stratified_kfold(&ds.labels, ds.n_classes(), cfg.folds, cfg.seed).stage(Stage::Load)?;
    let mut outcomes = Vec::new();
    for &m in methods {
        for fold in 0..plan.k {
            log::info!("{m}: fold {}/{}", fold + 1, plan.k);
            outcomes.push(run_method(cfg, ds, &plan, fold, m)?);
        }
    }
    let report = aggregate(ds, cfg, plan.fold_of.clone(), &outcomes)?;
    let timing = TimingReport {
        folds: outcomes.into_iter().map(|o| o.timing).collect(),
        total_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((report, timing))
}

/// The proposed pipeline plus any configured baselines.
pub fn run_cv(cfg: &ExperimentConfig, ds: &Dataset) -> Result<(EvaluationReport, TimingReport)> {
    let mut methods = vec![Method::Proposed];
    methods.extend(cfg.baselines.iter().copied());
    run_methods(cfg, ds, &methods)
}

/// Only the baselines (all three when none are configured).
pub fn run_baselines(cfg: &ExperimentConfig, ds: &Dataset) -> Result<(EvaluationReport, TimingReport)> {
    let methods = if cfg.baselines.is_empty() {
        vec![Method::RawKnn, Method::DrOnly, Method::DlsrOriginal]
    } else {
        cfg.baselines.clone()
    };
    run_methods(cfg, ds, &methods)
}
