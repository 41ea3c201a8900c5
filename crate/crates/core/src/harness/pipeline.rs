use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::config::{DataFormat, ExperimentConfig, Method};
use crate::classify::{accuracy, confusion, knn_predict, macro_sensitivity, macro_specificity, sensitivity, specificity, ConfusionMatrix};
use crate::data::{
    kdd_subsample, kdd_surrogate, load_csv, load_kdd, parse_category_map, rng_for, stratified_kfold,
    stratified_sample_indices, Dataset, FoldPlan, Standardizer,
};
use crate::embedding::{embed, Backend, Embedding};
use crate::error::{Error, Result, Stage, StageExt};
use crate::metric::{fit_dlsr_original, fit_structural, transform, MetricModel};
use crate::neighborhood::{build_sets, build_targets};

/// Loads the configured dataset and applies the optional class-wise subsample.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let ds = match cfg.format {
        DataFormat::Csv => load_csv(&cfg.dataset, &cfg.label_column, cfg.has_header),
        DataFormat::Kdd => {
            let map_path = cfg.category_map.as_ref().ok_or_else(|| Error::Config("missing category_map".into()))?;
            let text = std::fs::read_to_string(map_path).map_err(|e| Error::io(map_path, e))?;
            load_kdd(&cfg.dataset, &parse_category_map(&text)?)
        }
        DataFormat::KddSurrogate => Ok(kdd_surrogate(cfg.seed)),
    }
    .stage(Stage::Load)?;
    match &cfg.subsample {
        Some(s) => kdd_subsample(&ds, &s.protected, s.rate, cfg.seed).stage(Stage::Downsample),
        None => Ok(ds),
    }
}

/// Metrics of one method on one fold at one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub d: Option<usize>,
    pub accuracy: f64,
    pub macro_sensitivity: Option<f64>,
    pub macro_specificity: Option<f64>,
    pub sensitivity: Vec<Option<f64>>,
    pub specificity: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
    pub lambda: Option<f64>,
    pub iterations: Option<usize>,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTiming {
    pub method: Method,
    pub fold: usize,
    pub stages: Vec<StageTime>,
    pub total_seconds: f64,
}

/// Everything produced by one method on one fold.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub method: Method,
    pub fold: usize,
    pub metrics: Vec<FoldMetrics>,
    /// Fitted metric models, aligned with `metrics` (empty for methods without one).
    pub models: Vec<MetricModel>,
    pub timing: FoldTiming,
}

struct Timer {
    stages: BTreeMap<String, f64>,
}

impl Timer {
    fn new() -> Timer {
        Timer { stages: BTreeMap::new() }
    }

    fn time<T>(&mut self, stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().stage(stage);
        *self.stages.entry(stage.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        out
    }
}

fn derive_seed(seed: u64, fold: usize, salt: u64) -> u64 {
    seed.wrapping_add((fold as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)) ^ salt
}

/// Standardized training/test matrices of one fold.
struct FoldData {
    fit_x: Array2<f64>,
    fit_labels: Vec<usize>,
    ref_x: Array2<f64>,
    ref_labels: Vec<usize>,
    test_x: Array2<f64>,
    test_labels: Vec<usize>,
}

fn prepare_fold(cfg: &ExperimentConfig, ds: &Dataset, plan: &FoldPlan, fold: usize, timer: &mut Timer) -> Result<FoldData> {
    if fold >= plan.k {
        return Err(Error::InvalidParameter(format!("fold {fold} out of range 0..{}", plan.k)));
    }
    if plan.fold_of.len() != ds.n_samples() {
        return Err(Error::Dimension("fold plan does not match the dataset".into()));
    }
    let train_idx = plan.train_indices(fold);
    let test_idx = plan.test_indices(fold);
    let train = ds.subset(&train_idx);
    let test = ds.subset(&test_idx);

    let fit_rows = timer.time(Stage::Downsample, || {
        Ok(if train.n_samples() > cfg.downsample_threshold {
            let mut rng = rng_for(cfg.seed, 100 + fold as u64);
            let rows = stratified_sample_indices(&train.labels, train.n_classes(), cfg.downsample_factor, &[], &mut rng);
            log::info!("fold {fold}: downsampled {} training rows to {}", train.n_samples(), rows.len());
            rows
        } else {
            (0..train.n_samples()).collect()
        })
    })?;
    let fit_raw = train.features.select(Axis(0), &fit_rows);

    let (fit_x, train_x, test_x) = timer.time(Stage::Standardize, || {
        Ok(if cfg.standardize {
            let st = Standardizer::fit(&fit_raw);
            (st.apply(&fit_raw), st.apply(&train.features), st.apply(&test.features))
        } else {
            (fit_raw.clone(), train.features.clone(), test.features.clone())
        })
    })?;
    let fit_labels: Vec<usize> = fit_rows.iter().map(|&i| train.labels[i]).collect();
    let (ref_x, ref_labels) = if cfg.strict {
        (fit_x.clone(), fit_labels.clone())
    } else {
        (train_x, train.labels.clone())
    };
    Ok(FoldData {
        fit_x,
        fit_labels,
        ref_x,
        ref_labels,
        test_x,
        test_labels: test.labels,
    })
}

/// Embeds with the configured backend; a disconnected Isomap graph is retried
/// with twice the neighbor count until connected.
pub(crate) fn embed_with_fallback(
    cfg: &ExperimentConfig,
    x: ArrayView2<f64>,
    labels: &[usize],
    d: usize,
    seed: u64,
) -> Result<Embedding> {
    let mut params = cfg.embed_params(d, seed);
    loop {
        match embed(x, Some(labels), cfg.backend, &params) {
            Err(Error::DisconnectedGraph { dropped }) if params.k_graph + 1 < x.nrows() => {
                let next = (params.k_graph * 2).min(x.nrows() - 1);
                log::warn!(
                    "isomap graph disconnected at k_graph={} ({} samples outside the main component); retrying with {next}",
                    params.k_graph,
                    dropped.len()
                );
                params.k_graph = next;
            }
            other => return other,
        }
    }
}

/// Embeddings of `x` at each requested dimension (one solve for nested backends).
fn embeddings_for(
    cfg: &ExperimentConfig,
    dims: &[usize],
    x: ArrayView2<f64>,
    labels: &[usize],
    seed: u64,
) -> Result<Vec<Embedding>> {
    let d_max = *dims.iter().max().expect("validated non-empty");
    if cfg.backend.nested() {
        let full = embed_with_fallback(cfg, x, labels, d_max, seed)?;
        Ok(dims
            .iter()
            .map(|&d| full.truncate(d).expect("nested backend"))
            .collect())
    } else {
        dims.iter().map(|&d| embed_with_fallback(cfg, x, labels, d, seed)).collect()
    }
}

fn fold_metrics(fold: usize, d: Option<usize>, truth: &[usize], pred: &[usize], class_names: &[String]) -> Result<FoldMetrics> {
    let cm = confusion(truth, pred, class_names)?;
    let c = class_names.len();
    Ok(FoldMetrics {
        fold,
        d,
        accuracy: accuracy(&cm)?,
        macro_sensitivity: macro_sensitivity(&cm),
        macro_specificity: macro_specificity(&cm),
        sensitivity: (0..c).map(|k| sensitivity(&cm, k)).collect(),
        specificity: (0..c).map(|k| specificity(&cm, k)).collect(),
        confusion: cm,
        lambda: None,
        iterations: None,
        objective_trace: Vec::new(),
    })
}

fn classify(cfg: &ExperimentConfig, ref_x: ArrayView2<f64>, ref_labels: &[usize], test_x: ArrayView2<f64>) -> Result<Vec<usize>> {
    knn_predict(ref_x, ref_labels, test_x, cfg.knn_k.min(ref_x.nrows()))
}

fn fit_proposed(cfg: &ExperimentConfig, fit_x: ArrayView2<f64>, fit_labels: &[usize], coords: ArrayView2<f64>, lambda: f64, timer: &mut Timer) -> Result<MetricModel> {
    let targets = timer.time(Stage::Neighborhood, || {
        let sets = build_sets(coords, fit_labels, cfg.k, cfg.similar_mode)?;
        build_targets(&sets, fit_labels.len())
    })?;
    timer.time(Stage::Fit, || fit_structural(fit_x, &targets, &cfg.fit_options(lambda)))
}

/// Per-dimension regularization weight: the only candidate, or the grid point
/// with the best inner 3-fold accuracy on the fitting rows (ties: first listed).
fn select_lambdas(cfg: &ExperimentConfig, dims: &[usize], fd: &FoldData, fold: usize, timer: &mut Timer) -> Result<Vec<f64>> {
    let grid = cfg.lambda.candidates();
    if grid.len() == 1 {
        return Ok(vec![grid[0]; dims.len()]);
    }
    let n_classes = fd.fit_labels.iter().max().map_or(0, |&c| c + 1);
    let inner = stratified_kfold(&fd.fit_labels, n_classes, 3, derive_seed(cfg.seed, fold, 0x1a))?;
    let mut score = vec![vec![0.0f64; grid.len()]; dims.len()];
    for f in 0..inner.k {
        let tr = inner.train_indices(f);
        let te = inner.test_indices(f);
        let x_tr = fd.fit_x.select(Axis(0), &tr);
        let x_te = fd.fit_x.select(Axis(0), &te);
        let y_tr: Vec<usize> = tr.iter().map(|&i| fd.fit_labels[i]).collect();
        let y_te: Vec<usize> = te.iter().map(|&i| fd.fit_labels[i]).collect();
        let embs = timer.time(Stage::Embed, || embeddings_for(cfg, dims, x_tr.view(), &y_tr, derive_seed(cfg.seed, fold, 0x1b)))?;
        for (di, e) in embs.iter().enumerate() {
            for (li, &lambda) in grid.iter().enumerate() {
                let model = fit_proposed(cfg, x_tr.view(), &y_tr, e.coords.view(), lambda, timer)?;
                let (a, b) = timer.time(Stage::Transform, || Ok((transform(&model, x_tr.view())?, transform(&model, x_te.view())?)))?;
                let pred = timer.time(Stage::Classify, || classify(cfg, a.view(), &y_tr, b.view()))?;
                let hits = pred.iter().zip(&y_te).filter(|(p, t)| p == t).count();
                score[di][li] += hits as f64 / y_te.len() as f64;
            }
        }
    }
    Ok(score
        .iter()
        .map(|row| {
            let best = (0..grid.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
            grid[best]
        })
        .collect())
}

/// Runs `method` on one fold of `plan`. All randomness derives from the
/// configured seed and the fold index.
pub fn run_method(cfg: &ExperimentConfig, ds: &Dataset, plan: &FoldPlan, fold: usize, method: Method) -> Result<FoldOutcome> {
    let start = Instant::now();
    let mut timer = Timer::new();
    let fd = prepare_fold(cfg, ds, plan, fold, &mut timer)?;
    let dims = cfg.sorted_dims();
    let names = &ds.class_names;
    let embed_seed = derive_seed(cfg.seed, fold, 0xe);
    let mut metrics = Vec::new();
    let mut models = Vec::new();

    match method {
        Method::Proposed => {
            let lambdas = select_lambdas(cfg, &dims, &fd, fold, &mut timer)?;
            let embs = timer.time(Stage::Embed, || embeddings_for(cfg, &dims, fd.fit_x.view(), &fd.fit_labels, embed_seed))?;
            for ((e, &d), &lambda) in embs.iter().zip(&dims).zip(&lambdas) {
                let model = fit_proposed(cfg, fd.fit_x.view(), &fd.fit_labels, e.coords.view(), lambda, &mut timer)?;
                let (a, b) = timer.time(Stage::Transform, || Ok((transform(&model, fd.ref_x.view())?, transform(&model, fd.test_x.view())?)))?;
                let pred = timer.time(Stage::Classify, || classify(cfg, a.view(), &fd.ref_labels, b.view()))?;
                let mut m = fold_metrics(fold, Some(d), &fd.test_labels, &pred, names).stage(Stage::Report)?;
                m.lambda = Some(lambda);
                m.iterations = Some(model.iterations_run);
                m.objective_trace = model.objective_trace.clone();
                metrics.push(m);
                models.push(model);
            }
        }
        Method::RawKnn => {
            let pred = timer.time(Stage::Classify, || classify(cfg, fd.ref_x.view(), &fd.ref_labels, fd.test_x.view()))?;
            metrics.push(fold_metrics(fold, None, &fd.test_labels, &pred, names).stage(Stage::Report)?);
        }
        Method::DlsrOriginal => {
            let lambda = cfg.lambda.candidates()[0];
            let model = timer.time(Stage::Fit, || fit_dlsr_original(fd.fit_x.view(), &fd.fit_labels, ds.n_classes(), &cfg.fit_options(lambda)))?;
            let (a, b) = timer.time(Stage::Transform, || Ok((transform(&model, fd.ref_x.view())?, transform(&model, fd.test_x.view())?)))?;
            let pred = timer.time(Stage::Classify, || classify(cfg, a.view(), &fd.ref_labels, b.view()))?;
            let mut m = fold_metrics(fold, None, &fd.test_labels, &pred, names).stage(Stage::Report)?;
            m.lambda = Some(lambda);
            m.iterations = Some(model.iterations_run);
            m.objective_trace = model.objective_trace.clone();
            metrics.push(m);
            models.push(model);
        }
        Method::DrOnly => {
            let embs = timer.time(Stage::Embed, || embeddings_for(cfg, &dims, fd.fit_x.view(), &fd.fit_labels, embed_seed))?;
            let transductive = embs.iter().any(|e| e.oos_map.is_none());
            // backends without an out-of-sample map embed training and test rows together
            let joint = if transductive {
                let x = ndarray::concatenate(Axis(0), &[fd.fit_x.view(), fd.test_x.view()]).map_err(|e| Error::Dimension(e.to_string()))?;
                let labels: Vec<usize> = fd.fit_labels.iter().chain(&fd.test_labels).copied().collect();
                if cfg.backend.supervised() {
                    return Err(Error::InvalidParameter("supervised backend without out-of-sample map".into()));
                }
                Some(timer.time(Stage::Embed, || embeddings_for(cfg, &dims, x.view(), &labels, embed_seed))?)
            } else {
                None
            };
            let n_fit = fd.fit_x.nrows();
            for (i, (e, &d)) in embs.iter().zip(&dims).enumerate() {
                let (a, ref_labels, b) = timer.time(Stage::Transform, || {
                    Ok(match &joint {
                        Some(j) => {
                            let c = &j[i].coords;
                            (c.slice(ndarray::s![..n_fit, ..]).to_owned(), &fd.fit_labels, c.slice(ndarray::s![n_fit.., ..]).to_owned())
                        }
                        None => (e.transform(fd.ref_x.view())?, &fd.ref_labels, e.transform(fd.test_x.view())?),
                    })
                })?;
                let pred = timer.time(Stage::Classify, || classify(cfg, a.view(), ref_labels, b.view()))?;
                metrics.push(fold_metrics(fold, Some(d), &fd.test_labels, &pred, names).stage(Stage::Report)?);
            }
        }
    }

    let timing = FoldTiming {
        method,
        fold,
        stages: timer
            .stages
            .into_iter()
            .map(|(stage, seconds)| StageTime { stage, seconds })
            .collect(),
        total_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(FoldOutcome { method, fold, metrics, models, timing })
}

/// The proposed pipeline on one fold.
pub fn run_pipeline(cfg: &ExperimentConfig, ds: &Dataset, plan: &FoldPlan, fold: usize) -> Result<FoldOutcome> {
    run_method(cfg, ds, plan, fold, Method::Proposed)
}

/// Whether `backend` can run on a training fold of this dataset at every requested `d`.
pub fn check_dims(cfg: &ExperimentConfig, ds: &Dataset) -> Result<()> {
    let mut n_fit_min = ds.n_samples() - ds.n_samples().div_ceil(cfg.folds);
    if n_fit_min > cfg.downsample_threshold {
        n_fit_min = (cfg.downsample_factor * n_fit_min as f64).floor() as usize;
    }
    let cap = cfg.backend.max_dim(n_fit_min, ds.n_features(), ds.n_classes());
    if let Some(&d) = cfg.d.iter().find(|&&d| d > cap) {
        return Err(Error::Config(format!(
            "d = {d} exceeds the largest dimension {cap} available to {} on this dataset",
            cfg.backend
        )));
    }
    if cfg.backend == Backend::Lle && cfg.k_nbrs >= n_fit_min {
        return Err(Error::Config(format!("k_nbrs = {} too large for {n_fit_min} training rows", cfg.k_nbrs)));
    }
    Ok(())
}
