use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, LambdaSpec, Method};
use super::pipeline::{FoldMetrics, FoldOutcome, FoldTiming};
use crate::classify::ConfusionMatrix;
use crate::data::{imbalance_ratio, Dataset};
use crate::embedding::Backend;
use crate::error::{Error, Result};
use crate::neighborhood::SimilarMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source_id: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    pub class_counts: Vec<usize>,
    pub imbalance_ratio: f64,
}

impl DatasetSummary {
    pub fn of(ds: &Dataset) -> DatasetSummary {
        DatasetSummary {
            source_id: ds.source_id.clone(),
            n_samples: ds.n_samples(),
            n_features: ds.n_features(),
            n_classes: ds.n_classes(),
            class_names: ds.class_names.clone(),
            class_counts: ds.class_counts(),
            imbalance_ratio: imbalance_ratio(ds),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub d: Option<usize>,
    pub folds: Vec<FoldMetrics>,
    pub mean_accuracy: f64,
    pub mean_macro_sensitivity: Option<f64>,
    pub mean_macro_specificity: Option<f64>,
    pub mean_confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub per_d: Vec<DimensionReport>,
    /// Dimension with the highest mean accuracy (ties: smallest).
    pub best_d: Option<usize>,
    pub best_accuracy: f64,
    /// Rank of `best_accuracy` among the methods of this run only.
    pub local_rank: usize,
}

impl MethodReport {
    pub fn best(&self) -> &DimensionReport {
        self.per_d
            .iter()
            .find(|r| r.d == self.best_d)
            .expect("best_d is one of the evaluated dimensions")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub backend: Backend,
    pub k: usize,
    pub similar_mode: SimilarMode,
    pub lambda: LambdaSpec,
    pub knn_k: usize,
    pub folds: usize,
    pub seed: u64,
    pub strict: bool,
}

impl RunSettings {
    pub fn of(cfg: &ExperimentConfig) -> RunSettings {
        RunSettings {
            backend: cfg.backend,
            k: cfg.k,
            similar_mode: cfg.similar_mode,
            lambda: cfg.lambda.clone(),
            knn_k: cfg.knn_k,
            folds: cfg.folds,
            seed: cfg.seed,
            strict: cfg.strict,
        }
    }
}

/// Machine-readable outcome of a cross-validated run. Holds no timings, so
/// identical inputs serialize to identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: DatasetSummary,
    pub settings: RunSettings,
    pub fold_of: Vec<usize>,
    pub methods: Vec<MethodReport>,
}

impl EvaluationReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub folds: Vec<FoldTiming>,
    pub total_seconds: f64,
}

fn mean_defined(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = vals.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn dimension_report(d: Option<usize>, folds: Vec<FoldMetrics>) -> Result<DimensionReport> {
    let n = folds.len() as f64;
    let cms: Vec<ConfusionMatrix> = folds.iter().map(|f| f.confusion.clone()).collect();
    Ok(DimensionReport {
        d,
        mean_accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / n,
        mean_macro_sensitivity: mean_defined(folds.iter().map(|f| f.macro_sensitivity)),
        mean_macro_specificity: mean_defined(folds.iter().map(|f| f.macro_specificity)),
        mean_confusion: ConfusionMatrix::mean_of(&cms)?,
        folds,
    })
}

/// Groups fold outcomes per method and dimension and ranks the methods.
pub fn aggregate(ds: &Dataset, cfg: &ExperimentConfig, fold_of: Vec<usize>, outcomes: &[FoldOutcome]) -> Result<EvaluationReport> {
    let mut methods: Vec<Method> = Vec::new();
    for o in outcomes {
        if !methods.contains(&o.method) {
            methods.push(o.method);
        }
    }
    let mut reports = Vec::new();
    for m in methods {
        let mut dims: Vec<Option<usize>> = Vec::new();
        for o in outcomes.iter().filter(|o| o.method == m) {
            for f in &o.metrics {
                if !dims.contains(&f.d) {
                    dims.push(f.d);
                }
            }
        }
        dims.sort();
        let mut per_d = Vec::new();
        for d in dims {
            let mut folds: Vec<FoldMetrics> = outcomes
                .iter()
                .filter(|o| o.method == m)
                .flat_map(|o| o.metrics.iter().filter(|f| f.d == d).cloned())
                .collect();
            folds.sort_by_key(|f| f.fold);
            per_d.push(dimension_report(d, folds)?);
        }
        let best = per_d
            .iter()
            .fold(None::<&DimensionReport>, |b, r| match b {
                Some(b) if b.mean_accuracy >= r.mean_accuracy => Some(b),
                _ => Some(r),
            })
            .ok_or_else(|| Error::Data(format!("no results for method {m}")))?;
        reports.push(MethodReport {
            method: m,
            best_d: best.d,
            best_accuracy: best.mean_accuracy,
            per_d,
            local_rank: 0,
        });
    }
    let scores: Vec<f64> = reports.iter().map(|r| r.best_accuracy).collect();
    for r in reports.iter_mut() {
        r.local_rank = 1 + scores.iter().filter(|&&s| s > r.best_accuracy).count();
    }
    Ok(EvaluationReport {
        dataset: DatasetSummary::of(ds),
        settings: RunSettings::of(cfg),
        fold_of,
        methods: reports,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"))
}

fn fmt_d(d: Option<usize>) -> String {
    d.map_or_else(|| "-".to_string(), |d| d.to_string())
}

/// Markdown summary: dataset header, then one table per metric with a column
/// per dimension and the `(d, R)` pair of the best dimension.
pub fn render_markdown(report: &EvaluationReport) -> String {
    let ds = &report.dataset;
    let mut s = String::new();
    let _ = writeln!(s, "# {}\n", ds.source_id);
    let _ = writeln!(
        s,
        "samples: {}, features: {}, classes: {}, imbalance ratio: {:.2}\n",
        ds.n_samples, ds.n_features, ds.n_classes, ds.imbalance_ratio
    );
    let counts: Vec<String> = ds
        .class_names
        .iter()
        .zip(&ds.class_counts)
        .map(|(n, c)| format!("{n}: {c}"))
        .collect();
    let _ = writeln!(s, "class counts: {}\n", counts.join(", "));
    let st = &report.settings;
    let _ = writeln!(
        s,
        "backend {}, k = {}, similar sets: {}, {}-NN, {} folds, seed {}\n",
        st.backend, st.k, st.similar_mode, st.knn_k, st.folds, st.seed
    );

    let mut dims: Vec<usize> = report
        .methods
        .iter()
        .flat_map(|m| m.per_d.iter().filter_map(|r| r.d))
        .collect();
    dims.sort_unstable();
    dims.dedup();

    type Pick = fn(&DimensionReport) -> Option<f64>;
    let tables: [(&str, Pick); 3] = [
        ("Accuracy", |r| Some(r.mean_accuracy)),
        ("Sensitivity (macro)", |r| r.mean_macro_sensitivity),
        ("Specificity (macro)", |r| r.mean_macro_specificity),
    ];
    for (title, pick) in tables {
        let _ = writeln!(s, "## {title}\n");
        let mut header = String::from("| method |");
        let mut rule = String::from("|---|");
        if dims.is_empty() {
            header.push_str(" value |");
            rule.push_str("---|");
        }
        for d in &dims {
            let _ = write!(header, " d={d} |");
            rule.push_str("---|");
        }
        header.push_str(" best (d, R) |");
        rule.push_str("---|");
        let _ = writeln!(s, "{header}\n{rule}");
        for m in &report.methods {
            let mut row = format!("| {} |", m.method);
            let cell = |r: &DimensionReport| {
                let mark = if r.d.is_some() && r.d == m.best_d { "*" } else { "" };
                format!(" {}{mark} |", fmt_opt(pick(r)))
            };
            if dims.is_empty() {
                row.push_str(&cell(&m.per_d[0]));
            }
            for d in &dims {
                match m.per_d.iter().find(|r| r.d == Some(*d)) {
                    Some(r) => row.push_str(&cell(r)),
                    // a dimension-free method reports the same value in every column
                    None if m.best_d.is_none() => row.push_str(&cell(m.best())),
                    None => row.push_str(" |"),
                }
            }
            let _ = write!(row, " {} ({}, {}) |", fmt_opt(pick(m.best())), fmt_d(m.best_d), m.local_rank);
            let _ = writeln!(s, "{row}");
        }
        s.push('\n');
    }
    let _ = writeln!(
        s,
        "`*` marks the best dimension by mean accuracy. R is the rank among the methods of this run only.\n"
    );
    for m in &report.methods {
        let best = m.best();
        let _ = writeln!(s, "## Per-class rates, {} at d = {}\n", m.method, fmt_d(m.best_d));
        let _ = writeln!(s, "| class | sensitivity | specificity |\n|---|---|---|");
        for (c, name) in report.dataset.class_names.iter().enumerate() {
            let sens = mean_defined(best.folds.iter().map(|f| f.sensitivity[c]));
            let spec = mean_defined(best.folds.iter().map(|f| f.specificity[c]));
            let _ = writeln!(s, "| {name} | {} | {} |", fmt_opt(sens), fmt_opt(spec));
        }
        s.push('\n');
    }
    s
}

/// One row per method, dimension and fold.
pub fn folds_csv(report: &EvaluationReport) -> String {
    let mut s = String::from("method,d,fold,accuracy,macro_sensitivity,macro_specificity,lambda\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for m in &report.methods {
        for r in &m.per_d {
            for f in &r.folds {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    m.method,
                    fmt_d(f.d),
                    f.fold,
                    f.accuracy,
                    opt(f.macro_sensitivity),
                    opt(f.macro_specificity),
                    opt(f.lambda)
                );
            }
        }
    }
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `results.json`, `timing.json`, `summary.md`, `folds.csv` and the
/// confusion matrices of each method's best dimension. With several methods
/// the confusion matrices go to one subdirectory per method.
pub fn write_outputs(report: &EvaluationReport, timing: Option<&TimingReport>, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Data(e.to_string()))?;
    write(&out_dir.join("results.json"), &json)?;
    if let Some(t) = timing {
        let json = serde_json::to_string_pretty(t).map_err(|e| Error::Data(e.to_string()))?;
        write(&out_dir.join("timing.json"), &json)?;
    }
    write(&out_dir.join("summary.md"), &render_markdown(report))?;
    write(&out_dir.join("folds.csv"), &folds_csv(report))?;
    let several = report.methods.len() > 1;
    for m in &report.methods {
        let dir = if several { out_dir.join(m.method.as_str()) } else { out_dir.to_path_buf() };
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let best = m.best();
        for f in &best.folds {
            f.confusion.write_csv(&dir.join(format!("confusion_{}.csv", f.fold)))?;
        }
        best.mean_confusion.write_csv(&dir.join("confusion_mean.csv"))?;
    }
    Ok(())
}

/// Re-renders `summary.md` and `folds.csv` from a saved `results.json`.
pub fn render_report(results: &Path, out_dir: &Path) -> Result<EvaluationReport> {
    let text = fs::read_to_string(results).map_err(|e| Error::io(results, e))?;
    let report: EvaluationReport = serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", results.display())))?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(&out_dir.join("summary.md"), &render_markdown(&report))?;
    write(&out_dir.join("folds.csv"), &folds_csv(&report))?;
    Ok(report)
}

/// `x,y,label` rows with 12 significant digits.
pub fn export_scatter(coords: ArrayView2<f64>, labels: &[usize], class_names: &[String], path: &Path) -> Result<()> {
    if coords.ncols() != 2 {
        return Err(Error::Dimension(format!("scatter export needs 2 columns, got {}", coords.ncols())));
    }
    if coords.nrows() != labels.len() {
        return Err(Error::Dimension(format!("{} rows vs {} labels", coords.nrows(), labels.len())));
    }
    let mut s = String::from("x,y,label\n");
    for (row, &l) in coords.rows().into_iter().zip(labels) {
        let name = class_names
            .get(l)
            .ok_or_else(|| Error::InvalidParameter(format!("label {l} has no class name")))?;
        let _ = writeln!(s, "{:.11e},{:.11e},{name}", row[0], row[1]);
    }
    write(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scatter_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let c = array![[1.0 / 3.0, -2.5e-7], [123.456789012345, 0.0], [-7.0, 1e5 / 7.0]];
        let names = vec!["setosa".to_string(), "virginica".to_string()];
        export_scatter(c.view(), &[1, 0, 1], &names, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "x,y,label");
        for (i, line) in lines[1..].iter().enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            assert!((f[0].parse::<f64>().unwrap() - c[[i, 0]]).abs() <= 1e-9 * (1.0 + c[[i, 0]].abs()));
            assert!((f[1].parse::<f64>().unwrap() - c[[i, 1]]).abs() <= 1e-9 * (1.0 + c[[i, 1]].abs()));
        }
        assert!(lines[1].ends_with(",virginica"));
        assert!(export_scatter(array![[1.0, 2.0, 3.0]].view(), &[0], &names, &path).is_err());
    }
}
