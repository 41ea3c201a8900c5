//! Dataset ingestion, label encoding, stratified sampling and fold planning.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic RNG for `(seed, stream)`; streams separate folds and stages.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Labeled feature matrix. Labels are dense indices into `class_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub source_id: String,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let (n, m) = features.dim();
        if n < 2 || m < 1 {
            return Err(Error::Data(format!("dataset needs at least 2 samples and 1 feature, got {n}x{m}")));
        }
        if labels.len() != n {
            return Err(Error::Data(format!("{} labels for {n} samples", labels.len())));
        }
        if feature_names.len() != m {
            return Err(Error::Data(format!("{} feature names for {m} features", feature_names.len())));
        }
        if class_names.len() < 2 {
            return Err(Error::Data("single-class dataset: at least 2 classes are required".into()));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        let mut counts = vec![0usize; class_names.len()];
        for &l in &labels {
            if l >= class_names.len() {
                return Err(Error::Data(format!("label index {l} out of range")));
            }
            counts[l] += 1;
        }
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Data(format!("class '{}' has no samples", class_names[c])));
        }
        Ok(Dataset {
            features,
            labels,
            class_names,
            feature_names,
            source_id: source_id.into(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.n_classes())
    }

    /// Rows `idx` in the given order, keeping the full class list (a subset may
    /// lack some classes, e.g. a small test fold).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
            source_id: self.source_id.clone(),
        }
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }
}

pub fn class_counts(labels: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// Which CSV column carries the class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("last".into())
    }
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Name(s) => f.write_str(s),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a CSV file. Labels are encoded in order of first appearance.
///
/// `LabelColumn::Name("last")` selects the final column when no column is
/// literally called `last`.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, label_column, has_header, &source_id)
}

pub fn parse_csv(text: &str, label_column: &LabelColumn, has_header: bool, source_id: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: row + 1,
            column: 0,
            message: e.to_string(),
        })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push(rec);
    }
    let header = if has_header && !records.is_empty() {
        Some(records.remove(0))
    } else {
        None
    };
    if records.is_empty() {
        return Err(Error::Data("empty file: no data rows".into()));
    }
    let width = records[0].len();
    if width < 2 {
        return Err(Error::Data("need at least one feature column and one label column".into()));
    }

    let label_idx = match label_column {
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(name) => match header.as_ref().and_then(|h| h.iter().position(|f| f == name)) {
            Some(i) => i,
            None if name == "last" => width - 1,
            None => return Err(Error::Data(format!("label column '{name}' not found"))),
        },
    };
    if label_idx >= width {
        return Err(Error::Data(format!("label column {label_idx} out of range (width {width})")));
    }

    let feature_cols: Vec<usize> = (0..width).filter(|&c| c != label_idx).collect();
    let feature_names = match &header {
        Some(h) => feature_cols.iter().map(|&c| h.get(c).unwrap_or("").to_string()).collect(),
        None => feature_cols.iter().map(|c| format!("f{c}")).collect(),
    };

    let first_row = if header.is_some() { 2 } else { 1 };
    let mut data = Vec::with_capacity(records.len() * feature_cols.len());
    let mut class_names: Vec<String> = Vec::new();
    let mut class_of: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::with_capacity(records.len());
    for (r, rec) in records.iter().enumerate() {
        let row = r + first_row;
        if rec.len() != width {
            return Err(Error::Parse {
                row,
                column: rec.len(),
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for &c in &feature_cols {
            let cell = &rec[c];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: c,
                message: format!("non-numeric feature value '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: c,
                    message: format!("non-finite feature value '{cell}'"),
                });
            }
            data.push(v);
        }
        let token = rec[label_idx].to_string();
        let next = class_names.len();
        let id = *class_of.entry(token.clone()).or_insert_with(|| {
            class_names.push(token);
            next
        });
        labels.push(id);
    }
    if class_names.len() < 2 {
        return Err(Error::Data("single-class file: every label is identical".into()));
    }
    let features = Array2::from_shape_vec((records.len(), feature_cols.len()), data)
        .map_err(|e| Error::Data(e.to_string()))?;
    Dataset::new(features, labels, class_names, feature_names, source_id)
}

/// Parses the two-column `attack_label category` lookup. `#` starts a comment.
pub fn parse_category_map(text: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
        match (parts.next(), parts.next()) {
            (Some(k), Some(v)) => {
                map.insert(k.trim_end_matches('.').to_string(), v.to_string());
            }
            _ => {
                return Err(Error::Parse {
                    row: i + 1,
                    column: 0,
                    message: format!("expected 'label category', got '{line}'"),
                })
            }
        }
    }
    Ok(map)
}

const KDD_SYMBOLIC: [usize; 3] = [1, 2, 3];
const KDD_COLUMNS: usize = 42;

/// Loads raw KDD Cup 1999 records (41 features + label, no header).
///
/// The protocol, service and flag columns are one-hot encoded with
/// categories in first-appearance order; labels are grouped through
/// `category_map` (e.g. `smurf → DOS`).
pub fn load_kdd(path: impl AsRef<Path>, category_map: &HashMap<String, String>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_kdd(&text, category_map, "kdd")
}

pub fn parse_kdd(text: &str, category_map: &HashMap<String, String>, source_id: &str) -> Result<Dataset> {
    let mut rows: Vec<Vec<&str>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != KDD_COLUMNS {
            return Err(Error::Parse {
                row: i + 1,
                column: fields.len(),
                message: format!("expected {KDD_COLUMNS} fields"),
            });
        }
        rows.push(fields);
    }
    if rows.is_empty() {
        return Err(Error::Data("empty file: no data rows".into()));
    }

    // category vocabularies per symbolic column
    let mut vocab: Vec<Vec<String>> = vec![Vec::new(); KDD_SYMBOLIC.len()];
    for r in &rows {
        for (s, &c) in KDD_SYMBOLIC.iter().enumerate() {
            if !vocab[s].iter().any(|v| v == r[c]) {
                vocab[s].push(r[c].to_string());
            }
        }
    }
    let mut feature_names = Vec::new();
    for c in 0..KDD_COLUMNS - 1 {
        match KDD_SYMBOLIC.iter().position(|&s| s == c) {
            Some(s) => feature_names.extend(vocab[s].iter().map(|v| format!("c{c}={v}"))),
            None => feature_names.push(format!("c{c}")),
        }
    }
    let m = feature_names.len();

    let mut data = Vec::with_capacity(rows.len() * m);
    let mut class_names: Vec<String> = Vec::new();
    let mut labels = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        for c in 0..KDD_COLUMNS - 1 {
            match KDD_SYMBOLIC.iter().position(|&s| s == c) {
                Some(s) => data.extend(vocab[s].iter().map(|v| if v == r[c] { 1.0 } else { 0.0 })),
                None => data.push(r[c].parse::<f64>().map_err(|_| Error::Parse {
                    row: i + 1,
                    column: c,
                    message: format!("non-numeric feature value '{}'", r[c]),
                })?),
            }
        }
        let raw = r[KDD_COLUMNS - 1].trim_end_matches('.');
        let category = category_map
            .get(raw)
            .ok_or_else(|| Error::Data(format!("row {}: attack label '{raw}' missing from category map", i + 1)))?;
        let id = match class_names.iter().position(|c| c == category) {
            Some(id) => id,
            None => {
                class_names.push(category.clone());
                class_names.len() - 1
            }
        };
        labels.push(id);
    }
    if class_names.len() < 2 {
        return Err(Error::Data("single-class file: every label is identical".into()));
    }
    let features = Array2::from_shape_vec((rows.len(), m), data).map_err(|e| Error::Data(e.to_string()))?;
    Dataset::new(features, labels, class_names, feature_names, source_id)
}

/// Per-feature statistics from [`standardize`], reapplicable to held-out rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
    /// Features with zero variance; these pass through unchanged.
    pub zero_variance: Vec<bool>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Standardizer {
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
        let mut std = Array1::zeros(x.ncols());
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            std[j] = var.sqrt();
        }
        let zero_variance = std.iter().map(|&s| !(s > 1e-12 * (1.0 + mean_abs(&mean))) ).collect();
        Standardizer { mean, std, zero_variance }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            if self.zero_variance[j] {
                continue;
            }
            let (mu, sd) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| (v - mu) / sd);
        }
        out
    }
}

fn mean_abs(v: &Array1<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
    }
}

/// Scales every feature to mean 0 and population standard deviation 1.
pub fn standardize(ds: &Dataset) -> (Dataset, Standardizer) {
    let st = Standardizer::fit(&ds.features);
    let mut out = ds.clone();
    out.features = st.apply(&ds.features);
    (out, st)
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

fn check_rate(rate: f64, what: &str) -> Result<()> {
    if rate > 0.0 && rate <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must lie in (0, 1], got {rate}")))
    }
}

/// Row indices (ascending) kept by a per-class uniform draw without
/// replacement. Classes flagged in `keep_all` are retained in full.
pub fn stratified_sample_indices(
    labels: &[usize],
    n_classes: usize,
    factor: f64,
    keep_all: &[bool],
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut keep = Vec::new();
    for (c, mut idx) in by_class.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if keep_all.get(c).copied().unwrap_or(false) {
            keep.extend(idx);
            continue;
        }
        let count = round_half_up(factor * idx.len() as f64).max(1).min(idx.len());
        idx.shuffle(rng);
        keep.extend_from_slice(&idx[..count]);
    }
    keep.sort_unstable();
    keep
}

/// Per-class downsampling to `max(1, round(factor · n_c))` samples.
pub fn stratified_downsample(ds: &Dataset, factor: f64, seed: u64) -> Result<Dataset> {
    check_rate(factor, "downsample factor")?;
    let mut rng = rng_for(seed, 0);
    let idx = stratified_sample_indices(&ds.labels, ds.n_classes(), factor, &[], &mut rng);
    Ok(ds.subset(&idx))
}

/// Downsamples every class at `rate` except the named minority classes,
/// which are kept whole.
pub fn kdd_subsample(ds: &Dataset, minority_classes: &[String], rate: f64, seed: u64) -> Result<Dataset> {
    check_rate(rate, "subsample rate")?;
    let mut keep_all = vec![false; ds.n_classes()];
    for name in minority_classes {
        let c = ds
            .class_index(name)
            .ok_or_else(|| Error::Data(format!("unknown class name '{name}'")))?;
        keep_all[c] = true;
    }
    let mut rng = rng_for(seed, 0);
    let idx = stratified_sample_indices(&ds.labels, ds.n_classes(), rate, &keep_all, &mut rng);
    Ok(ds.subset(&idx))
}

/// Largest class count over smallest class count.
pub fn imbalance_ratio(ds: &Dataset) -> f64 {
    let counts: Vec<usize> = ds.class_counts().into_iter().filter(|&c| c > 0).collect();
    let major = counts.iter().copied().max().unwrap_or(1);
    let minor = counts.iter().copied().min().unwrap_or(1);
    major as f64 / minor as f64
}

/// Assignment of every sample to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_of: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Stratified K-fold plan: each class is shuffled and dealt round-robin,
/// continuing the deal position across classes so fold sizes stay within 1.
pub fn stratified_kfold(labels: &[usize], n_classes: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("fold count must be at least 2, got {k}")));
    }
    if k > labels.len() {
        return Err(Error::InvalidParameter(format!(
            "fold count {k} exceeds sample count {}",
            labels.len()
        )));
    }
    let mut rng = rng_for(seed, 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut fold_of = vec![0usize; labels.len()];
    let mut next = 0usize;
    for mut idx in by_class {
        idx.shuffle(&mut rng);
        for i in idx {
            fold_of[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan { fold_of, k, seed })
}

/// Class sizes of the KDD Cup 1999 10% training file, grouped into the five
/// standard categories.
pub const KDD_CLASS_COUNTS: [(&str, usize); 5] = [
    ("DOS", 391_458),
    ("Normal", 97_278),
    ("Probe", 4_107),
    ("R2L", 1_126),
    ("U2R", 52),
];

/// Synthetic stand-in for the KDD data: five Gaussian classes with the real
/// category sizes. The minority classes sit next to the `Normal` cloud so
/// that an unbalanced regression target tends to absorb them.
pub fn kdd_surrogate(seed: u64) -> Dataset {
    const M: usize = 8;
    // (center, spread) per class, in KDD_CLASS_COUNTS order
    let centers: [([f64; M], f64); 5] = [
        ([4.0, -1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0], 0.8),
        ([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0),
        ([0.5, 3.5, -0.5, 0.5, 0.0, 0.0, 0.0, 0.0], 0.8),
        ([1.5, 1.5, 1.5, 0.0, 0.0, 0.0, 0.0, 0.0], 0.6),
        ([-1.5, 1.5, 0.0, 1.5, 0.0, 0.0, 0.0, 0.0], 0.6),
    ];
    let total: usize = KDD_CLASS_COUNTS.iter().map(|(_, c)| c).sum();
    let mut rng = rng_for(seed, 7);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut data = Vec::with_capacity(total * M);
    let mut labels = Vec::with_capacity(total);
    for (c, (_, count)) in KDD_CLASS_COUNTS.iter().enumerate() {
        let (center, spread) = &centers[c];
        for _ in 0..*count {
            for &mu in center.iter() {
                data.push(mu + spread * unit.sample(&mut rng));
            }
            labels.push(c);
        }
    }
    let features = Array2::from_shape_vec((total, M), data).expect("shape");
    Dataset::new(
        features,
        labels,
        KDD_CLASS_COUNTS.iter().map(|(n, _)| n.to_string()).collect(),
        (0..M).map(|j| format!("s{j}")).collect(),
        "kdd-surrogate",
    )
    .expect("surrogate dataset is valid")
}
