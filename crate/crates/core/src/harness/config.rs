use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::LabelColumn;
use crate::embedding::{AeParams, Backend, EmbedParams, KernelSpec};
use crate::error::{Error, Result};
use crate::metric::FitOptions;
use crate::neighborhood::SimilarMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    #[default]
    Csv,
    /// Raw KDD Cup 1999 records (41 features + attack label).
    Kdd,
    /// Built-in synthetic five-class data with the KDD class sizes.
    KddSurrogate,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "kdd" => Ok(DataFormat::Kdd),
            "kdd-surrogate" => Ok(DataFormat::KddSurrogate),
            _ => Err(Error::Config(format!("unknown data format '{s}' (csv|kdd|kdd-surrogate)"))),
        }
    }
}

/// Evaluation methods. `Proposed` is the full structural pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Proposed,
    RawKnn,
    DrOnly,
    DlsrOriginal,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::RawKnn => "raw-knn",
            Method::DrOnly => "dr-only",
            Method::DlsrOriginal => "dlsr-original",
        }
    }

    /// Whether results vary with the embedding dimension.
    pub fn uses_dimension(&self) -> bool {
        matches!(self, Method::Proposed | Method::DrOnly)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "raw-knn" => Ok(Method::RawKnn),
            "dr-only" => Ok(Method::DrOnly),
            "dlsr-original" => Ok(Method::DlsrOriginal),
            _ => Err(Error::Config(format!(
                "unknown method '{s}' (proposed|raw-knn|dr-only|dlsr-original)"
            ))),
        }
    }
}

/// Either one regularization weight or a grid searched by inner 3-fold CV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Fixed(f64),
    Grid(Vec<f64>),
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec::Fixed(0.1)
    }
}

impl LambdaSpec {
    pub fn candidates(&self) -> Vec<f64> {
        match self {
            LambdaSpec::Fixed(l) => vec![*l],
            LambdaSpec::Grid(g) => g.clone(),
        }
    }
}

impl FromStr for LambdaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad lambda value '{v}'"))))
            .collect::<Result<_>>()?;
        Ok(if vals.len() == 1 { LambdaSpec::Fixed(vals[0]) } else { LambdaSpec::Grid(vals) })
    }
}

/// Per-class subsampling applied once after loading; `protected` classes are kept whole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsampleConfig {
    pub rate: f64,
    pub protected: Vec<String>,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig {
            rate: 0.01,
            protected: vec!["U2R".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub label_column: LabelColumn,
    pub has_header: bool,
    pub format: DataFormat,
    /// Attack-name → category file for `format = kdd`.
    pub category_map: Option<PathBuf>,
    pub subsample: Option<SubsampleConfig>,
    pub standardize: bool,

    pub backend: Backend,
    pub d: Vec<usize>,
    pub k_graph: usize,
    pub k_nbrs: usize,
    pub kernel: KernelSpec,
    pub autoencoder: AeParams,

    /// Neighborhood size for the similar/dissimilar sets.
    pub k: usize,
    pub similar_mode: SimilarMode,
    pub lambda: LambdaSpec,
    pub tol: f64,
    pub max_iter: usize,

    pub folds: usize,
    pub knn_k: usize,
    pub seed: u64,
    pub downsample_factor: f64,
    pub downsample_threshold: usize,
    /// Use only the downsampled training rows as k-NN references.
    pub strict: bool,

    pub out_dir: PathBuf,
    /// Methods evaluated besides the proposed pipeline, on the same folds.
    pub baselines: Vec<Method>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: PathBuf::new(),
            label_column: LabelColumn::default(),
            has_header: true,
            format: DataFormat::Csv,
            category_map: None,
            subsample: None,
            standardize: true,
            backend: Backend::Lle,
            d: vec![2],
            k_graph: 10,
            k_nbrs: 10,
            kernel: KernelSpec::default(),
            autoencoder: AeParams::default(),
            k: 3,
            similar_mode: SimilarMode::Farthest,
            lambda: LambdaSpec::default(),
            tol: 1e-6,
            max_iter: 50,
            folds: 10,
            knn_k: 7,
            seed: 0,
            downsample_factor: 0.1,
            downsample_threshold: 2000,
            strict: false,
            out_dir: PathBuf::from("out"),
            baselines: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.dataset.as_os_str().is_empty() && self.format != DataFormat::KddSurrogate {
            return fail("'dataset' is required".into());
        }
        if self.d.is_empty() {
            return fail("'d' must list at least one dimension".into());
        }
        if self.d.contains(&0) {
            return fail("every entry of 'd' must be at least 1".into());
        }
        if self.folds < 2 {
            return fail(format!("'folds' must be at least 2, got {}", self.folds));
        }
        if self.knn_k == 0 {
            return fail("'knn_k' must be at least 1".into());
        }
        if self.k == 0 {
            return fail("neighborhood 'k' must be at least 1".into());
        }
        let lambdas = self.lambda.candidates();
        if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return fail(format!("'lambda' values must be positive, got {lambdas:?}"));
        }
        if !(self.tol >= 0.0) || self.max_iter == 0 {
            return fail("'tol' must be non-negative and 'max_iter' positive".into());
        }
        if !(self.downsample_factor > 0.0 && self.downsample_factor <= 1.0) {
            return fail(format!("'downsample_factor' must lie in (0, 1], got {}", self.downsample_factor));
        }
        if let Some(s) = &self.subsample {
            if !(s.rate > 0.0 && s.rate <= 1.0) {
                return fail(format!("'subsample.rate' must lie in (0, 1], got {}", s.rate));
            }
        }
        if self.format == DataFormat::Kdd && self.category_map.is_none() {
            return fail("'category_map' is required for format 'kdd'".into());
        }
        if self.baselines.contains(&Method::Proposed) {
            return fail("'baselines' must not list 'proposed'".into());
        }
        Ok(())
    }

    /// Embedding parameters for target dimension `d`.
    pub fn embed_params(&self, d: usize, seed: u64) -> EmbedParams {
        EmbedParams {
            d,
            k_graph: self.k_graph,
            k_nbrs: self.k_nbrs,
            kernel: self.kernel,
            ae: self.autoencoder.clone(),
            seed,
        }
    }

    pub fn fit_options(&self, lambda: f64) -> FitOptions {
        FitOptions {
            lambda,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    pub fn sorted_dims(&self) -> Vec<usize> {
        let mut d = self.d.clone();
        d.sort_unstable();
        d.dedup();
        d
    }
}
