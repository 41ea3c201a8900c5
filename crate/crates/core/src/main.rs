use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use structural_dml::data::{imbalance_ratio, LabelColumn};
use structural_dml::embedding::Backend;
use structural_dml::harness::{
    load_dataset, render_report, run_baselines, run_cv, scatter_panels, write_outputs, write_scatter, DataFormat,
    EvaluationReport, ExperimentConfig, LambdaSpec, Method,
};
use structural_dml::neighborhood::SimilarMode;
use structural_dml::Result;

#[derive(Parser)]
#[command(name = "sdml", version, about = "Metric learning from manifold structural neighborhoods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validate the proposed pipeline (plus any --baselines).
    Run(ConfigArgs),
    /// Cross-validate baselines only, on the same folds as `run`.
    Baseline(ConfigArgs),
    /// Print dataset properties: size, classes, class counts, imbalance ratio.
    InspectData(ConfigArgs),
    /// Write 2D scatter CSVs of the original, embedded and learned spaces.
    Scatter(ConfigArgs),
    /// Re-render summary.md and folds.csv from a results.json.
    Report {
        results: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

/// Every flag overrides the matching field of the JSON config.
#[derive(Args)]
struct ConfigArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset path (positional form of --dataset).
    #[arg(value_name = "DATASET")]
    dataset_pos: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Label column: index or header name ("last" by default).
    #[arg(long)]
    label_column: Option<LabelColumn>,
    #[arg(long)]
    no_header: bool,
    /// csv | kdd | kdd-surrogate
    #[arg(long)]
    format: Option<DataFormat>,
    #[arg(long)]
    category_map: Option<PathBuf>,
    /// Per-class subsampling rate applied after loading.
    #[arg(long)]
    subsample_rate: Option<f64>,
    /// Classes kept whole by --subsample-rate.
    #[arg(long, value_delimiter = ',')]
    protected: Option<Vec<String>>,
    #[arg(long)]
    backend: Option<Backend>,
    /// Embedding dimensions to sweep, e.g. 1,2,3.
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<usize>>,
    #[arg(long)]
    k_graph: Option<usize>,
    #[arg(long)]
    k_nbrs: Option<usize>,
    /// Neighborhood size of the similar/dissimilar sets.
    #[arg(long)]
    k: Option<usize>,
    /// farthest | nearest
    #[arg(long)]
    similar_mode: Option<SimilarMode>,
    /// One value, or a comma-separated grid chosen by inner 3-fold CV.
    #[arg(long)]
    lambda: Option<LambdaSpec>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    knn_k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strict: bool,
    /// raw-knn, dr-only, dlsr-original
    #[arg(long, value_delimiter = ',')]
    baselines: Option<Vec<Method>>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| structural_dml::Error::Io { path: p.clone(), source: e })?;
                serde_json::from_str(&text).map_err(|e| structural_dml::Error::Config(e.to_string()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.dataset.or(self.dataset_pos) {
            cfg.dataset = v;
        }
        if let Some(v) = self.label_column {
            cfg.label_column = v;
        }
        if self.no_header {
            cfg.has_header = false;
        }
        if let Some(v) = self.format {
            cfg.format = v;
        }
        if let Some(v) = self.category_map {
            cfg.category_map = Some(v);
        }
        if self.subsample_rate.is_some() || self.protected.is_some() {
            let mut s = cfg.subsample.take().unwrap_or_default();
            if let Some(r) = self.subsample_rate {
                s.rate = r;
            }
            if let Some(p) = self.protected {
                s.protected = p;
            }
            cfg.subsample = Some(s);
        }
        if let Some(v) = self.backend {
            cfg.backend = v;
        }
        if let Some(v) = self.d {
            cfg.d = v;
        }
        if let Some(v) = self.k_graph {
            cfg.k_graph = v;
        }
        if let Some(v) = self.k_nbrs {
            cfg.k_nbrs = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.similar_mode {
            cfg.similar_mode = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.folds {
            cfg.folds = v;
        }
        if let Some(v) = self.knn_k {
            cfg.knn_k = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if self.strict {
            cfg.strict = true;
        }
        if let Some(v) = self.baselines {
            cfg.baselines = v;
        }
        if let Some(v) = self.out_dir {
            cfg.out_dir = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_best(report: &EvaluationReport) {
    for m in &report.methods {
        let d = m.best_d.map_or("-".to_string(), |d| d.to_string());
        println!("{:<14} accuracy {:.4}  (d, R) = ({d}, {})", m.method.as_str(), m.best_accuracy, m.local_rank);
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let ds = load_dataset(&cfg)?;
            let (report, timing) = run_cv(&cfg, &ds)?;
            write_outputs(&report, Some(&timing), &cfg.out_dir)?;
            print_best(&report);
            println!("results written to {}", cfg.out_dir.display());
        }
        Command::Baseline(args) => {
            let cfg = args.resolve()?;
            let ds = load_dataset(&cfg)?;
            let (report, timing) = run_baselines(&cfg, &ds)?;
            write_outputs(&report, Some(&timing), &cfg.out_dir)?;
            print_best(&report);
            println!("results written to {}", cfg.out_dir.display());
        }
        Command::InspectData(args) => {
            let cfg = args.resolve()?;
            let ds = load_dataset(&cfg)?;
            println!("dataset: {}", ds.source_id);
            println!("samples: {}", ds.n_samples());
            println!("features: {}", ds.n_features());
            println!("classes: {}", ds.n_classes());
            for (name, count) in ds.class_names.iter().zip(ds.class_counts()) {
                println!("  {name}: {count}");
            }
            println!("imbalance ratio: {:.2}", imbalance_ratio(&ds));
        }
        Command::Scatter(args) => {
            let cfg = args.resolve()?;
            let ds = load_dataset(&cfg)?;
            let (panels, labels) = scatter_panels(&cfg, &ds)?;
            write_scatter(&panels, &labels, &ds.class_names, &cfg.out_dir)?;
            for (name, _) in &panels {
                println!("{}", cfg.out_dir.join(format!("scatter_{name}.csv")).display());
            }
        }
        Command::Report { results, out_dir } => {
            let out = out_dir.unwrap_or_else(|| results.parent().map(PathBuf::from).unwrap_or_default());
            let report = render_report(&results, &out)?;
            print_best(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
