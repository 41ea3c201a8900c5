use std::path::Path;

use ndarray::{Array2, Axis};

use super::config::ExperimentConfig;
use super::pipeline::embed_with_fallback;
use super::report::export_scatter;
use crate::data::{rng_for, standardize, stratified_sample_indices, Dataset};
use crate::embedding::pca;
use crate::error::{Error, Result, Stage, StageExt};
use crate::metric::{fit_dlsr_original, fit_structural, transform};
use crate::neighborhood::{build_sets, build_targets};

/// Panel name and its n×2 coordinates.
pub type Panel = (String, Array2<f64>);

fn leading_axes(x: &Array2<f64>) -> Result<Array2<f64>> {
    if x.ncols() == 2 {
        return Ok(x.clone());
    }
    if x.ncols() < 2 {
        return Err(Error::Dimension(format!("cannot draw {} columns in 2D", x.ncols())));
    }
    Ok(pca(x.view(), 2)?.coords)
}

/// Two-dimensional views of the whole dataset (after the usual downsampling
/// when it is large), keyed by panel name:
/// `original` (leading principal axes of the standardized features),
/// the backend embedding at d = 2, `dlsr` and `proposed` (leading principal
/// axes of the respective similarity spaces).
pub fn scatter_panels(cfg: &ExperimentConfig, ds: &Dataset) -> Result<(Vec<Panel>, Vec<usize>)> {
    let ds = if ds.n_samples() > cfg.downsample_threshold {
        let mut rng = rng_for(cfg.seed, 99);
        let idx = stratified_sample_indices(&ds.labels, ds.n_classes(), cfg.downsample_factor, &[], &mut rng);
        ds.subset(&idx)
    } else {
        ds.clone()
    };
    let x = if cfg.standardize { standardize(&ds).0.features } else { ds.features.clone() };
    let labels = ds.labels.clone();
    let lambda = cfg.lambda.candidates()[0];

    let mut panels = vec![("original".to_string(), leading_axes(&x).stage(Stage::Embed)?)];
    let e2 = embed_with_fallback(cfg, x.view(), &labels, 2.min(cfg.backend.max_dim(x.nrows(), x.ncols(), ds.n_classes())), cfg.seed)
        .stage(Stage::Embed)?;
    let view = if e2.d == 2 {
        e2.coords.clone()
    } else {
        ndarray::concatenate(Axis(1), &[e2.coords.view(), Array2::zeros((x.nrows(), 1)).view()])
            .map_err(|e| Error::Dimension(e.to_string()))?
    };
    panels.push((cfg.backend.to_string(), view));

    let dlsr = fit_dlsr_original(x.view(), &labels, ds.n_classes(), &cfg.fit_options(lambda)).stage(Stage::Fit)?;
    panels.push(("dlsr".to_string(), leading_axes(&transform(&dlsr, x.view())?).stage(Stage::Transform)?));

    let sets = build_sets(e2.coords.view(), &labels, cfg.k, cfg.similar_mode).stage(Stage::Neighborhood)?;
    let targets = build_targets(&sets, labels.len()).stage(Stage::Neighborhood)?;
    let model = fit_structural(x.view(), &targets, &cfg.fit_options(lambda)).stage(Stage::Fit)?;
    panels.push(("proposed".to_string(), leading_axes(&transform(&model, x.view())?).stage(Stage::Transform)?));
    Ok((panels, labels))
}

/// Writes `scatter_<panel>.csv` for each panel.
pub fn write_scatter(panels: &[Panel], labels: &[usize], class_names: &[String], out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (name, coords) in panels {
        export_scatter(coords.view(), labels, class_names, &out_dir.join(format!("scatter_{name}.csv")))?;
    }
    Ok(())
}
