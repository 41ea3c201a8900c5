//! Manifold and linear embedding backends.
//!
//! Every backend returns an [`Embedding`]: `n × d` coordinates for the
//! training rows plus, for PCA/LDA/kernel PCA/autoencoder, a map that places
//! new rows in the same space.
//!
//! LLE coordinates follow the normalization `Σ yᵢ = 0`, `(1/n) Σ yᵢ yᵢᵀ = I`,
//! i.e. each bottom eigenvector is scaled by `√n`.

mod autoencoder;
mod kpca;
mod linear;
mod lle;
mod mds;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sq_dists;

pub use autoencoder::{ae_encode, ae_loss_and_grad, train_autoencoder, AeGradients, AeParams, AutoencoderModel, TrainingLog};
pub use kpca::{default_gamma, kernel_pca, Kernel};
pub use linear::{lda, pca};
pub use lle::{lle, lle_weights};
pub use mds::{classical_mds, isomap, isomap_largest_component, knn_graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Pca,
    Mds,
    Isomap,
    Lle,
    Lda,
    Kpca,
    Autoencoder,
}

impl Backend {
    pub const ALL: [Backend; 7] = [
        Backend::Pca,
        Backend::Mds,
        Backend::Isomap,
        Backend::Lle,
        Backend::Lda,
        Backend::Kpca,
        Backend::Autoencoder,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Backend::Pca => "pca",
            Backend::Mds => "mds",
            Backend::Isomap => "isomap",
            Backend::Lle => "lle",
            Backend::Lda => "lda",
            Backend::Kpca => "kpca",
            Backend::Autoencoder => "autoencoder",
        }
    }

    /// Largest admissible target dimension for `n` samples, `m` features and `c` classes.
    pub fn max_dim(&self, n: usize, m: usize, c: usize) -> usize {
        match self {
            Backend::Pca => m.min(n.saturating_sub(1)),
            Backend::Lda => c.saturating_sub(1),
            Backend::Lle => n.saturating_sub(2),
            Backend::Mds | Backend::Isomap | Backend::Kpca => n.saturating_sub(1),
            Backend::Autoencoder => usize::MAX,
        }
    }

    /// Whether the embedding at dimension `d` is the leading `d` columns of
    /// the embedding at any larger dimension.
    pub fn nested(&self) -> bool {
        !matches!(self, Backend::Autoencoder)
    }

    pub fn supervised(&self) -> bool {
        matches!(self, Backend::Lda)
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Backend::ALL
            .iter()
            .copied()
            .find(|b| b.as_str() == s.to_ascii_lowercase())
            .or(match s {
                "ae" => Some(Backend::Autoencoder),
                "kernel-pca" | "kernel_pca" => Some(Backend::Kpca),
                _ => None,
            })
            .ok_or_else(|| Error::Config(format!("unknown embedding method '{s}'")))
    }
}

/// Maps rows outside the training set into an embedding.
#[derive(Debug, Clone, PartialEq)]
pub enum OutOfSample {
    /// `coords = x · projection + offset`
    Linear { projection: Array2<f64>, offset: Array1<f64> },
    /// Centered-kernel projection against the training rows.
    Kernel {
        train: Array2<f64>,
        kernel: Kernel,
        alphas: Array2<f64>,
        train_kernel_col_means: Array1<f64>,
        train_kernel_mean: f64,
    },
    Encoder(AutoencoderModel),
}

impl OutOfSample {
    fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            OutOfSample::Linear { projection, offset } => {
                if x.ncols() != projection.nrows() {
                    return Err(Error::Dimension(format!(
                        "expected {} features, got {}",
                        projection.nrows(),
                        x.ncols()
                    )));
                }
                Ok(x.dot(projection) + offset)
            }
            OutOfSample::Kernel {
                train,
                kernel,
                alphas,
                train_kernel_col_means,
                train_kernel_mean,
            } => {
                if x.ncols() != train.ncols() {
                    return Err(Error::Dimension(format!(
                        "expected {} features, got {}",
                        train.ncols(),
                        x.ncols()
                    )));
                }
                let mut k = kernel.gram_between(x, train.view());
                let row_means = k.mean_axis(Axis(1)).expect("non-empty kernel rows");
                for (i, mut row) in k.axis_iter_mut(Axis(0)).enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v += train_kernel_mean - row_means[i] - train_kernel_col_means[j];
                    }
                }
                Ok(k.dot(alphas))
            }
            OutOfSample::Encoder(model) => Ok(ae_encode(model, x)?.coords),
        }
    }

    fn truncate(&self, d: usize) -> Option<OutOfSample> {
        match self {
            OutOfSample::Linear { projection, offset } => Some(OutOfSample::Linear {
                projection: projection.slice(ndarray::s![.., ..d]).to_owned(),
                offset: offset.slice(ndarray::s![..d]).to_owned(),
            }),
            OutOfSample::Kernel {
                train,
                kernel,
                alphas,
                train_kernel_col_means,
                train_kernel_mean,
            } => Some(OutOfSample::Kernel {
                train: train.clone(),
                kernel: *kernel,
                alphas: alphas.slice(ndarray::s![.., ..d]).to_owned(),
                train_kernel_col_means: train_kernel_col_means.clone(),
                train_kernel_mean: *train_kernel_mean,
            }),
            OutOfSample::Encoder(_) => None,
        }
    }
}

/// Low-dimensional coordinates of the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: Array2<f64>,
    pub method: Backend,
    pub d: usize,
    pub oos_map: Option<OutOfSample>,
}

impl Embedding {
    pub(crate) fn new(coords: Array2<f64>, method: Backend, oos_map: Option<OutOfSample>) -> Result<Embedding> {
        if !coords.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("{method} coordinates")));
        }
        let d = coords.ncols();
        Ok(Embedding { coords, method, d, oos_map })
    }

    /// Places new rows in the embedding space, if the backend supports it.
    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match &self.oos_map {
            Some(map) => map.apply(x),
            None => Err(Error::InvalidParameter(format!(
                "{} embeddings have no out-of-sample map",
                self.method
            ))),
        }
    }

    /// Leading `d` coordinates; `None` for backends that are not nested in `d`.
    pub fn truncate(&self, d: usize) -> Option<Embedding> {
        if !self.method.nested() {
            return (d == self.d).then(|| self.clone());
        }
        let d = d.min(self.d);
        let oos_map = match &self.oos_map {
            Some(m) => Some(m.truncate(d)?),
            None => None,
        };
        Some(Embedding {
            coords: self.coords.slice(ndarray::s![.., ..d]).to_owned(),
            method: self.method,
            d,
            oos_map,
        })
    }
}

/// Kernel choice for kernel PCA; `gamma = None` uses [`default_gamma`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelSpec {
    Rbf { gamma: Option<f64> },
    Linear,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Rbf { gamma: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedParams {
    pub d: usize,
    pub k_graph: usize,
    pub k_nbrs: usize,
    pub kernel: KernelSpec,
    pub ae: AeParams,
    pub seed: u64,
}

impl Default for EmbedParams {
    fn default() -> Self {
        EmbedParams {
            d: 2,
            k_graph: 10,
            k_nbrs: 10,
            kernel: KernelSpec::default(),
            ae: AeParams::default(),
            seed: 0,
        }
    }
}

/// Runs the named backend on `x`.
pub fn embed(x: ArrayView2<f64>, labels: Option<&[usize]>, method: Backend, params: &EmbedParams) -> Result<Embedding> {
    let d = params.d;
    match method {
        Backend::Pca => pca(x, d),
        Backend::Mds => classical_mds(pairwise_sq_dists(x).view(), d),
        Backend::Isomap => isomap(x, params.k_graph, d),
        Backend::Lle => lle(x, params.k_nbrs, d),
        Backend::Lda => {
            let labels = labels.ok_or_else(|| Error::InvalidParameter("lda requires labels".into()))?;
            lda(x, labels, d)
        }
        Backend::Kpca => {
            let kernel = match params.kernel {
                KernelSpec::Rbf { gamma } => Kernel::Rbf {
                    gamma: gamma.unwrap_or_else(|| default_gamma(x)),
                },
                KernelSpec::Linear => Kernel::Linear,
            };
            kernel_pca(x, kernel, d)
        }
        Backend::Autoencoder => {
            let (model, _) = train_autoencoder(x, d, &params.ae, params.seed)?;
            ae_encode(&model, x)
        }
    }
}

pub(crate) fn check_dim(method: Backend, d: usize, cap: usize) -> Result<()> {
    if d == 0 || d > cap {
        return Err(Error::InvalidParameter(format!(
            "{method}: target dimension {d} outside 1..={cap}"
        )));
    }
    Ok(())
}

/// Indices of the `k` nearest rows to row `i` (excluding `i`), ties by index.
pub(crate) fn nearest_neighbors(d2: ArrayView2<f64>, i: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..d2.ncols()).filter(|&j| j != i).collect();
    idx.sort_by(|&a, &b| d2[[i, a]].total_cmp(&d2[[i, b]]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn facade_dispatch() {
        let x = array![[0.0, 1.0], [2.0, 0.5], [1.0, -1.0], [3.0, 2.0], [-1.0, 0.0]];
        let params = EmbedParams { d: 1, ..Default::default() };
        let a = embed(x.view(), None, Backend::Pca, &params).unwrap();
        assert_eq!(a, pca(x.view(), 1).unwrap());
        let b = embed(x.view(), None, Backend::Mds, &params).unwrap();
        assert_eq!(b, classical_mds(pairwise_sq_dists(x.view()).view(), 1).unwrap());
        assert!(embed(x.view(), None, Backend::Lda, &params).is_err());
        assert!("umap".parse::<Backend>().is_err());
        assert_eq!("LLE".parse::<Backend>().unwrap(), Backend::Lle);
    }
}
