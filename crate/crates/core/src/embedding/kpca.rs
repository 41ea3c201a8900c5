use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_dim, Backend, Embedding, OutOfSample};
use crate::error::{Error, Result};
use crate::numeric::{sq_dists_between, sym_eig, EigenOrder};

const EIG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    /// `exp(-gamma · ‖x − y‖²)`
    Rbf { gamma: f64 },
    /// `⟨x, y⟩`; kernel PCA then coincides with PCA.
    Linear,
}

impl Kernel {
    pub fn gram_between(&self, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
        match *self {
            Kernel::Rbf { gamma } => sq_dists_between(a, b).mapv(|d| (-gamma * d).exp()),
            Kernel::Linear => a.dot(&b.t()),
        }
    }
}

/// `1 / (m · mean feature variance)`.
pub fn default_gamma(x: ArrayView2<f64>) -> f64 {
    let m = x.ncols() as f64;
    let var = x.var_axis(Axis(0), 0.0).mean().unwrap_or(1.0);
    if var > 0.0 {
        1.0 / (m * var)
    } else {
        1.0 / m
    }
}

/// Kernel PCA on the double-centered Gram matrix. Training coordinates are
/// `v·√λ`; new rows are projected with dual coefficients `v/√λ`.
pub fn kernel_pca(x: ArrayView2<f64>, kernel: Kernel, d: usize) -> Result<Embedding> {
    let n = x.nrows();
    if let Kernel::Rbf { gamma } = kernel {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("kpca: gamma must be positive, got {gamma}")));
        }
    }
    check_dim(Backend::Kpca, d, Backend::Kpca.max_dim(n, 0, 0))?;

    let k = kernel.gram_between(x, x);
    let col_means = k.mean_axis(Axis(0)).expect("non-empty");
    let grand = col_means.mean().unwrap_or(0.0);
    let mut kc = k.clone();
    for i in 0..n {
        for j in 0..n {
            kc[[i, j]] = k[[i, j]] - col_means[i] - col_means[j] + grand;
        }
    }
    let eig = sym_eig(kc.view(), EigenOrder::Descending)?;
    let positive = eig.values.iter().filter(|&&v| v > EIG_FLOOR).count();
    if positive == 0 {
        return Err(Error::DegenerateKernel);
    }
    let d = if positive < d {
        log::warn!("kpca: only {positive} eigenvalues above {EIG_FLOOR:e}, reducing dimension from {d}");
        positive
    } else {
        d
    };
    let mut coords = Array2::zeros((n, d));
    let mut alphas = Array2::zeros((n, d));
    for j in 0..d {
        let root = eig.values[j].sqrt();
        for i in 0..n {
            coords[[i, j]] = eig.vectors[[i, j]] * root;
            alphas[[i, j]] = eig.vectors[[i, j]] / root;
        }
    }
    Embedding::new(
        coords,
        Backend::Kpca,
        Some(OutOfSample::Kernel {
            train: x.to_owned(),
            kernel,
            alphas,
            train_kernel_col_means: col_means,
            train_kernel_mean: grand,
        }),
    )
}
