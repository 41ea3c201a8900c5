use ndarray::{Array1, Array2, ArrayView2};

use super::{check_dim, nearest_neighbors, Backend, Embedding};
use crate::error::{Error, Result};
use crate::numeric::{pairwise_sq_dists, solve_spd, sym_eig, EigenOrder};

const REG: f64 = 1e-3;

/// Reconstruction weights: row `i` holds the affine weights (summing to one)
/// that best rebuild `x_i` from its `k` nearest neighbors, zero elsewhere.
///
/// The local Gram matrix gets `1e-3 · tr(G)/k` added to its diagonal when
/// `k` exceeds the feature count or the plain solve is singular.
pub fn lle_weights(x: ArrayView2<f64>, k: usize) -> Result<Array2<f64>> {
    let (n, m) = x.dim();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("lle: k_nbrs must lie in 1..{n}, got {k}")));
    }
    let d2 = pairwise_sq_dists(x);
    let mut omega = Array2::zeros((n, n));
    let ones = Array2::<f64>::ones((k, 1));
    for i in 0..n {
        let nbrs = nearest_neighbors(d2.view(), i, k);
        let mut z = Array2::zeros((k, m));
        for (a, &j) in nbrs.iter().enumerate() {
            for c in 0..m {
                z[[a, c]] = x[[j, c]] - x[[i, c]];
            }
        }
        let mut g = z.dot(&z.t());
        let trace: f64 = g.diag().sum();

        let solve = |g: &Array2<f64>| solve_spd(g.view(), ones.view());
        let regularize = |g: &mut Array2<f64>| {
            let eps = if trace > 0.0 { REG * trace / k as f64 } else { REG };
            for a in 0..k {
                g[[a, a]] += eps;
            }
        };
        let w = if k > m {
            regularize(&mut g);
            solve(&g)?
        } else {
            match solve(&g) {
                Ok(w) => w,
                Err(Error::Singular { .. }) => {
                    regularize(&mut g);
                    solve(&g)?
                }
                Err(e) => return Err(e),
            }
        };
        let total: f64 = w.sum();
        for (a, &j) in nbrs.iter().enumerate() {
            omega[[i, j]] = w[[a, 0]] / total;
        }
    }
    Ok(omega)
}

/// Locally linear embedding.
pub fn lle(x: ArrayView2<f64>, k_nbrs: usize, d: usize) -> Result<Embedding> {
    let n = x.nrows();
    check_dim(Backend::Lle, d, Backend::Lle.max_dim(n, 0, 0))?;
    let omega = lle_weights(x, k_nbrs)?;

    // M = (I - Ω)ᵀ(I - Ω)
    let mut a = -omega;
    for i in 0..n {
        a[[i, i]] += 1.0;
    }
    let mut cost = a.t().dot(&a);
    // M·1 = 0 always; lift the constant direction above the spectrum so the
    // bottom d eigenvectors are exactly the ones orthogonal to it.
    let bound = cost
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let lift = (bound + 1.0) / n as f64;
    cost.mapv_inplace(|v| v + lift);

    let eig = sym_eig(cost.view(), EigenOrder::Ascending)?;
    let scale = (n as f64).sqrt();
    let coords = eig.vectors.slice(ndarray::s![.., ..d]).mapv(|v| v * scale);
    // remove rounding drift in the column means
    let means: Array1<f64> = coords.mean_axis(ndarray::Axis(0)).expect("non-empty");
    Embedding::new(&coords - &means, Backend::Lle, None)
}
