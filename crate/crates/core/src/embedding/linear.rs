use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{check_dim, Backend, Embedding, OutOfSample};
use crate::error::{Error, Result};
use crate::numeric::{backward_subst, cholesky, col_means, forward_subst, sym_eig, EigenOrder};

/// Principal axes of the sample covariance.
pub fn pca(x: ArrayView2<f64>, d: usize) -> Result<Embedding> {
    let (n, m) = x.dim();
    check_dim(Backend::Pca, d, Backend::Pca.max_dim(n, m, 0))?;
    let mean = col_means(x);
    let xc = &x - &mean;
    let cov = xc.t().dot(&xc) / (n as f64 - 1.0);
    let eig = sym_eig(cov.view(), EigenOrder::Descending)?;
    let proj = eig.vectors.slice(ndarray::s![.., ..d]).to_owned();
    let coords = xc.dot(&proj);
    let offset = -mean.dot(&proj);
    Embedding::new(
        coords,
        Backend::Pca,
        Some(OutOfSample::Linear { projection: proj, offset }),
    )
}

/// Within-class (compactness) and between-class (separation) scatter, each
/// class weighted equally.
pub(crate) fn lda_scatter(x: ArrayView2<f64>, labels: &[usize]) -> Result<(Array2<f64>, Array2<f64>, usize)> {
    let (n, m) = x.dim();
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} rows", labels.len())));
    }
    let n_classes = labels.iter().copied().max().map_or(0, |c| c + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let present: Vec<&Vec<usize>> = members.iter().filter(|v| !v.is_empty()).collect();
    let c = present.len();
    if c < 2 {
        return Err(Error::InvalidParameter("lda needs at least two classes".into()));
    }
    let overall = col_means(x);
    let mut within = Array2::<f64>::zeros((m, m));
    let mut between = Array2::<f64>::zeros((m, m));
    for idx in present {
        let xs = x.select(Axis(0), idx);
        let mu = col_means(xs.view());
        let xc = &xs - &mu;
        within += &(xc.t().dot(&xc) / idx.len() as f64);
        let diff = (&mu - &overall).insert_axis(Axis(1));
        between += &diff.dot(&diff.t());
    }
    within /= c as f64;
    between /= c as f64;
    Ok((within, between, c))
}

/// Fisher discriminant directions from the ratio-trace generalized eigenproblem
/// `Σ_S w = μ Σ_C w`. A singular or nearly singular `Σ_C` gets
/// `γ = 1e-6 · tr(Σ_C)/m` added to its diagonal.
pub fn lda(x: ArrayView2<f64>, labels: &[usize], d: usize) -> Result<Embedding> {
    let m = x.ncols();
    let (mut within, between, c) = lda_scatter(x, labels)?;
    check_dim(Backend::Lda, d, c - 1)?;

    let trace: f64 = within.diag().sum();
    let gamma = if trace > 0.0 { 1e-6 * trace / m as f64 } else { 1e-12 };
    let well_conditioned = |l: &Array2<f64>| l.diag().iter().all(|&p| p * p > 1e-3 * gamma);
    let l = match cholesky(within.view()) {
        Ok(l) if well_conditioned(&l) => l,
        _ => {
            for i in 0..m {
                within[[i, i]] += gamma;
            }
            cholesky(within.view())?
        }
    };
    // S̃ = L⁻¹ Σ_S L⁻ᵀ
    let mut tmp = between.clone();
    forward_subst(l.view(), &mut tmp);
    let mut st = tmp.t().to_owned();
    forward_subst(l.view(), &mut st);
    let eig = sym_eig(st.view(), EigenOrder::Descending)?;
    if eig.values[0] <= 1e-12 * (1.0 + trace) {
        log::warn!("lda: between-class scatter is zero (identical class means); projection is arbitrary");
    }
    let mut w = eig.vectors.slice(ndarray::s![.., ..d]).to_owned();
    backward_subst(l.view(), &mut w);
    for mut col in w.axis_iter_mut(Axis(1)) {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let mean = col_means(x);
    let coords = (&x - &mean).dot(&w);
    let offset: Array1<f64> = -mean.dot(&w);
    Embedding::new(coords, Backend::Lda, Some(OutOfSample::Linear { projection: w, offset }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::pairwise_sq_dists;
    use ndarray::array;

    #[test]
    fn pca_axis_aligned() {
        // variances 4 and 1 along the two axes
        let x = array![[2.0, 1.0], [2.0, -1.0], [-2.0, 1.0], [-2.0, -1.0]];
        let e = pca(x.view(), 1).unwrap();
        let mean0 = x.column(0).mean().unwrap();
        for i in 0..x.nrows() {
            assert!((e.coords[[i, 0]].abs() - (x[[i, 0]] - mean0).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn pca_full_rank_isometry() {
        let x = array![[1.0, 2.0, 0.5], [0.3, -1.0, 2.0], [2.2, 0.1, -0.4], [-1.0, 1.5, 1.0], [0.0, 0.0, 3.0]];
        let e = pca(x.view(), 3).unwrap();
        let a = pairwise_sq_dists(x.view());
        let b = pairwise_sq_dists(e.coords.view());
        assert!(a.iter().zip(b.iter()).all(|(p, q)| (p - q).abs() < 1e-8));
        // out-of-sample map reproduces the training coordinates
        let t = e.transform(x.view()).unwrap();
        assert!(t.iter().zip(e.coords.iter()).all(|(p, q)| (p - q).abs() < 1e-12));
    }

    #[test]
    fn pca_projected_variance_matches_2x2_oracle() {
        let x: Array2<f64> = array![[1.0, 2.0], [2.0, 3.5], [3.0, 3.9], [4.0, 6.1], [5.0, 6.8]];
        // closed-form largest eigenvalue of [[a, b], [b, c]]
        let n: f64 = 5.0;
        let mx: f64 = x.column(0).mean().unwrap();
        let my: f64 = x.column(1).mean().unwrap();
        let a = x.column(0).iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (n - 1.0);
        let c = x.column(1).iter().map(|v| (v - my).powi(2)).sum::<f64>() / (n - 1.0);
        let b = x.rows().into_iter().map(|r| (r[0] - mx) * (r[1] - my)).sum::<f64>() / (n - 1.0);
        let lambda = 0.5 * (a + c) + (0.25 * (a - c).powi(2) + b * b).sqrt();
        let e = pca(x.view(), 1).unwrap();
        let var = e.coords.column(0).iter().map(|v| v * v).sum::<f64>() / (n - 1.0);
        assert!((var - lambda).abs() < 1e-10);
        assert!(pca(x.view(), 3).is_err());
    }

    #[test]
    fn lda_separates_clusters() {
        // spread ~0.1, gap 10× larger
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.02;
            rows.push([t, 0.1 - t]);
            labels.push(0);
            rows.push([1.0 + t, 1.0 - t]);
            labels.push(1);
        }
        let x = Array2::from_shape_fn((20, 2), |(i, j)| rows[i][j]);
        let e = lda(x.view(), &labels, 1).unwrap();
        let mu = |c: usize| {
            let v: Vec<f64> = (0..20).filter(|&i| labels[i] == c).map(|i| e.coords[[i, 0]]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (m0, m1) = (mu(0), mu(1));
        for i in 0..20 {
            let p = e.coords[[i, 0]];
            let pred = if (p - m0).abs() < (p - m1).abs() { 0 } else { 1 };
            assert_eq!(pred, labels[i]);
        }
        assert!(lda(x.view(), &labels, 2).is_err());
    }

    #[test]
    fn lda_identical_means_is_degenerate_but_finite() {
        let x = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let e = lda(x.view(), &[0, 0, 1, 1], 1).unwrap();
        assert!(e.coords.iter().all(|v| v.is_finite()));
    }
}
