use ndarray::{Array2, ArrayView2, Axis};

use super::{check_dim, nearest_neighbors, Backend, Embedding};
use crate::error::{Error, Result};
use crate::numeric::{check_finite, graph_shortest_paths, pairwise_sq_dists, sym_eig, EigenOrder};

/// Classical (metric) scaling of a squared-distance matrix.
///
/// If fewer than `d` eigenvalues of the double-centered matrix are positive,
/// `d` shrinks to that count with a warning.
pub fn classical_mds(d2: ArrayView2<f64>, d: usize) -> Result<Embedding> {
    let n = d2.nrows();
    if d2.ncols() != n {
        return Err(Error::Dimension(format!("squared-distance matrix must be square, got {:?}", d2.dim())));
    }
    check_finite(d2, "squared-distance matrix")?;
    check_dim(Backend::Mds, d, Backend::Mds.max_dim(n, 0, 0).max(1))?;

    // B = -1/2 H D2 H
    let row_means = d2.mean_axis(Axis(1)).expect("non-empty");
    let col_means = d2.mean_axis(Axis(0)).expect("non-empty");
    let grand = row_means.mean().unwrap_or(0.0);
    let mut b = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            b[[i, j]] = -0.5 * (d2[[i, j]] - row_means[i] - col_means[j] + grand);
        }
    }
    let eig = sym_eig(b.view(), EigenOrder::Descending)?;
    let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let positive = eig.values.iter().filter(|&&v| v > 1e-12 * scale.max(1e-300)).count();
    let d = if positive > 0 && positive < d {
        log::warn!("mds: only {positive} positive eigenvalues, reducing dimension from {d}");
        positive
    } else {
        d
    };
    let mut coords = Array2::zeros((n, d));
    for j in 0..d {
        let s = eig.values[j].max(0.0).sqrt();
        for i in 0..n {
            coords[[i, j]] = eig.vectors[[i, j]] * s;
        }
    }
    Embedding::new(coords, Backend::Mds, None)
}

/// Symmetrized k-nearest-neighbor graph with Euclidean edge lengths;
/// `+∞` marks absent edges.
pub fn knn_graph(x: ArrayView2<f64>, k: usize) -> Array2<f64> {
    let n = x.nrows();
    let d2 = pairwise_sq_dists(x);
    let mut w = Array2::from_elem((n, n), f64::INFINITY);
    for i in 0..n {
        w[[i, i]] = 0.0;
        for j in nearest_neighbors(d2.view(), i, k) {
            let len = d2[[i, j]].sqrt();
            w[[i, j]] = len;
            w[[j, i]] = len;
        }
    }
    w
}

fn geodesics(x: ArrayView2<f64>, k_graph: usize) -> Result<Array2<f64>> {
    if k_graph == 0 {
        return Err(Error::InvalidParameter("isomap: k_graph must be at least 1".into()));
    }
    graph_shortest_paths(knn_graph(x, k_graph).view())
}

/// Members of the largest connected component (ties: the one holding the
/// smallest index), read off the geodesic matrix.
fn largest_component(geo: &Array2<f64>) -> Vec<usize> {
    let n = geo.nrows();
    let mut seen = vec![false; n];
    let mut best: Vec<usize> = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let comp: Vec<usize> = (0..n).filter(|&j| geo[[i, j]].is_finite()).collect();
        for &j in &comp {
            seen[j] = true;
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}

/// Isomap: geodesic distances on the kNN graph, then classical scaling.
///
/// A disconnected graph is reported as [`Error::DisconnectedGraph`] carrying
/// the samples outside the largest component; see [`isomap_largest_component`].
pub fn isomap(x: ArrayView2<f64>, k_graph: usize, d: usize) -> Result<Embedding> {
    let geo = geodesics(x, k_graph)?;
    if geo.iter().any(|v| v.is_infinite()) {
        let keep = largest_component(&geo);
        let dropped = (0..x.nrows()).filter(|i| !keep.contains(i)).collect();
        return Err(Error::DisconnectedGraph { dropped });
    }
    let mut e = classical_mds(geo.mapv(|g| g * g).view(), d)?;
    e.method = Backend::Isomap;
    Ok(e)
}

/// Isomap restricted to the largest connected component of the kNN graph.
/// Returns the embedding and the retained row indices.
pub fn isomap_largest_component(x: ArrayView2<f64>, k_graph: usize, d: usize) -> Result<(Embedding, Vec<usize>)> {
    let geo = geodesics(x, k_graph)?;
    let keep = largest_component(&geo);
    let sub = geo.select(Axis(0), &keep).select(Axis(1), &keep);
    let mut e = classical_mds(sub.mapv(|g| g * g).view(), d)?;
    e.method = Backend::Isomap;
    Ok((e, keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn max_dist_gap(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let da = pairwise_sq_dists(a.view()).mapv(f64::sqrt);
        let db = pairwise_sq_dists(b.view()).mapv(f64::sqrt);
        da.iter().zip(db.iter()).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
    }

    #[test]
    fn mds_line() {
        let x = array![[0.0], [1.0], [2.0]];
        let e = classical_mds(pairwise_sq_dists(x.view()).view(), 1).unwrap();
        assert!(max_dist_gap(&x, &e.coords) < 1e-10);
    }

    #[test]
    fn mds_zero_matrix() {
        let e = classical_mds(Array2::zeros((4, 4)).view(), 2).unwrap();
        assert!(e.coords.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mds_shrinks_to_positive_rank() {
        let x = array![[0.0], [1.0], [3.0], [4.5]];
        let e = classical_mds(pairwise_sq_dists(x.view()).view(), 3).unwrap();
        assert_eq!(e.d, 1);
    }

    #[test]
    fn isomap_collinear_geodesic() {
        // k=1 links 0-1 and 1-2 only; geodesic 0→2 is 1.0 + 2.5
        let x = array![[0.0, 0.0], [1.0, 0.0], [3.5, 0.0]];
        let geo = geodesics(x.view(), 1).unwrap();
        assert!((geo[[0, 2]] - 3.5).abs() < 1e-12);
        let e = isomap(x.view(), 1, 1).unwrap();
        let span = e.coords.column(0).iter().cloned().fold(f64::MIN, f64::max)
            - e.coords.column(0).iter().cloned().fold(f64::MAX, f64::min);
        assert!((span - 3.5).abs() < 1e-9);
    }

    #[test]
    fn isomap_disconnected() {
        let x = array![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [50.0, 50.0], [50.1, 50.0]];
        match isomap(x.view(), 1, 1) {
            Err(Error::DisconnectedGraph { dropped }) => assert_eq!(dropped, vec![3, 4]),
            other => panic!("expected disconnected graph, got {other:?}"),
        }
        let (e, keep) = isomap_largest_component(x.view(), 1, 1).unwrap();
        assert_eq!(keep, vec![0, 1, 2]);
        assert_eq!(e.coords.nrows(), 3);
    }
}
