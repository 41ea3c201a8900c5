//! Dense kernels shared by every other module: symmetric eigendecomposition,
//! SPD solves, pairwise distances and all-pairs shortest paths.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenOrder {
    Ascending,
    Descending,
}

/// Eigenpairs of a symmetric matrix. Column `j` of `vectors` pairs with `values[j]`.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

pub fn check_finite(a: ArrayView2<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn check_square(a: ArrayView2<f64>, what: &str) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c || r == 0 {
        return Err(Error::Dimension(format!("{what} must be square and non-empty, got {r}x{c}")));
    }
    Ok(r)
}

/// Sorts eigenpairs and fixes signs. `vt` holds eigenvector `i` in row `i`.
fn finish(d: &[f64], vt: &[f64], n: usize, order: EigenOrder) -> EigenResult {
    let mut idx: Vec<usize> = (0..n).collect();
    match order {
        EigenOrder::Ascending => idx.sort_by(|&i, &j| d[i].total_cmp(&d[j])),
        EigenOrder::Descending => idx.sort_by(|&i, &j| d[j].total_cmp(&d[i])),
    }
    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for (out, &src) in idx.iter().enumerate() {
        values[out] = d[src];
        let vec = &vt[src * n..(src + 1) * n];
        let mut big = 0usize;
        for k in 0..n {
            if vec[k].abs() > vec[big].abs() {
                big = k;
            }
        }
        let sign = if vec[big] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[[k, out]] = sign * vec[k];
        }
    }
    EigenResult { values, vectors }
}

fn symmetrized(a: ArrayView2<f64>, n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    m
}

/// Symmetric eigendecomposition: Householder reduction to tridiagonal form,
/// then implicit QL iterations.
///
/// The input is symmetrized as `(A + Aᵀ)/2` first. Each eigenvector is
/// normalized so that its largest-magnitude entry is positive.
pub fn sym_eig(a: ArrayView2<f64>, order: EigenOrder) -> Result<EigenResult> {
    let n = check_square(a, "eigenproblem input")?;
    check_finite(a, "eigenproblem input")?;
    let mut v = symmetrized(a, n);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e, n);
    // transpose so that each QL rotation touches two contiguous rows
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            vt[j * n + i] = v[i * n + j];
        }
    }
    tridiagonal_ql(&mut vt, &mut d, &mut e, n)?;
    Ok(finish(&d, &vt, n, order))
}

/// Householder reduction of the symmetric matrix in `v` (row-major). On
/// return `d`/`e` hold the diagonal and subdiagonal, `v` the accumulated
/// orthogonal transform.
fn tridiagonalize(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal `(d, e)`, rotating the rows of `vt`.
fn tridiagonal_ql(vt: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 100 {
                    return Err(Error::NoConvergence(iter));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (head, tail) = vt.split_at_mut((i + 1) * n);
                    let row_i = &mut head[i * n..];
                    let row_j = &mut tail[..n];
                    for k in 0..n {
                        let hk = row_j[k];
                        row_j[k] = s * row_i[k] + c * hk;
                        row_i[k] = c * row_i[k] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Slower than
/// [`sym_eig`] beyond a few hundred rows; same output conventions.
pub fn jacobi_eig(a: ArrayView2<f64>, order: EigenOrder) -> Result<EigenResult> {
    let n = check_square(a, "eigenproblem input")?;
    check_finite(a, "eigenproblem input")?;

    let mut m = symmetrized(a, n);
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let mut d: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    let mut converged = n == 1;
    for sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p * n + q].abs();
            }
        }
        if off == 0.0 {
            converged = true;
            break;
        }
        let thresh = if sweep < 3 { 0.2 * off / (n * n) as f64 } else { 0.0 };

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    continue;
                }
                if apq.abs() <= thresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let dh = t * apq;
                z[p] -= dh;
                z[q] += dh;
                d[p] -= dh;
                d[q] += dh;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;

                // rows p and q mirror columns p and q, so read them contiguously
                let (head, tail) = m.split_at_mut(q * n);
                let row_p = &mut head[p * n..(p + 1) * n];
                let row_q = &mut tail[..n];
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let gk = row_p[k];
                    let hk = row_q[k];
                    row_p[k] = gk - s * (hk + gk * tau);
                    row_q[k] = hk + s * (gk - hk * tau);
                }
                for k in 0..n {
                    if k != p && k != q {
                        m[k * n + p] = m[p * n + k];
                        m[k * n + q] = m[q * n + k];
                    }
                }
                // v is stored transposed: row i holds eigenvector i
                let (head, tail) = v.split_at_mut(q * n);
                let vp = &mut head[p * n..(p + 1) * n];
                let vq = &mut tail[..n];
                for k in 0..n {
                    let gk = vp[k];
                    let hk = vq[k];
                    vp[k] = gk - s * (hk + gk * tau);
                    vq[k] = hk + s * (gk - hk * tau);
                }
            }
        }
        for p in 0..n {
            b[p] += z[p];
            d[p] = b[p];
            z[p] = 0.0;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(MAX_SWEEPS));
    }

    Ok(finish(&d, &v, n, order))
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = check_square(a, "SPD matrix")?;
    check_finite(a, "SPD matrix")?;
    let trace: f64 = (0..n).map(|i| a[[i, i]]).sum();
    let floor = 1e-12 * (trace / n as f64).abs();

    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > floor) || diag <= 0.0 {
            return Err(Error::Singular { index: j, pivot: diag });
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = 0.5 * (a[[i, j]] + a[[j, i]]);
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L Y = B` in place for lower-triangular `L`.
pub(crate) fn forward_subst(l: ArrayView2<f64>, b: &mut Array2<f64>) {
    let n = l.nrows();
    for col in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[[i, col]];
            for k in 0..i {
                s -= l[[i, k]] * b[[k, col]];
            }
            b[[i, col]] = s / l[[i, i]];
        }
    }
}

/// Solves `Lᵀ X = Y` in place for lower-triangular `L`.
pub(crate) fn backward_subst(l: ArrayView2<f64>, b: &mut Array2<f64>) {
    let n = l.nrows();
    for col in 0..b.ncols() {
        for i in (0..n).rev() {
            let mut s = b[[i, col]];
            for k in (i + 1)..n {
                s -= l[[k, i]] * b[[k, col]];
            }
            b[[i, col]] = s / l[[i, i]];
        }
    }
}

/// Solves `A X = B` for symmetric positive-definite `A` via Cholesky.
///
/// Fails with [`Error::Singular`] when a pivot drops below `1e-12 · trace(A)/n`.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "solve_spd: A is {}x{}, B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    check_finite(b, "right-hand side")?;
    let l = cholesky(a)?;
    let mut x = b.to_owned();
    forward_subst(l.view(), &mut x);
    backward_subst(l.view(), &mut x);
    Ok(x)
}

/// Squared Euclidean distances between every row of `a` and every row of `b`.
pub fn sq_dists_between(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.axis_iter(Axis(0)).enumerate() {
        for (j, rb) in b.axis_iter(Axis(0)).enumerate() {
            let mut s = 0.0;
            for (x, y) in ra.iter().zip(rb.iter()) {
                let d = x - y;
                s += d * d;
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// Symmetric matrix of squared Euclidean distances between the rows of `x`.
pub fn pairwise_sq_dists(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for (a, b) in x.row(i).iter().zip(x.row(j).iter()) {
                let d = a - b;
                s += d * d;
            }
            let s = s.max(0.0);
            out[[i, j]] = s;
            out[[j, i]] = s;
        }
    }
    out
}

#[derive(PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then node index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All-pairs shortest paths by Dijkstra from every source.
///
/// `w[[i, j]] == f64::INFINITY` marks an absent edge; unreachable pairs stay infinite.
pub fn graph_shortest_paths(w: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = check_square(w, "adjacency matrix")?;
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            let x = w[[i, j]];
            if x.is_nan() || x == f64::NEG_INFINITY || x < 0.0 {
                return Err(Error::NegativeWeight { from: i, to: j, weight: x });
            }
            if i != j && x.is_finite() {
                adj[i].push((j, x));
            }
        }
    }

    let mut out = Array2::from_elem((n, n), f64::INFINITY);
    let mut heap = BinaryHeap::new();
    for src in 0..n {
        let mut dist = vec![f64::INFINITY; n];
        dist[src] = 0.0;
        heap.push(HeapItem { dist: 0.0, node: src });
        while let Some(HeapItem { dist: du, node: u }) = heap.pop() {
            if du > dist[u] {
                continue;
            }
            for &(v, wt) in &adj[u] {
                let nd = du + wt;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapItem { dist: nd, node: v });
                }
            }
        }
        for (j, d) in dist.into_iter().enumerate() {
            out[[src, j]] = d;
        }
    }
    Ok(out)
}

/// Largest absolute entry.
pub fn max_abs(a: ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Column means of `x`.
pub(crate) fn col_means(x: ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()))
}
