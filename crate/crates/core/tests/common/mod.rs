#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
    let normal = rand_distr::StandardNormal;
    Array2::from_shape_simple_fn((n, m), || rng.sample::<f64, _>(normal))
}

/// Random points with labels drawn from `0..c`, every class present.
pub fn labeled_points(rng: &mut ChaCha8Rng, n: usize, m: usize, c: usize) -> (Array2<f64>, Vec<usize>) {
    let x = gaussian(rng, n, m);
    let mut labels: Vec<usize> = (0..n).map(|i| if i < c { i } else { rng.gen_range(0..c) }).collect();
    // shuffle so the guaranteed members are not always first
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }
    (x, labels)
}

fn with_intercept(x: ArrayView2<f64>) -> Array2<f64> {
    let ones = Array2::ones((x.nrows(), 1));
    ndarray::concatenate(Axis(1), &[x.view(), ones.view()]).unwrap()
}

/// Largest eigenvalue of `AᵀA` by power iteration, inflated slightly.
fn gram_norm(a: &Array2<f64>) -> f64 {
    let g = a.t().dot(a);
    let mut v = Array1::from_elem(g.nrows(), 1.0);
    let mut est = 0.0;
    for _ in 0..500 {
        let w = g.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        est = norm / v.dot(&v).sqrt();
        v = w / norm;
    }
    est * 1.05 + 1e-12
}

/// Gradient descent with a fixed `1/L` step on `(W, t)` for
/// `Σ φ(R) + λ‖W‖²`, where `R = XW + e·tᵀ − Y` and each entry's penalty
/// minimizes over the drag `M ≥ 0` with `M = max(B·R, 0)`.
/// Returns the objective of the final iterate.
pub fn descent_oracle(x: ArrayView2<f64>, y: ArrayView2<f64>, b: ArrayView2<f64>, lambda: f64, iters: usize) -> f64 {
    let xa = with_intercept(x);
    let m = x.ncols();
    let step = 1.0 / (2.0 * gram_norm(&xa) + 2.0 * lambda);
    let mut theta: Array2<f64> = Array2::zeros((m + 1, y.ncols()));
    let value = |theta: &Array2<f64>| -> (f64, Array2<f64>) {
        let r = xa.dot(theta) - &y;
        let mut e = r.clone();
        ndarray::Zip::from(&mut e).and(&r).and(b).for_each(|e, &r, &b| {
            let drag = if b != 0.0 { (b * r).max(0.0) } else { 0.0 };
            *e = r - b * drag;
        });
        let w = theta.slice(ndarray::s![..m, ..]);
        let f = e.iter().map(|v| v * v).sum::<f64>() + lambda * w.iter().map(|v| v * v).sum::<f64>();
        let mut g = xa.t().dot(&e) * 2.0;
        g.slice_mut(ndarray::s![..m, ..]).scaled_add(2.0 * lambda, &w);
        (f, g)
    };
    for _ in 0..iters {
        let (_, g) = value(&theta);
        if g.iter().all(|v| v.abs() < 1e-13) {
            break;
        }
        theta.scaled_add(-step, &g);
    }
    value(&theta).0
}

/// Same descent with no drag: plain ridge regression with an intercept.
pub fn ridge_oracle(x: ArrayView2<f64>, targets: ArrayView2<f64>, lambda: f64, iters: usize) -> f64 {
    let zeros = Array2::zeros(targets.dim());
    descent_oracle(x, targets, zeros.view(), lambda, iters)
}
