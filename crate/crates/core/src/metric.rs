//! ε-dragging least-squares regression.
//!
//! Both solvers minimize
//!
//! ```text
//! ‖X·W + e·tᵀ − (Y + B ⊙ M)‖²_F + λ‖W‖²_F,   M ≥ 0
//! ```
//!
//! by alternating a closed-form ridge step over `(W, t)` with an elementwise
//! update of `M`. [`fit_dlsr_original`] uses one-hot class targets;
//! [`fit_structural`] uses the neighborhood targets from
//! [`crate::neighborhood::build_targets`].

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighborhood::TargetMatrices;
use crate::numeric::{backward_subst, cholesky, col_means, forward_subst};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricModel {
    pub w: Array2<f64>,
    pub t: Array1<f64>,
    pub lambda: f64,
    pub iterations_run: usize,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DragState {
    pub m: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lambda: 0.1,
            tol: 1e-6,
            max_iter: 50,
        }
    }
}

/// Ridge system `(XcᵀXc + λI)⁻¹Xcᵀ`, computed once and reused across alternations.
struct Ridge {
    mean: Array1<f64>,
    /// `m × n`
    proj: Array2<f64>,
}

impl Ridge {
    fn new(x: ArrayView2<f64>, lambda: f64) -> Result<Ridge> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        let m = x.ncols();
        let mean = col_means(x);
        let xc = &x - &mean;
        let mut a = xc.t().dot(&xc);
        for i in 0..m {
            a[[i, i]] += lambda;
        }
        let chol = cholesky(a.view())?;
        let mut proj = xc.t().to_owned();
        forward_subst(chol.view(), &mut proj);
        backward_subst(chol.view(), &mut proj);
        Ok(Ridge { mean, proj })
    }

    fn solve(&self, targets: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
        // Xcᵀ(T − T̄) = XcᵀT since Xc has zero column means
        let w = self.proj.dot(&targets);
        let t = col_means(targets) - self.mean.dot(&w);
        (w, t)
    }
}

/// Closed-form minimizer of `‖XW + e·tᵀ − T‖²_F + λ‖W‖²_F`.
pub fn solve_wt(x: ArrayView2<f64>, targets: ArrayView2<f64>, lambda: f64) -> Result<(Array2<f64>, Array1<f64>)> {
    if x.nrows() != targets.nrows() {
        return Err(Error::Dimension(format!(
            "{} feature rows vs {} target rows",
            x.nrows(),
            targets.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Data("no training rows".into()));
    }
    Ok(Ridge::new(x, lambda)?.solve(targets))
}

/// `M_ij = max(B_ij·R_ij, 0)`, the minimizer of `(R_ij − B_ij·M_ij)²` over `M_ij ≥ 0`.
pub fn update_drag(r: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<DragState> {
    if r.dim() != b.dim() {
        return Err(Error::Dimension(format!("residual {:?} vs directions {:?}", r.dim(), b.dim())));
    }
    let mut m = Array2::zeros(r.dim());
    ndarray::Zip::from(&mut m).and(r).and(b).for_each(|m, &r, &b| {
        if b != 0.0 {
            *m = (b * r).max(0.0);
        }
    });
    Ok(DragState { m })
}

fn affine(x: ArrayView2<f64>, w: ArrayView2<f64>, t: &Array1<f64>) -> Array2<f64> {
    x.dot(&w) + t
}

pub fn objective(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    t: &Array1<f64>,
    y: ArrayView2<f64>,
    b: ArrayView2<f64>,
    m: ArrayView2<f64>,
    lambda: f64,
) -> f64 {
    objective_at(affine(x, w, t).view(), w, y, b, m, lambda)
}

fn objective_at(pred: ArrayView2<f64>, w: ArrayView2<f64>, y: ArrayView2<f64>, b: ArrayView2<f64>, m: ArrayView2<f64>, lambda: f64) -> f64 {
    let mut fit = 0.0;
    ndarray::Zip::from(pred).and(y).and(b).and(m).for_each(|&p, &y, &b, &m| {
        let e = p - y - b * m;
        fit += e * e;
    });
    fit + lambda * w.iter().map(|v| v * v).sum::<f64>()
}

fn alternate(x: ArrayView2<f64>, y: &Array2<f64>, b: &Array2<f64>, opts: &FitOptions) -> Result<MetricModel> {
    if y.dim() != b.dim() || y.nrows() != x.nrows() {
        return Err(Error::Dimension(format!(
            "features {:?}, Y {:?}, B {:?}",
            x.dim(),
            y.dim(),
            b.dim()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Data("no training rows".into()));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    let ridge = Ridge::new(x, opts.lambda)?;
    let mut drag = DragState { m: Array2::zeros(y.dim()) };
    let mut trace: Vec<f64> = Vec::new();
    let mut w = Array2::zeros((x.ncols(), y.ncols()));
    let mut t = Array1::zeros(y.ncols());
    loop {
        let targets = y + &(b * &drag.m);
        let (w_next, t_next) = ridge.solve(targets.view());
        let pred = affine(x, w_next.view(), &t_next);
        let obj = objective_at(pred.view(), w_next.view(), y.view(), b.view(), drag.m.view(), opts.lambda);
        if !obj.is_finite() {
            return Err(Error::NonFinite(format!("objective at iteration {}", trace.len() + 1)));
        }
        if trace.last().is_some_and(|&prev| obj > prev) {
            // rounding noise at the optimum; keep the previous iterate
            break;
        }
        let converged = trace
            .last()
            .is_some_and(|&prev| prev - obj <= opts.tol * prev.abs().max(f64::MIN_POSITIVE));
        (w, t) = (w_next, t_next);
        trace.push(obj);
        if converged || trace.len() >= opts.max_iter {
            break;
        }
        let next = update_drag((pred - y).view(), b.view())?;
        if next.m == drag.m {
            break;
        }
        drag = next;
    }
    log::debug!("dlsr: {} iterations, objective {:.6e}", trace.len(), trace.last().copied().unwrap_or(0.0));
    Ok(MetricModel {
        w,
        t,
        lambda: opts.lambda,
        iterations_run: trace.len(),
        objective_trace: trace,
    })
}

/// Structural variant: one output per training sample, targets from the
/// balanced neighborhoods.
pub fn fit_structural(x: ArrayView2<f64>, targets: &TargetMatrices, opts: &FitOptions) -> Result<MetricModel> {
    if targets.n != x.nrows() {
        return Err(Error::Dimension(format!("targets for {} samples, {} rows", targets.n, x.nrows())));
    }
    alternate(x, &targets.dense_y(), &targets.dense_b(), opts)
}

/// Same alternation on explicit dense `Y` and `B`.
pub fn fit_dense(x: ArrayView2<f64>, y: ArrayView2<f64>, b: ArrayView2<f64>, opts: &FitOptions) -> Result<MetricModel> {
    alternate(x, &y.to_owned(), &b.to_owned(), opts)
}

/// Original multiclass formulation: one-hot targets, `B = +1` on the true
/// class and `-1` elsewhere.
pub fn fit_dlsr_original(x: ArrayView2<f64>, labels: &[usize], n_classes: usize, opts: &FitOptions) -> Result<MetricModel> {
    if n_classes < 2 {
        return Err(Error::InvalidParameter(format!("dlsr needs at least two classes, got {n_classes}")));
    }
    if labels.len() != x.nrows() {
        return Err(Error::Dimension(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    let n = labels.len();
    let mut y = Array2::zeros((n, n_classes));
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::InvalidParameter(format!("label {l} out of range for {n_classes} classes")));
        }
        y[[i, l]] = 1.0;
    }
    let b = y.mapv(|v| 2.0 * v - 1.0);
    alternate(x, &y, &b, opts)
}

/// `X·W + e·tᵀ`.
pub fn transform(model: &MetricModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != model.w.nrows() {
        return Err(Error::Dimension(format!(
            "model expects {} features, got {}",
            model.w.nrows(),
            x.ncols()
        )));
    }
    Ok(affine(x, model.w.view(), &model.t))
}

impl MetricModel {
    pub fn n_inputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.w.ncols()
    }

    /// Line-oriented text form with a `m p` shape header. Floats use the
    /// shortest representation that parses back to the same bits.
    pub fn to_text(&self) -> String {
        let join = |it: &mut dyn Iterator<Item = &f64>| it.map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.n_inputs(), self.n_outputs());
        let _ = writeln!(s, "lambda {:?}", self.lambda);
        let _ = writeln!(s, "iterations {}", self.iterations_run);
        for row in self.w.axis_iter(Axis(0)) {
            let _ = writeln!(s, "{}", join(&mut row.iter()));
        }
        let _ = writeln!(s, "{}", join(&mut self.t.iter()));
        let _ = writeln!(s, "trace {}", join(&mut self.objective_trace.iter()));
        s
    }

    pub fn from_text(text: &str) -> Result<MetricModel> {
        let bad = |what: &str| Error::Data(format!("metric model: {what}"));
        let floats = |line: &str| -> Result<Vec<f64>> {
            line.split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| bad(&format!("bad number '{v}'"))))
                .collect()
        };
        let mut lines = text.lines();
        let mut next = || lines.next().ok_or_else(|| bad("truncated"));
        let shape: Vec<usize> = next()?
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad("bad shape header")))
            .collect::<Result<_>>()?;
        let [m, p] = shape[..] else {
            return Err(bad("shape header must be 'm p'"));
        };
        let lambda = next()?
            .strip_prefix("lambda ")
            .ok_or_else(|| bad("missing lambda"))?
            .trim()
            .parse()
            .map_err(|_| bad("bad lambda"))?;
        let iterations_run = next()?
            .strip_prefix("iterations ")
            .ok_or_else(|| bad("missing iterations"))?
            .trim()
            .parse()
            .map_err(|_| bad("bad iteration count"))?;
        let mut w = Array2::zeros((m, p));
        for i in 0..m {
            let row = floats(next()?)?;
            if row.len() != p {
                return Err(bad(&format!("row {i} has {} values, expected {p}", row.len())));
            }
            w.row_mut(i).assign(&Array1::from(row));
        }
        let t = floats(next()?)?;
        if t.len() != p {
            return Err(bad("translation length does not match p"));
        }
        let trace_line = next()?;
        let trace = trace_line.strip_prefix("trace").ok_or_else(|| bad("missing trace"))?;
        Ok(MetricModel {
            w,
            t: Array1::from(t),
            lambda,
            iterations_run,
            objective_trace: floats(trace)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> (Array2<f64>, Array2<f64>) {
        let x = Array2::from_shape_fn((10, 3), |(i, j)| ((i * 5 + j * 7) % 11) as f64 / 5.0 - 1.0 + 0.01 * (i * j) as f64);
        let t = Array2::from_shape_fn((10, 4), |(i, j)| ((i + 3 * j) % 4) as f64 / 2.0);
        (x, t)
    }

    #[test]
    fn huge_lambda_gives_column_means() {
        let (x, t) = toy();
        let (w, tr) = solve_wt(x.view(), t.view(), 1e12).unwrap();
        assert!(w.iter().all(|v| v.abs() <= 1e-6));
        let means = t.mean_axis(Axis(0)).unwrap();
        assert!(tr.iter().zip(means.iter()).all(|(a, b)| (a - b).abs() < 1e-6));
        assert!(solve_wt(x.view(), t.view(), 0.0).is_err());
    }

    #[test]
    fn single_sample_fits_exactly() {
        let x = array![[1.0, 2.0]];
        let t = array![[3.0, -1.0, 0.5]];
        let (w, tr) = solve_wt(x.view(), t.view(), 1e-9).unwrap();
        let r = x.dot(&w) + &tr - &t;
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn ridge_gradient_vanishes() {
        let (x, t) = toy();
        let lambda = 0.1;
        let (w, tr) = solve_wt(x.view(), t.view(), lambda).unwrap();
        let r = x.dot(&w) + &tr - &t;
        let gw = x.t().dot(&r) * 2.0 + &w * (2.0 * lambda);
        let gt = r.sum_axis(Axis(0)) * 2.0;
        assert!(gw.iter().chain(gt.iter()).all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn drag_update_cases() {
        let r = array![[0.7, 0.7, 0.7, -0.3]];
        let b = array![[1.0, -1.0, 0.0, -1.0]];
        let d = update_drag(r.view(), b.view()).unwrap();
        assert_eq!(d.m, array![[0.7, 0.0, 0.0, 0.3]]);
    }

    #[test]
    fn objective_special_cases() {
        let y = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let x = Array2::zeros((3, 2));
        let z = Array2::zeros((3, 2));
        let w = Array2::zeros((2, 2));
        let t = Array1::zeros(2);
        assert_eq!(objective(x.view(), w.view(), &t, z.view(), z.view(), z.view(), 1.0), 0.0);
        assert_eq!(objective(x.view(), w.view(), &t, y.view(), z.view(), z.view(), 1.0), 4.0);
    }

    #[test]
    fn zero_directions_converge_immediately() {
        let (x, y) = toy();
        let b = Array2::zeros(y.dim());
        let model = fit_dense(x.view(), y.view(), b.view(), &FitOptions::default()).unwrap();
        assert_eq!(model.iterations_run, 1);
        let (w, _) = solve_wt(x.view(), y.view(), 0.1).unwrap();
        assert_eq!(model.w, w);
    }

    #[test]
    fn original_dlsr_separates_two_blobs() {
        let x = array![[0.0, 0.1], [0.2, -0.1], [-0.1, 0.0], [3.0, 3.1], [3.2, 2.9], [2.9, 3.0]];
        let labels = [0, 0, 0, 1, 1, 1];
        let model = fit_dlsr_original(x.view(), &labels, 2, &FitOptions::default()).unwrap();
        let out = transform(&model, x.view()).unwrap();
        for (i, row) in out.rows().into_iter().enumerate() {
            let pred = if row[1] > row[0] { 1 } else { 0 };
            assert_eq!(pred, labels[i]);
        }
        assert!(model.objective_trace.windows(2).all(|p| p[1] <= p[0] + 1e-9));
        assert!(fit_dlsr_original(x.view(), &[0; 6], 1, &FitOptions::default()).is_err());
    }

    #[test]
    fn transform_shapes() {
        let model = MetricModel {
            w: Array2::zeros((2, 3)),
            t: array![1.0, 2.0, 3.0],
            lambda: 0.1,
            iterations_run: 0,
            objective_trace: vec![],
        };
        let out = transform(&model, array![[5.0, 6.0], [7.0, 8.0]].view()).unwrap();
        assert!(out.rows().into_iter().all(|r| r.to_vec() == vec![1.0, 2.0, 3.0]));
        assert_eq!(transform(&model, Array2::zeros((0, 2)).view()).unwrap().nrows(), 0);
        assert!(transform(&model, Array2::zeros((1, 3)).view()).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let (x, y) = toy();
        let b = y.mapv(|v| if v > 0.4 { 1.0 } else { -1.0 });
        let model = fit_dense(x.view(), y.view(), b.view(), &FitOptions::default()).unwrap();
        let back = MetricModel::from_text(&model.to_text()).unwrap();
        assert_eq!(back, model);
        assert!(MetricModel::from_text("2 2\nlambda 0.1\n").is_err());
    }
}
