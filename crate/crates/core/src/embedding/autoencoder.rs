use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, Embedding, OutOfSample};
use crate::data::rng_for;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
}

impl Default for AeParams {
    fn default() -> Self {
        AeParams {
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.05,
            lambda: 1e-4,
        }
    }
}

/// Single-hidden-layer autoencoder with tied weights:
/// `h = σ(x·W + b1)`, `x̂ = h·Wᵀ + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub w: Array2<f64>,
    pub b1: Array1<f64>,
    pub b2: Array1<f64>,
}

impl AutoencoderModel {
    pub fn n_inputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.w.ncols()
    }

    fn hidden(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (x.dot(&self.w) + &self.b1).mapv(sigmoid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeGradients {
    pub w: Array2<f64>,
    pub b1: Array1<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub initial_loss: f64,
    /// Full-data loss after each epoch.
    pub losses: Vec<f64>,
    /// Hidden activations of the training rows after the last epoch.
    pub final_hidden: Array2<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Loss `1/(2N) Σ‖x̂ − x‖² + λ‖W‖²` on the rows of `x` and its gradient.
pub fn ae_loss_and_grad(model: &AutoencoderModel, x: ArrayView2<f64>, lambda: f64) -> (f64, AeGradients) {
    let n = x.nrows() as f64;
    let h = model.hidden(x);
    let out = h.dot(&model.w.t()) + &model.b2;
    let err = &out - &x;
    let loss = 0.5 * err.iter().map(|e| e * e).sum::<f64>() / n + lambda * model.w.iter().map(|w| w * w).sum::<f64>();

    let g_out = err / n;
    let g_b2 = g_out.sum_axis(Axis(0));
    let g_h = g_out.dot(&model.w);
    let g_z = &g_h * &h.mapv(|v| v * (1.0 - v));
    let g_b1 = g_z.sum_axis(Axis(0));
    let g_w = g_out.t().dot(&h) + x.t().dot(&g_z) + &model.w * (2.0 * lambda);
    (loss, AeGradients { w: g_w, b1: g_b1, b2: g_b2 })
}

/// Mini-batch gradient descent; batch order is drawn from `seed`.
pub fn train_autoencoder(
    x: ArrayView2<f64>,
    d: usize,
    params: &AeParams,
    seed: u64,
) -> Result<(AutoencoderModel, TrainingLog)> {
    let (n, m) = x.dim();
    if d == 0 {
        return Err(Error::InvalidParameter("autoencoder: hidden width must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::Data("autoencoder: no training rows".into()));
    }
    if params.batch_size == 0 || !(params.learning_rate > 0.0) || !(params.lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("autoencoder: bad hyperparameters {params:?}")));
    }
    let mut rng = rng_for(seed, 0xae);
    let bound = (6.0 / (m + d) as f64).sqrt();
    let mut model = AutoencoderModel {
        w: Array2::from_shape_fn((m, d), |_| rng.gen_range(-bound..bound)),
        b1: Array1::zeros(d),
        b2: Array1::zeros(m),
    };
    let initial_loss = ae_loss_and_grad(&model, x, params.lambda).0;
    let mut losses = Vec::with_capacity(params.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let xb = x.select(Axis(0), batch);
            let (_, g) = ae_loss_and_grad(&model, xb.view(), params.lambda);
            model.w.scaled_add(-params.learning_rate, &g.w);
            model.b1.scaled_add(-params.learning_rate, &g.b1);
            model.b2.scaled_add(-params.learning_rate, &g.b2);
        }
        let loss = ae_loss_and_grad(&model, x, params.lambda).0;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        log::debug!("autoencoder epoch {epoch}: loss {loss:.6}");
        losses.push(loss);
    }
    let final_hidden = model.hidden(x);
    Ok((model, TrainingLog { initial_loss, losses, final_hidden }))
}

/// Hidden-layer activations as embedding coordinates.
pub fn ae_encode(model: &AutoencoderModel, x: ArrayView2<f64>) -> Result<Embedding> {
    if x.ncols() != model.n_inputs() {
        return Err(Error::Dimension(format!(
            "autoencoder expects {} features, got {}",
            model.n_inputs(),
            x.ncols()
        )));
    }
    Embedding::new(model.hidden(x), Backend::Autoencoder, Some(OutOfSample::Encoder(model.clone())))
}
