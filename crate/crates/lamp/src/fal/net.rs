//! Forward pass, exact gradients and the RMSProp update for the estimator MLP.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

use super::FalNetParams;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Single-sample forward pass:
/// sigmoid(W3 tanh(W2 tanh(W1 f + b1) + b2) + b3).
pub fn forward(params: &FalNetParams, features: &Array1<f64>) -> Result<Array1<f64>> {
    if features.len() != params.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "feature length {} != input dim {}",
            features.len(),
            params.input_dim()
        )));
    }
    let a1 = (params.weights[0].dot(features) + &params.biases[0]).mapv(f64::tanh);
    let a2 = (params.weights[1].dot(&a1) + &params.biases[1]).mapv(f64::tanh);
    Ok((params.weights[2].dot(&a2) + &params.biases[2]).mapv(sigmoid))
}

/// Batched forward pass over rows of `x` (batch x input_dim); returns the
/// hidden activations and the output.
pub fn forward_batch(
    params: &FalNetParams,
    x: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    if x.ncols() != params.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "feature width {} != input dim {}",
            x.ncols(),
            params.input_dim()
        )));
    }
    let a1 = (x.dot(&params.weights[0].t()) + &params.biases[0]).mapv(f64::tanh);
    let a2 = (a1.dot(&params.weights[1].t()) + &params.biases[1]).mapv(f64::tanh);
    let out = (a2.dot(&params.weights[2].t()) + &params.biases[2]).mapv(sigmoid);
    Ok((a1, a2, out))
}

/// Mean squared error (1/N) sum (e_n - e_hat_n)^2.
pub fn mse_loss(estimate: &Array1<f64>, label: &Array1<f64>) -> Result<f64> {
    if estimate.len() != label.len() {
        return Err(Error::DimensionMismatch(format!(
            "loss operands {} vs {}",
            estimate.len(),
            label.len()
        )));
    }
    let n = estimate.len() as f64;
    Ok(estimate
        .iter()
        .zip(label.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Batch-mean loss over rows.
pub fn batch_loss(params: &FalNetParams, x: &Array2<f64>, labels: &Array2<f64>) -> Result<f64> {
    let (_, _, out) = forward_batch(params, x)?;
    let n = labels.ncols() as f64;
    let b = labels.nrows() as f64;
    Ok((&out - labels).mapv(|d| d * d).sum() / (n * b))
}

/// Gradients of the batch-mean loss for every weight and bias.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Exact gradients of the batch-mean of the per-sample MSE loss.
pub fn backprop_grads(
    params: &FalNetParams,
    x: &Array2<f64>,
    labels: &Array2<f64>,
) -> Result<Gradients> {
    if x.nrows() == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if labels.nrows() != x.nrows() || labels.ncols() != params.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "labels {:?} vs batch {} x {}",
            labels.dim(),
            x.nrows(),
            params.output_dim()
        )));
    }
    let (a1, a2, out) = forward_batch(params, x)?;
    let scale = 2.0 / (x.nrows() as f64 * params.output_dim() as f64);
    // dL/dz3 through the sigmoid
    let g3 = (&out - labels) * &out.mapv(|o| o * (1.0 - o)) * scale;
    let dw3 = g3.t().dot(&a2);
    let db3 = g3.sum_axis(Axis(0));
    let g2 = g3.dot(&params.weights[2]) * &a2.mapv(|a| 1.0 - a * a);
    let dw2 = g2.t().dot(&a1);
    let db2 = g2.sum_axis(Axis(0));
    let g1 = g2.dot(&params.weights[1]) * &a1.mapv(|a| 1.0 - a * a);
    let dw1 = g1.t().dot(x);
    let db1 = g1.sum_axis(Axis(0));
    Ok(Gradients {
        weights: vec![dw1, dw2, dw3],
        biases: vec![db1, db2, db3],
    })
}

/// Per-parameter squared-gradient accumulators.
#[derive(Debug, Clone)]
pub struct RmspropState {
    pub acc_weights: Vec<Array2<f64>>,
    pub acc_biases: Vec<Array1<f64>>,
}

impl RmspropState {
    pub fn new(params: &FalNetParams) -> Self {
        Self {
            acc_weights: params.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            acc_biases: params.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }
}

pub const RMSPROP_DECAY: f64 = 0.9;
pub const RMSPROP_EPSILON: f64 = 1e-8;

/// acc <- 0.9 acc + 0.1 g^2; theta <- theta - lr g / (sqrt(acc) + 1e-8).
pub fn rmsprop_step(
    params: &mut FalNetParams,
    grads: &Gradients,
    state: &mut RmspropState,
    learning_rate: f64,
) {
    for l in 0..3 {
        ndarray::Zip::from(&mut state.acc_weights[l])
            .and(&grads.weights[l])
            .for_each(|acc, &g| *acc = RMSPROP_DECAY * *acc + (1.0 - RMSPROP_DECAY) * g * g);
        ndarray::Zip::from(&mut params.weights[l])
            .and(&grads.weights[l])
            .and(&state.acc_weights[l])
            .for_each(|w, &g, &acc| *w -= learning_rate * g / (acc.sqrt() + RMSPROP_EPSILON));
        ndarray::Zip::from(&mut state.acc_biases[l])
            .and(&grads.biases[l])
            .for_each(|acc, &g| *acc = RMSPROP_DECAY * *acc + (1.0 - RMSPROP_DECAY) * g * g);
        ndarray::Zip::from(&mut params.biases[l])
            .and(&grads.biases[l])
            .and(&state.acc_biases[l])
            .for_each(|b, &g, &acc| *b -= learning_rate * g / (acc.sqrt() + RMSPROP_EPSILON));
    }
}
