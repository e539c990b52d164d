//! False-alarm-likelihood estimator: feature/label preprocessing, a
//! 2-hidden-layer MLP (tanh / tanh / sigmoid), RMSProp training and model
//! persistence.

mod io;
mod net;
mod train;

pub use io::{load_dataset, load_model, save_dataset, save_model, Dataset, DatasetHeader};
pub use net::{
    backprop_grads, batch_loss, forward, forward_batch, mse_loss, rmsprop_step, Gradients,
    RmspropState,
};
pub use train::{train, TrainingConfig};

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sysmodel::{GroundTruth, Observation};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Provenance carried inside a model file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelMetadata {
    pub snr_db: f64,
    pub config_fingerprint: String,
    pub training_seed: u64,
}

/// Weights and biases of the estimator network.
///
/// Layer dims are (2M+N, 2(M+N), 2(M+N), N). Weight matrices are stored as
/// (fan_out, fan_in).
#[derive(Debug, Clone, PartialEq)]
pub struct FalNetParams {
    pub layer_dims: [usize; 4],
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub metadata: ModelMetadata,
}

impl FalNetParams {
    /// Zero-initialized network for the given dimensions.
    pub fn zeros(layer_dims: [usize; 4], metadata: ModelMetadata) -> Self {
        let weights = (0..3)
            .map(|l| Array2::zeros((layer_dims[l + 1], layer_dims[l])))
            .collect();
        let biases = (0..3).map(|l| Array1::zeros(layer_dims[l + 1])).collect();
        Self {
            layer_dims,
            weights,
            biases,
            metadata,
        }
    }

    /// The Table-II architecture for a given (M, N): (2M+N, 2(M+N), 2(M+N), N).
    pub fn dims_for(pilot_length: usize, n_devices: usize) -> [usize; 4] {
        let hidden = 2 * (pilot_length + n_devices);
        [2 * pilot_length + n_devices, hidden, hidden, n_devices]
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layer_dims[3]
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != 3 || self.biases.len() != 3 {
            return Err(Error::ModelFormat("expected exactly 3 layers".into()));
        }
        for l in 0..3 {
            let expect = (self.layer_dims[l + 1], self.layer_dims[l]);
            if self.weights[l].dim() != expect {
                return Err(Error::ModelFormat(format!(
                    "layer {l} weight shape {:?} != {:?}",
                    self.weights[l].dim(),
                    expect
                )));
            }
            if self.biases[l].len() != self.layer_dims[l + 1] {
                return Err(Error::ModelFormat(format!(
                    "layer {l} bias length {} != {}",
                    self.biases[l].len(),
                    self.layer_dims[l + 1]
                )));
            }
        }
        Ok(())
    }
}

/// One (features, label) pair.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub features: Array1<f64>,
    pub label: Array1<f64>,
}

/// Round(x): nearest integer, half away from zero.
pub(crate) fn round_half_away(x: f64) -> usize {
    x.round() as usize
}

/// Hard activity decision: exactly Round(rho N) ones at the largest |x_hat_n|,
/// ties broken by lowest index.
pub fn activity_estimate(x_hat: &Array1<Complex64>, activity_prob: f64) -> Vec<u8> {
    let n = x_hat.len();
    let k = round_half_away(activity_prob * n as f64).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort on descending magnitude keeps the lowest index first on ties
    order.sort_by(|&a, &b| x_hat[b].norm_sqr().total_cmp(&x_hat[a].norm_sqr()));
    let mut a = vec![0u8; n];
    for &i in order.iter().take(k) {
        a[i] = 1;
    }
    a
}

/// Network input: [normalized Re(y); normalized Im(y); a_hat], length 2M+N.
///
/// The 2M real scalars of y are shifted and scaled jointly to zero mean and
/// unit variance per sample; an all-equal y normalizes to zeros.
pub fn preprocess_features(
    y: &Observation,
    x_hat1: &Array1<Complex64>,
    activity_prob: f64,
) -> Array1<f64> {
    let m = y.received.len();
    let mut reals = Vec::with_capacity(2 * m);
    reals.extend(y.received.iter().map(|z| z.re));
    reals.extend(y.received.iter().map(|z| z.im));
    let mean = reals.iter().sum::<f64>() / reals.len() as f64;
    let var = reals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / reals.len() as f64;
    let mut features = Vec::with_capacity(2 * m + x_hat1.len());
    if var > 0.0 {
        let std = var.sqrt();
        features.extend(reals.iter().map(|v| (v - mean) / std));
    } else {
        features.extend(std::iter::repeat(0.0).take(2 * m));
    }
    let a_hat = activity_estimate(x_hat1, activity_prob);
    features.extend(a_hat.iter().map(|&a| a as f64));
    Array1::from_vec(features)
}

/// Training label e_FAL: min-max normalized B = (~a) .* |x_hat1 - x|^2.
///
/// An all-equal B (e.g. every device active) yields the all-zero label.
pub fn make_label(x_hat1: &Array1<Complex64>, truth: &GroundTruth) -> Array1<f64> {
    let b: Vec<f64> = truth
        .activity
        .iter()
        .zip(x_hat1.iter().zip(truth.signal.iter()))
        .map(|(&a, (xh, x))| {
            if a == 1 {
                0.0
            } else {
                (xh - x).norm_sqr()
            }
        })
        .collect();
    let min = b.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        Array1::from_iter(b.iter().map(|v| (v - min) / (max - min)))
    } else {
        Array1::zeros(b.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn activity_estimate_top_k() {
        let x = array![c(0.9, 0.0), c(0.1, 0.0), c(0.5, 0.0)];
        assert_eq!(activity_estimate(&x, 1.0 / 3.0), vec![1, 0, 0]);
        assert_eq!(activity_estimate(&x, 0.0), vec![0, 0, 0]);
        // tie broken by lowest index
        let x = array![c(0.5, 0.0), c(0.5, 0.0), c(0.1, 0.0)];
        assert_eq!(activity_estimate(&x, 1.0 / 3.0), vec![1, 0, 0]);
    }

    #[test]
    fn activity_estimate_always_round_rho_n_ones() {
        let x = array![c(0.2, 0.1), c(0.2, 0.1), c(0.2, 0.1), c(0.2, 0.1), c(0.2, 0.1)];
        for (rho, expect) in [(0.1, 1usize), (0.3, 2), (0.5, 3), (0.9, 5)] {
            let ones: usize = activity_estimate(&x, rho)
                .iter()
                .map(|&a| a as usize)
                .sum();
            assert_eq!(ones, expect, "rho = {rho}");
        }
    }

    #[test]
    fn features_normalized() {
        let y = Observation {
            received: array![c(0.3, -0.2), c(-1.0, 0.7), c(0.1, 0.4)],
            noise_var: 1e-4,
        };
        let x = array![c(1.0, 0.0), c(0.0, 0.0)];
        let f = preprocess_features(&y, &x, 0.5);
        assert_eq!(f.len(), 8);
        let head = f.slice(ndarray::s![..6]);
        let mean = head.sum() / 6.0;
        let var = head.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        assert_eq!(f[6], 1.0);
        assert_eq!(f[7], 0.0);
    }

    #[test]
    fn features_zero_observation() {
        let y = Observation {
            received: Array1::zeros(3),
            noise_var: 0.0,
        };
        let x = array![c(1.0, 0.0), c(2.0, 0.0)];
        let f = preprocess_features(&y, &x, 0.5);
        assert!(f.slice(ndarray::s![..6]).iter().all(|&v| v == 0.0));
        assert_eq!(f[6], 0.0);
        assert_eq!(f[7], 1.0);
    }

    #[test]
    fn label_hand_example() {
        let truth = GroundTruth {
            activity: vec![1, 0, 0],
            fading: array![c(0.4, 0.0), c(1.0, 0.0), c(1.0, 0.0)],
            signal: array![c(0.4, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            n_active: 1,
        };
        let x_hat = array![c(0.4, 0.0), c(0.3, 0.0), c(0.6, 0.0)];
        let e = make_label(&x_hat, &truth);
        assert!((e[0] - 0.0).abs() < 1e-15);
        assert!((e[1] - 0.25).abs() < 1e-12);
        assert!((e[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn label_degenerate_all_active() {
        let truth = GroundTruth {
            activity: vec![1, 1],
            fading: array![c(1.0, 0.0), c(2.0, 0.0)],
            signal: array![c(1.0, 0.0), c(2.0, 0.0)],
            n_active: 2,
        };
        let x_hat = array![c(0.9, 0.0), c(2.2, 0.0)];
        let e = make_label(&x_hat, &truth);
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn label_scale_invariant() {
        let truth = GroundTruth {
            activity: vec![0, 0, 1, 0],
            fading: array![c(1.0, 0.0), c(1.0, 0.0), c(0.5, 0.5), c(1.0, 0.0)],
            signal: array![c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.5), c(0.0, 0.0)],
            n_active: 1,
        };
        let x1 = array![c(0.1, 0.2), c(-0.4, 0.0), c(0.5, 0.5), c(0.05, -0.3)];
        let scale = 7.3f64.sqrt();
        let x_scaled = Array1::from_iter(
            x1.iter()
                .zip(truth.signal.iter())
                .map(|(xh, x)| x + (xh - x) * scale),
        );
        let e1 = make_label(&x1, &truth);
        let e2 = make_label(&x_scaled, &truth);
        for (a, b) in e1.iter().zip(e2.iter()) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON, "{a} vs {b}");
        }
        // active device has label exactly 0
        assert_eq!(e1[2], 0.0);
        // min-max range covered
        assert_eq!(e1.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        assert_eq!(e1.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
    }
}
