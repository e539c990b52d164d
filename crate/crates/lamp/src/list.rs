//! Two-round list AMP: pick a suspicious device after the first round, rerun
//! the recursion with that coordinate forced to zero, and keep the candidate
//! with the smaller residual.

use ndarray::Array1;
use num_complex::Complex64;

use crate::amp::run_amp;
use crate::error::{Error, Result};
use crate::fal::{forward, preprocess_features, FalNetParams};
use crate::linalg::{matvec, norm_sqr};
use crate::sysmodel::{ExperimentConfig, GroundTruth, Observation, PilotMatrix};

/// Output of one list-AMP run.
#[derive(Debug, Clone)]
pub struct ListResult {
    pub first_estimate: Array1<Complex64>,
    pub second_estimate: Array1<Complex64>,
    pub suspicious_index: usize,
    pub final_estimate: Array1<Complex64>,
    /// 1 = unconstrained round, 2 = constrained round.
    pub chosen_branch: u8,
    /// Set when every device was active so B was identically zero.
    pub degenerate_selection: bool,
}

/// Genie selector: argmax of B = (~a) .* |x_hat1 - x|^2, ties to lowest index.
pub fn genie_select(x_hat1: &Array1<Complex64>, truth: &GroundTruth) -> Result<(usize, bool)> {
    if x_hat1.len() != truth.signal.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate length {} vs truth {}",
            x_hat1.len(),
            truth.signal.len()
        )));
    }
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (i, (&a, (xh, x))) in truth
        .activity
        .iter()
        .zip(x_hat1.iter().zip(truth.signal.iter()))
        .enumerate()
    {
        let b = if a == 1 { 0.0 } else { (xh - x).norm_sqr() };
        if b > best_val {
            best_val = b;
            best = i;
        }
    }
    Ok((best, best_val == 0.0))
}

/// DNN selector: argmax of the estimated false-alarm likelihood.
pub fn dnn_select(
    net: &FalNetParams,
    y: &Observation,
    x_hat1: &Array1<Complex64>,
    activity_prob: f64,
) -> Result<usize> {
    let features = preprocess_features(y, x_hat1, activity_prob);
    let scores = forward(net, &features)?;
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in scores.iter().enumerate() {
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    Ok(best)
}

/// Least-residual selector over candidate estimates; ties go to the earliest
/// branch. Returns the winning candidate index (0-based).
pub fn lmse_select(
    y: &Observation,
    pilots: &PilotMatrix,
    candidates: &[&Array1<Complex64>],
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidates".into()));
    }
    let mut best = 0usize;
    let mut best_res = f64::INFINITY;
    for (i, cand) in candidates.iter().enumerate() {
        let px = matvec(&pilots.entries, cand);
        let res = norm_sqr(&(&y.received - &px));
        if res < best_res {
            best_res = res;
            best = i;
        }
    }
    Ok(best)
}

fn finish_two_branch(
    pilots: &PilotMatrix,
    y: &Observation,
    first: Array1<Complex64>,
    second: Array1<Complex64>,
    suspicious_index: usize,
    degenerate_selection: bool,
) -> Result<ListResult> {
    let winner = lmse_select(y, pilots, &[&first, &second])?;
    let final_estimate = if winner == 0 {
        first.clone()
    } else {
        second.clone()
    };
    Ok(ListResult {
        first_estimate: first,
        second_estimate: second,
        suspicious_index,
        final_estimate,
        chosen_branch: winner as u8 + 1,
        degenerate_selection,
    })
}

/// Genie-aided list AMP: both rounds run `iterations` steps; the second round
/// restarts from (x_hat = 0, v = y) with the genie-selected coordinate zeroed.
pub fn run_ga_lamp(
    pilots: &PilotMatrix,
    y: &Observation,
    truth: &GroundTruth,
    cfg: &ExperimentConfig,
    iterations: usize,
) -> Result<ListResult> {
    let round1 = run_amp(pilots, y, cfg, iterations, None)?;
    let first = round1.last().unwrap().estimate.clone();
    let (s, degenerate) = genie_select(&first, truth)?;
    let round2 = run_amp(pilots, y, cfg, iterations, Some(s))?;
    let second = round2.last().unwrap().estimate.clone();
    finish_two_branch(pilots, y, first, second, s, degenerate)
}

/// DNN-assisted list AMP (Algorithm steps 1-5).
pub fn run_dl_lamp(
    net: &FalNetParams,
    pilots: &PilotMatrix,
    y: &Observation,
    cfg: &ExperimentConfig,
    iterations: usize,
) -> Result<ListResult> {
    let expect = FalNetParams::dims_for(cfg.pilot_length, cfg.n_devices);
    if net.layer_dims != expect {
        return Err(Error::InvalidInput(format!(
            "model dims {:?} do not match configuration dims {:?}",
            net.layer_dims, expect
        )));
    }
    let round1 = run_amp(pilots, y, cfg, iterations, None)?;
    let first = round1.last().unwrap().estimate.clone();
    let s = dnn_select(net, y, &first, cfg.activity_prob)?;
    let round2 = run_amp(pilots, y, cfg, iterations, Some(s))?;
    let second = round2.last().unwrap().estimate.clone();
    finish_two_branch(pilots, y, first, second, s, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fal::ModelMetadata;
    use crate::sysmodel::{gen_ground_truth, gen_pilot_matrix, synthesize_observation};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn genie_select_hand_example() {
        let truth = GroundTruth {
            activity: vec![1, 0, 0],
            fading: array![c(0.4, 0.0), c(1.0, 0.0), c(1.0, 0.0)],
            signal: array![c(0.4, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            n_active: 1,
        };
        let x_hat = array![c(0.0, 0.0), c(0.3, 0.0), c(0.6, 0.0)];
        let (s, degenerate) = genie_select(&x_hat, &truth).unwrap();
        assert_eq!(s, 2);
        assert!(!degenerate);
    }

    #[test]
    fn genie_select_degenerate_zero_error() {
        let truth = GroundTruth {
            activity: vec![0, 1],
            fading: array![c(1.0, 0.0), c(0.5, 0.5)],
            signal: array![c(0.0, 0.0), c(0.5, 0.5)],
            n_active: 1,
        };
        let (s, degenerate) = genie_select(&truth.signal.clone(), &truth).unwrap();
        assert_eq!(s, 0);
        assert!(degenerate);
    }

    #[test]
    fn dnn_select_zero_net_ties_to_first() {
        let net = FalNetParams::zeros(
            FalNetParams::dims_for(2, 3),
            ModelMetadata {
                snr_db: 40.0,
                config_fingerprint: "t".into(),
                training_seed: 0,
            },
        );
        let y = Observation {
            received: array![c(0.1, 0.2), c(-0.3, 0.4)],
            noise_var: 1e-4,
        };
        let x_hat = array![c(0.5, 0.0), c(0.0, 0.0), c(0.2, 0.0)];
        assert_eq!(dnn_select(&net, &y, &x_hat, 1.0 / 3.0).unwrap(), 0);
    }

    #[test]
    fn dnn_select_biased_output() {
        let mut net = FalNetParams::zeros(
            FalNetParams::dims_for(2, 3),
            ModelMetadata {
                snr_db: 40.0,
                config_fingerprint: "t".into(),
                training_seed: 0,
            },
        );
        net.biases[2][1] = 5.0;
        let y = Observation {
            received: array![c(0.1, 0.2), c(-0.3, 0.4)],
            noise_var: 1e-4,
        };
        let x_hat = array![c(0.5, 0.0), c(0.0, 0.0), c(0.2, 0.0)];
        assert_eq!(dnn_select(&net, &y, &x_hat, 1.0 / 3.0).unwrap(), 1);
    }

    #[test]
    fn lmse_select_prefers_zero_residual() {
        let pilots = PilotMatrix {
            entries: ndarray::Array2::from_shape_fn((2, 2), |(i, j)| {
                c(if i == j { 1.0 } else { 0.0 }, 0.0)
            }),
            quantized: false,
            delta: None,
        };
        let y = Observation {
            received: array![c(1.0, 0.0), c(0.0, 0.0)],
            noise_var: 0.0,
        };
        let exact = array![c(1.0, 0.0), c(0.0, 0.0)];
        let off = array![c(0.5, 0.0), c(0.0, 0.0)];
        assert_eq!(lmse_select(&y, &pilots, &[&off, &exact]).unwrap(), 1);
        // identical candidates: branch 1
        assert_eq!(lmse_select(&y, &pilots, &[&exact, &exact]).unwrap(), 0);
    }

    fn table1_instance(seed: u64) -> (PilotMatrix, GroundTruth, Observation, ExperimentConfig) {
        let mut cfg = ExperimentConfig::new(150, 30, 0.1);
        cfg.quant_bits = Some(3);
        cfg.snr_db = 40.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = gen_pilot_matrix(&cfg, &mut rng);
        let t = gen_ground_truth(&cfg, &mut rng);
        let y = synthesize_observation(&p, &t, cfg.noise_var(), &mut rng).unwrap();
        (p, t, y, cfg)
    }

    #[test]
    fn ga_lamp_invariants() {
        for seed in 0..5 {
            let (p, t, y, cfg) = table1_instance(seed);
            let res = run_ga_lamp(&p, &y, &t, &cfg, 10).unwrap();
            assert_eq!(res.second_estimate[res.suspicious_index], c(0.0, 0.0));
            let r1 = norm_sqr(&(&y.received - &matvec(&p.entries, &res.first_estimate)));
            let r2 = norm_sqr(&(&y.received - &matvec(&p.entries, &res.second_estimate)));
            let rf = norm_sqr(&(&y.received - &matvec(&p.entries, &res.final_estimate)));
            assert_eq!(rf, r1.min(r2));
            // the winner is one of the two candidates, bit for bit
            let matches_first = res.final_estimate == res.first_estimate;
            let matches_second = res.final_estimate == res.second_estimate;
            assert!(matches_first || matches_second);
        }
    }

    #[test]
    fn list_round1_identical_to_plain_amp() {
        let (p, t, y, cfg) = table1_instance(42);
        let plain = run_amp(&p, &y, &cfg, 10, None).unwrap();
        let res = run_ga_lamp(&p, &y, &t, &cfg, 10).unwrap();
        assert_eq!(res.first_estimate, plain.last().unwrap().estimate);
    }
}
