//! AMP recursion with the Bernoulli-Gaussian MMSE denoiser.
//!
//! The iterate is (x_hat, v, tau^2). Each step forms the matched-filter input
//! r = P^H v + x_hat, denoises it element-wise, optionally zeroes one
//! constrained coordinate, and updates the residual with the Onsager
//! correction (N/M) * v * <eta'>. tau^2 is tracked empirically as ||v||^2 / M.

use ndarray::Array1;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{matvec, matvec_hermitian, norm_sqr};
use crate::sysmodel::{ExperimentConfig, Observation, PilotMatrix};

/// Scalar denoiser parameters for one iteration.
#[derive(Debug, Clone, Copy)]
pub struct DenoiserParams {
    pub activity_prob: f64,
    pub channel_var: f64,
    pub tau_sq: f64,
}

impl DenoiserParams {
    pub fn new(activity_prob: f64, channel_var: f64, tau_sq: f64) -> Self {
        Self {
            activity_prob,
            channel_var,
            // tau^2 must stay positive; a perfectly explained observation
            // (zero residual) would otherwise make beta/gamma infinite and
            // produce NaN through inf * 0. The floor keeps them finite while
            // behaving exactly like the tau -> 0 limit.
            tau_sq: tau_sq.max(1e-30),
        }
    }

    /// alpha = sigma_h^2 / (sigma_h^2 + tau^2)
    pub fn alpha(&self) -> f64 {
        self.channel_var / (self.channel_var + self.tau_sq)
    }

    /// beta = (sigma_h^2 + tau^2) / tau^2
    pub fn beta(&self) -> f64 {
        (self.channel_var + self.tau_sq) / self.tau_sq
    }

    /// gamma = tau^-2 - (sigma_h^2 + tau^2)^-1
    pub fn gamma(&self) -> f64 {
        1.0 / self.tau_sq - 1.0 / (self.channel_var + self.tau_sq)
    }

    /// ((1 - rho) / rho) * beta
    fn prior_ratio(&self) -> f64 {
        (1.0 - self.activity_prob) / self.activity_prob * self.beta()
    }
}

/// MMSE denoiser eta(r) = alpha r / (1 + ((1-rho)/rho) beta exp(-gamma |r|^2)).
///
/// exp underflow saturates the denominator to 1, which is the correct
/// large-|r| limit.
pub fn mmse_denoise(r: Complex64, params: &DenoiserParams) -> Complex64 {
    let e = (-params.gamma() * r.norm_sqr()).exp();
    let denom = 1.0 + params.prior_ratio() * e;
    params.alpha() * r / denom
}

/// Wirtinger derivative of the denoiser with respect to r; real-valued.
///
/// d eta / d r = alpha/D + alpha gamma |r|^2 c exp(-gamma |r|^2) / D^2
/// with c = ((1-rho)/rho) beta and D = 1 + c exp(-gamma |r|^2).
pub fn mmse_denoise_deriv(r: Complex64, params: &DenoiserParams) -> f64 {
    let alpha = params.alpha();
    let gamma = params.gamma();
    let c = params.prior_ratio();
    let mag_sq = r.norm_sqr();
    let e = (-gamma * mag_sq).exp();
    let ce = c * e;
    let d = 1.0 + ce;
    // when exp underflows the second term vanishes; skip it so an extreme
    // gamma * |r|^2 cannot turn it into inf * 0
    let bump = if ce == 0.0 {
        0.0
    } else {
        alpha * gamma * mag_sq * ce / (d * d)
    };
    alpha / d + bump
}

/// One AMP iterate.
#[derive(Debug, Clone)]
pub struct AmpState {
    pub estimate: Array1<Complex64>,
    pub residual: Array1<Complex64>,
    pub tau_sq: f64,
    pub iteration: usize,
    pub constraint: Option<usize>,
}

impl AmpState {
    /// Iteration-0 state: x_hat = 0, v = y, tau_0^2 = sigma_z^2 + (N/M) rho sigma_h^2.
    pub fn initial(y: &Observation, cfg: &ExperimentConfig, constraint: Option<usize>) -> Self {
        let n = cfg.n_devices;
        let m = cfg.pilot_length;
        let tau_sq = cfg.noise_var() + (n as f64 / m as f64) * cfg.activity_prob * cfg.channel_var();
        AmpState {
            estimate: Array1::zeros(n),
            residual: y.received.clone(),
            tau_sq,
            iteration: 0,
            constraint,
        }
    }
}

/// tau^2 estimate (1/M) ||v||^2.
pub fn empirical_tau(v: &Array1<Complex64>) -> f64 {
    norm_sqr(v) / v.len() as f64
}

/// Advances the AMP recursion by one iteration.
///
/// When the state carries a constrained index s, x_hat_s is zeroed right after
/// the denoising update and before the residual update, and that coordinate
/// contributes 0 to the Onsager average (the divisor stays N).
pub fn amp_step(
    state: &AmpState,
    pilots: &PilotMatrix,
    y: &Observation,
    activity_prob: f64,
    channel_var: f64,
) -> Result<AmpState> {
    let m = pilots.pilot_length();
    let n = pilots.n_devices();
    if state.estimate.len() != n || state.residual.len() != m || y.received.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "state/pilot/observation shapes disagree (N={n}, M={m}, |x|={}, |v|={}, |y|={})",
            state.estimate.len(),
            state.residual.len(),
            y.received.len()
        )));
    }
    if let Some(s) = state.constraint {
        if s >= n {
            return Err(Error::InvalidInput(format!(
                "constraint index {s} out of range for N={n}"
            )));
        }
    }
    let params = DenoiserParams::new(activity_prob, channel_var, state.tau_sq);

    let mut r = matvec_hermitian(&pilots.entries, &state.residual);
    r += &state.estimate;

    let mut estimate = Array1::zeros(n);
    let mut deriv_sum = 0.0;
    for (i, (&ri, out)) in r.iter().zip(estimate.iter_mut()).enumerate() {
        if state.constraint == Some(i) {
            continue; // constrained coordinate stays 0 and adds 0 to <eta'>
        }
        *out = mmse_denoise(ri, &params);
        deriv_sum += mmse_denoise_deriv(ri, &params);
    }
    let onsager = (n as f64 / m as f64) * (deriv_sum / n as f64);

    let px = matvec(&pilots.entries, &estimate);
    let mut residual = Array1::zeros(m);
    for i in 0..m {
        residual[i] = y.received[i] - px[i] + onsager * state.residual[i];
    }
    let tau_sq = empirical_tau(&residual);

    Ok(AmpState {
        estimate,
        residual,
        tau_sq,
        iteration: state.iteration + 1,
        constraint: state.constraint,
    })
}

/// Runs `iterations` AMP steps from the standard initialization and returns
/// the states after each step (index t-1 holds the t-th iterate).
pub fn run_amp(
    pilots: &PilotMatrix,
    y: &Observation,
    cfg: &ExperimentConfig,
    iterations: usize,
    constraint: Option<usize>,
) -> Result<Vec<AmpState>> {
    if iterations == 0 {
        return Err(Error::InvalidInput("iterations must be >= 1".into()));
    }
    let mut state = AmpState::initial(y, cfg, constraint);
    let mut trajectory = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        state = amp_step(&state, pilots, y, cfg.activity_prob, cfg.channel_var())?;
        trajectory.push(state.clone());
    }
    Ok(trajectory)
}

/// State-evolution prediction of the tau_t^2 sequence.
///
/// The expectation E|eta(x + tau w) - x|^2 is evaluated by Monte-Carlo over
/// the prior x ~ rho CN(0, sigma_h^2) + (1-rho) delta_0, with w circular unit
/// Gaussian. Returns iterations + 1 values starting at tau_0^2.
pub fn state_evolution_predict(
    cfg: &ExperimentConfig,
    iterations: usize,
    samples: usize,
) -> Vec<f64> {
    let n_over_m = cfg.n_devices as f64 / cfg.pilot_length as f64;
    let noise_var = cfg.noise_var();
    let channel_var = cfg.channel_var();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5e_5e_5e_5e);
    let h_comp = Normal::new(0.0, cfg.channel_std / 2f64.sqrt()).unwrap();
    let unit_comp = Normal::new(0.0, 1.0 / 2f64.sqrt()).unwrap();

    let mut taus = Vec::with_capacity(iterations + 1);
    let mut tau_sq = noise_var + n_over_m * cfg.activity_prob * channel_var;
    taus.push(tau_sq);
    for _ in 0..iterations {
        let params = DenoiserParams::new(cfg.activity_prob, channel_var, tau_sq);
        let tau = tau_sq.sqrt();
        let mut mse_sum = 0.0;
        for _ in 0..samples {
            let x = if rng.gen::<f64>() < cfg.activity_prob {
                Complex64::new(h_comp.sample(&mut rng), h_comp.sample(&mut rng))
            } else {
                Complex64::new(0.0, 0.0)
            };
            let w = Complex64::new(unit_comp.sample(&mut rng), unit_comp.sample(&mut rng));
            let r = x + tau * w;
            mse_sum += (mmse_denoise(r, &params) - x).norm_sqr();
        }
        tau_sq = noise_var + n_over_m * mse_sum / samples as f64;
        taus.push(tau_sq);
    }
    taus
}
