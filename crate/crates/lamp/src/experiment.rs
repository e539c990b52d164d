//! Experiment driver: seeded Monte-Carlo trials, dataset generation, ROC
//! sweeps and CSV emission.
//!
//! Trials run in parallel but each one derives its RNG from (master seed,
//! trial index), and aggregation walks the trials in index order, so results
//! do not depend on scheduling.

use std::collections::HashMap;
use std::io::Write as IoWrite;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::amp::{run_amp, AmpState};
use crate::error::{Error, Result};
use crate::fal::{make_label, preprocess_features, Dataset, DatasetHeader, FalNetParams};
use crate::list::{dnn_select, genie_select, lmse_select};
use crate::metrics::{nmse_linear, roc_sweep, RocPoint};
use crate::sysmodel::{
    gen_ground_truth, gen_pilot_matrix, synthesize_observation, ExperimentConfig, GroundTruth,
    Observation, PilotMatrix, PilotMode,
};

/// Which estimator the harness evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    AmpMmse,
    GaLamp,
    DlLamp,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::AmpMmse => "amp-mmse",
            Algorithm::GaLamp => "ga-lamp",
            Algorithm::DlLamp => "dl-lamp",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amp-mmse" => Ok(Algorithm::AmpMmse),
            "ga-lamp" => Ok(Algorithm::GaLamp),
            "dl-lamp" => Ok(Algorithm::DlLamp),
            other => Err(Error::Config(format!(
                "unknown algorithm '{other}' (expected amp-mmse, ga-lamp or dl-lamp)"
            ))),
        }
    }
}

/// Everything one eval/roc invocation needs.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub config: ExperimentConfig,
    pub algorithm: Algorithm,
    /// Iteration counts to report, e.g. [3, 5, 10, 20].
    pub iterations: Vec<usize>,
    pub trials: u64,
    pub model_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    /// Replace the learned selector by the genie (dl-lamp only; must then
    /// reproduce ga-lamp exactly).
    pub genie: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be >= 1".into()));
        }
        if self.iterations.is_empty() || self.iterations.contains(&0) {
            return Err(Error::InvalidInput(
                "iterations must be a non-empty list of positive counts".into(),
            ));
        }
        if self.algorithm == Algorithm::DlLamp && !self.genie && self.model_path.is_none() {
            return Err(Error::Config("dl-lamp requires --model".into()));
        }
        Ok(())
    }
}

/// RNG of one trial: master-seeded, on a per-trial stream (stream 0 is
/// reserved for the shared pilot codebook).
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial + 1);
    rng
}

/// The shared pilot matrix when the config pins one, else `None`.
pub fn fixed_pilots(cfg: &ExperimentConfig) -> Option<PilotMatrix> {
    match cfg.pilot_mode {
        PilotMode::Fixed { pilot_seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(pilot_seed);
            Some(gen_pilot_matrix(cfg, &mut rng))
        }
        PilotMode::PerTrial => None,
    }
}

/// Draws one trial: (pilots, ground truth, observation). Draw order within
/// the trial stream is pilots (per-trial mode only), activity, fading, noise.
pub fn trial_instance<'a>(
    cfg: &ExperimentConfig,
    fixed: Option<&'a PilotMatrix>,
    trial: u64,
) -> Result<(std::borrow::Cow<'a, PilotMatrix>, GroundTruth, Observation)> {
    let mut rng = trial_rng(cfg.seed, trial);
    let pilots: std::borrow::Cow<'a, PilotMatrix> = match fixed {
        Some(p) => std::borrow::Cow::Borrowed(p),
        None => std::borrow::Cow::Owned(gen_pilot_matrix(cfg, &mut rng)),
    };
    let truth = gen_ground_truth(cfg, &mut rng);
    let y = synthesize_observation(&pilots, &truth, cfg.noise_var(), &mut rng)?;
    Ok((pilots, truth, y))
}

#[derive(Clone, Copy)]
enum Selector<'a> {
    Genie,
    Net(&'a FalNetParams),
}

fn resolve_selector<'a>(
    spec: &ExperimentSpec,
    model: Option<&'a FalNetParams>,
) -> Result<Option<Selector<'a>>> {
    match spec.algorithm {
        Algorithm::AmpMmse => Ok(None),
        Algorithm::GaLamp => Ok(Some(Selector::Genie)),
        Algorithm::DlLamp if spec.genie => Ok(Some(Selector::Genie)),
        Algorithm::DlLamp => {
            let net = model.ok_or_else(|| Error::Config("dl-lamp requires a model".into()))?;
            let expect = FalNetParams::dims_for(spec.config.pilot_length, spec.config.n_devices);
            if net.layer_dims != expect {
                return Err(Error::ModelFormat(format!(
                    "model dims {:?} do not match configuration dims {:?}",
                    net.layer_dims, expect
                )));
            }
            let fp = spec.config.fingerprint();
            if net.metadata.config_fingerprint != fp {
                return Err(Error::ModelFormat(format!(
                    "model was trained for configuration {} but this run is {}",
                    net.metadata.config_fingerprint, fp
                )));
            }
            Ok(Some(Selector::Net(net)))
        }
    }
}

/// Final estimate of the requested algorithm at iteration `t`, given the
/// unconstrained trajectory `round1` (length >= t). The constrained second
/// round is cached by suspicious index so repeated report points share it.
fn final_estimate_at<'a>(
    t: usize,
    round1: &'a [AmpState],
    selector: Option<Selector>,
    pilots: &PilotMatrix,
    y: &Observation,
    truth: &GroundTruth,
    cfg: &ExperimentConfig,
    max_iter: usize,
    cache: &'a mut HashMap<usize, Vec<AmpState>>,
) -> Result<&'a ndarray::Array1<Complex64>> {
    let first = &round1[t - 1].estimate;
    let selector = match selector {
        None => return Ok(first),
        Some(s) => s,
    };
    let s = match selector {
        Selector::Genie => genie_select(first, truth)?.0,
        Selector::Net(net) => dnn_select(net, y, first, cfg.activity_prob)?,
    };
    if !cache.contains_key(&s) {
        let round2 = run_amp(pilots, y, cfg, max_iter, Some(s))?;
        cache.insert(s, round2);
    }
    let second = &cache[&s][t - 1].estimate;
    let winner = lmse_select(y, pilots, &[first, second])?;
    Ok(if winner == 0 { first } else { second })
}

/// One CSV row of an NMSE evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub iteration: usize,
    pub algorithm: Algorithm,
    pub nmse_db: f64,
    /// Trials entering the average (those with at least one active device).
    pub trials_used: u64,
}

/// Monte-Carlo NMSE evaluation: 10*log10 of the trial-mean linear NMSE at
/// every requested iteration count. Trials with no active device are
/// excluded.
pub fn run_eval(spec: &ExperimentSpec, model: Option<&FalNetParams>) -> Result<Vec<EvalRow>> {
    spec.validate()?;
    let cfg = &spec.config;
    let selector = resolve_selector(spec, model)?;
    let max_iter = *spec.iterations.iter().max().unwrap();
    let fixed = fixed_pilots(cfg);

    let per_trial: Vec<Option<Vec<f64>>> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| -> Result<Option<Vec<f64>>> {
            let (pilots, truth, y) = trial_instance(cfg, fixed.as_ref(), trial)?;
            if truth.n_active == 0 {
                return Ok(None);
            }
            let round1 = run_amp(&pilots, &y, cfg, max_iter, None)?;
            let mut cache = HashMap::new();
            let mut vals = Vec::with_capacity(spec.iterations.len());
            for &t in &spec.iterations {
                let x_hat = final_estimate_at(
                    t, &round1, selector, &pilots, &y, &truth, cfg, max_iter, &mut cache,
                )?;
                vals.push(nmse_linear(x_hat, &truth.signal)?);
            }
            Ok(Some(vals))
        })
        .collect::<Result<_>>()?;

    let mut sums = vec![0.0f64; spec.iterations.len()];
    let mut used = 0u64;
    for vals in per_trial.iter().flatten() {
        used += 1;
        for (acc, v) in sums.iter_mut().zip(vals.iter()) {
            *acc += v;
        }
    }
    if used == 0 {
        return Err(Error::InvalidInput(
            "every trial had zero active devices; NMSE undefined".into(),
        ));
    }
    Ok(spec
        .iterations
        .iter()
        .zip(sums.iter())
        .map(|(&iteration, &sum)| EvalRow {
            iteration,
            algorithm: spec.algorithm,
            nmse_db: 10.0 * (sum / used as f64).log10(),
            trials_used: used,
        })
        .collect())
}

/// ROC sweep at the largest requested iteration count: final estimates of
/// every trial thresholded over `thresholds`, rates averaged where defined.
pub fn run_roc(
    spec: &ExperimentSpec,
    model: Option<&FalNetParams>,
    thresholds: &[f64],
) -> Result<Vec<RocPoint>> {
    spec.validate()?;
    let cfg = &spec.config;
    let selector = resolve_selector(spec, model)?;
    let t = *spec.iterations.iter().max().unwrap();
    let fixed = fixed_pilots(cfg);

    let outputs: Vec<(ndarray::Array1<Complex64>, Vec<u8>)> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| -> Result<(ndarray::Array1<Complex64>, Vec<u8>)> {
            let (pilots, truth, y) = trial_instance(cfg, fixed.as_ref(), trial)?;
            let round1 = run_amp(&pilots, &y, cfg, t, None)?;
            let mut cache = HashMap::new();
            let x_hat = final_estimate_at(
                t, &round1, selector, &pilots, &y, &truth, cfg, t, &mut cache,
            )?
            .clone();
            Ok((x_hat, truth.activity))
        })
        .collect::<Result<_>>()?;

    let (estimates, activities): (Vec<_>, Vec<_>) = outputs.into_iter().unzip();
    roc_sweep(&estimates, &activities, thresholds)
}

/// Geometric threshold grid for ROC sweeps.
pub fn default_roc_thresholds() -> Vec<f64> {
    let (lo, hi, count) = (1e-4f64, 2.0f64, 80usize);
    let ratio = (hi / lo).powf(1.0 / (count - 1) as f64);
    (0..count).map(|i| lo * ratio.powi(i as i32)).collect()
}

/// Generates a training dataset: each trial runs the unconstrained recursion
/// for `amp_iterations` steps and records (features, label) of the final
/// iterate.
pub fn gen_dataset(cfg: &ExperimentConfig, trials: u64, amp_iterations: usize) -> Result<Dataset> {
    cfg.validate()?;
    if trials == 0 || amp_iterations == 0 {
        return Err(Error::InvalidInput(
            "trials and amp_iterations must be >= 1".into(),
        ));
    }
    let fixed = fixed_pilots(cfg);
    let feat_len = 2 * cfg.pilot_length + cfg.n_devices;

    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<(Vec<f64>, Vec<f64>)> {
            let (pilots, truth, y) = trial_instance(cfg, fixed.as_ref(), trial)?;
            let states = run_amp(&pilots, &y, cfg, amp_iterations, None)?;
            let x_hat = &states.last().unwrap().estimate;
            let features = preprocess_features(&y, x_hat, cfg.activity_prob);
            let label = make_label(x_hat, &truth);
            Ok((features.to_vec(), label.to_vec()))
        })
        .collect::<Result<_>>()?;

    let mut features = Vec::with_capacity(rows.len() * feat_len);
    let mut labels = Vec::with_capacity(rows.len() * cfg.n_devices);
    for (f, l) in rows {
        features.extend(f);
        labels.extend(l);
    }
    Ok(Dataset {
        header: DatasetHeader {
            format_version: 1,
            n_devices: cfg.n_devices,
            pilot_length: cfg.pilot_length,
            activity_prob: cfg.activity_prob,
            snr_db: cfg.snr_db,
            quant_bits: cfg.quant_bits,
            seed: cfg.seed,
            pilot_seed: match cfg.pilot_mode {
                PilotMode::Fixed { pilot_seed } => Some(pilot_seed),
                PilotMode::PerTrial => None,
            },
            amp_iterations,
            trials,
            config_fingerprint: cfg.fingerprint(),
        },
        features: Array2::from_shape_vec((trials as usize, feat_len), features)
            .map_err(|e| Error::DatasetFormat(e.to_string()))?,
        labels: Array2::from_shape_vec((trials as usize, cfg.n_devices), labels)
            .map_err(|e| Error::DatasetFormat(e.to_string()))?,
    })
}

/// Decimal formatting with 6 significant digits, for diff-able CSV output.
pub fn fmt_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0.00000".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

pub const EVAL_CSV_HEADER: &str = "iteration,algorithm,nmse_db,trials,seed,config_fingerprint";
pub const ROC_CSV_HEADER: &str = "delta,mean_pf,mean_pm,algorithm,trials,seed,config_fingerprint";

pub fn write_eval_csv<W: IoWrite>(
    w: &mut W,
    rows: &[EvalRow],
    spec: &ExperimentSpec,
) -> Result<()> {
    writeln!(w, "{EVAL_CSV_HEADER}")?;
    let fp = spec.config.fingerprint();
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            row.iteration,
            row.algorithm.as_str(),
            fmt_sig6(row.nmse_db),
            spec.trials,
            spec.config.seed,
            fp
        )?;
    }
    Ok(())
}

pub fn write_roc_csv<W: IoWrite>(
    w: &mut W,
    points: &[RocPoint],
    spec: &ExperimentSpec,
) -> Result<()> {
    writeln!(w, "{ROC_CSV_HEADER}")?;
    let fp = spec.config.fingerprint();
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_sig6(p.delta),
            fmt_sig6(p.mean_pf),
            fmt_sig6(p.mean_pm),
            spec.algorithm.as_str(),
            spec.trials,
            spec.config.seed,
            fp
        )?;
    }
    Ok(())
}

/// Parses a flat key-value config file: one `key = value` per line, `#`
/// comments, blank lines ignored.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Applies one config entry. Documented keys: n_devices, pilot_length,
/// activity_prob, quant_bits (integer or "unquantized"), snr_db, channel_std,
/// seed, pilot_mode (fixed | per-trial), pilot_seed.
pub fn apply_config_entry(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
    }
    match key {
        "n_devices" => cfg.n_devices = parse(key, value)?,
        "pilot_length" => cfg.pilot_length = parse(key, value)?,
        "activity_prob" => cfg.activity_prob = parse(key, value)?,
        "quant_bits" => {
            cfg.quant_bits = if value == "unquantized" {
                None
            } else {
                Some(parse(key, value)?)
            }
        }
        "snr_db" => cfg.snr_db = parse(key, value)?,
        "channel_std" => cfg.channel_std = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        "pilot_mode" => {
            cfg.pilot_mode = match value {
                "per-trial" => PilotMode::PerTrial,
                "fixed" => match cfg.pilot_mode {
                    PilotMode::Fixed { pilot_seed } => PilotMode::Fixed { pilot_seed },
                    PilotMode::PerTrial => PilotMode::Fixed {
                        pilot_seed: crate::sysmodel::DEFAULT_PILOT_SEED,
                    },
                },
                other => {
                    return Err(Error::Config(format!(
                        "invalid pilot_mode '{other}' (expected fixed or per-trial)"
                    )))
                }
            }
        }
        "pilot_seed" => {
            cfg.pilot_mode = PilotMode::Fixed {
                pilot_seed: parse(key, value)?,
            }
        }
        other => return Err(Error::Config(format!("unknown config key '{other}'"))),
    }
    Ok(())
}
