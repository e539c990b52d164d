//! NMSE, false-alarm / missed-detection probabilities, and ROC sweeps.

use ndarray::Array1;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::norm_sqr;

/// Per-trial detection rates. `None` marks an undefined rate (empty
/// denominator for this trial).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionOutcome {
    pub pf: Option<f64>,
    pub pm: Option<f64>,
    pub n_inactive: usize,
    pub n_active: usize,
}

/// Linear-scale normalized squared error ||x_hat - x||^2 / ||x||^2.
///
/// Errors on ||x|| = 0; trials with no active device must be excluded by the
/// caller.
pub fn nmse_linear(x_hat: &Array1<Complex64>, x: &Array1<Complex64>) -> Result<f64> {
    if x_hat.len() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate length {} vs truth {}",
            x_hat.len(),
            x.len()
        )));
    }
    let denom = norm_sqr(x);
    if denom == 0.0 {
        return Err(Error::InvalidInput(
            "nmse undefined for an all-zero signal".into(),
        ));
    }
    Ok(norm_sqr(&(x_hat - x)) / denom)
}

/// Hard activity decision at an absolute magnitude threshold: 1 iff |x_hat_n|
/// is strictly above delta.
pub fn detect_fixed_threshold(x_hat: &Array1<Complex64>, delta: f64) -> Vec<u8> {
    x_hat
        .iter()
        .map(|v| u8::from(v.norm_sqr() > delta * delta))
        .collect()
}

/// False-alarm and missed-detection rates of one trial.
pub fn pf_pm(a_hat: &[u8], a: &[u8]) -> Result<DetectionOutcome> {
    if a_hat.len() != a.len() {
        return Err(Error::DimensionMismatch(format!(
            "decision length {} vs truth {}",
            a_hat.len(),
            a.len()
        )));
    }
    let mut false_alarms = 0usize;
    let mut misses = 0usize;
    let mut n_inactive = 0usize;
    let mut n_active = 0usize;
    for (&d, &t) in a_hat.iter().zip(a.iter()) {
        if t == 0 {
            n_inactive += 1;
            if d == 1 {
                false_alarms += 1;
            }
        } else {
            n_active += 1;
            if d == 0 {
                misses += 1;
            }
        }
    }
    Ok(DetectionOutcome {
        pf: (n_inactive > 0).then(|| false_alarms as f64 / n_inactive as f64),
        pm: (n_active > 0).then(|| misses as f64 / n_active as f64),
        n_inactive,
        n_active,
    })
}

/// One point of an ROC sweep: the threshold and the trial-averaged rates
/// (averages over trials where the rate is defined).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub delta: f64,
    pub mean_pf: f64,
    pub mean_pm: f64,
}

/// Applies `detect_fixed_threshold` at every threshold to every trial's final
/// estimate and averages the defined rates.
pub fn roc_sweep(
    estimates: &[Array1<Complex64>],
    activities: &[Vec<u8>],
    thresholds: &[f64],
) -> Result<Vec<RocPoint>> {
    if estimates.is_empty() || thresholds.is_empty() {
        return Err(Error::InvalidInput(
            "roc sweep needs at least one trial and one threshold".into(),
        ));
    }
    if estimates.len() != activities.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates vs {} activity vectors",
            estimates.len(),
            activities.len()
        )));
    }
    let mut points = Vec::with_capacity(thresholds.len());
    for &delta in thresholds {
        let mut pf_sum = 0.0;
        let mut pf_count = 0usize;
        let mut pm_sum = 0.0;
        let mut pm_count = 0usize;
        for (x_hat, a) in estimates.iter().zip(activities.iter()) {
            let outcome = pf_pm(&detect_fixed_threshold(x_hat, delta), a)?;
            if let Some(pf) = outcome.pf {
                pf_sum += pf;
                pf_count += 1;
            }
            if let Some(pm) = outcome.pm {
                pm_sum += pm;
                pm_count += 1;
            }
        }
        points.push(RocPoint {
            delta,
            mean_pf: if pf_count > 0 {
                pf_sum / pf_count as f64
            } else {
                f64::NAN
            },
            mean_pm: if pm_count > 0 {
                pm_sum / pm_count as f64
            } else {
                f64::NAN
            },
        });
    }
    Ok(points)
}
