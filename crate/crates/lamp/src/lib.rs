//! Simulator for joint activity detection and channel estimation in
//! grant-free random access, built around approximate message passing (AMP)
//! with a Bernoulli-Gaussian MMSE denoiser.
//!
//! The crate covers the full experiment pipeline:
//!
//! - [`sysmodel`]: pilot codebooks (optionally quantized to a few bits),
//!   random device activity, Rayleigh fading and noisy observations;
//! - [`amp`]: the AMP recursion, its denoiser, and a state-evolution
//!   predictor for the effective noise variance;
//! - [`fal`]: a small MLP that scores each detected-active device by its
//!   likelihood of being a false alarm, plus training and persistence;
//! - [`list`]: two-round list AMP (genie-aided and learned variants) with a
//!   least-residual selector;
//! - [`metrics`]: NMSE and detection-error rates, ROC sweeps;
//! - [`experiment`]: seeded, parallel Monte-Carlo drivers and CSV output.
//!
//! Everything is deterministic given the seeds: per-trial RNG streams are
//! derived from (master seed, trial index), so parallel runs reproduce
//! byte-identical results.

pub mod amp;
pub mod error;
pub mod experiment;
pub mod fal;
pub mod linalg;
pub mod list;
pub mod metrics;
pub mod sysmodel;

pub use error::{Error, Result};
