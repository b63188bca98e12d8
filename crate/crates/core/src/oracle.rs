//! Synthetic accuracy for desk-scale pipeline runs.
//!
//! The response is a saturating curve in the FLOPs ratio, a mild preference
//! for resolution near 1.1, and a penalty on widening past the baseline. The
//! constants are test fixtures, not measurements.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::ScalingCoefficients;
use crate::search::ExperimentRecord;

pub const SATURATION: f64 = 0.82;
pub const SCALE: f64 = 0.04;
pub const EXPONENT: f64 = 0.35;
pub const RESOLUTION_BONUS: f64 = 0.015;
pub const PREFERRED_RESOLUTION: f64 = 1.1;
pub const RESOLUTION_SPREAD: f64 = 0.18;
pub const WIDTH_PENALTY: f64 = 0.01;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("noise standard deviation {0} must be finite and non-negative")]
    InvalidNoise(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            noise_sd: 0.003,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(OracleError::InvalidNoise(self.noise_sd));
        }
        Ok(())
    }
}

/// The oracle without noise or clamping.
pub fn expected_accuracy(coeffs: ScalingCoefficients, ratio: f64) -> f64 {
    let base = SATURATION - SCALE * ratio.powf(-EXPONENT);
    let dr = coeffs.r - PREFERRED_RESOLUTION;
    let bonus = RESOLUTION_BONUS * (-dr * dr / RESOLUTION_SPREAD).exp();
    let penalty = WIDTH_PENALTY * (coeffs.w - 1.0).max(0.0);
    base + bonus - penalty
}

/// Noisy accuracy of `record` in `[0, 1]`. The noise for a record depends only
/// on the seed and the record id: ChaCha8 seeded with `seed`, on the stream
/// given by the 64-bit FNV-1a hash of the id bytes.
pub fn oracle_accuracy(record: &ExperimentRecord, cfg: &OracleConfig) -> Result<f64, OracleError> {
    cfg.validate()?;
    let mut acc = expected_accuracy(record.coeffs, record.realized_ratio);
    if cfg.noise_sd > 0.0 {
        let mut hasher = FnvHasher::default();
        hasher.write(record.id.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(hasher.finish());
        let normal = Normal::new(0.0, cfg.noise_sd).map_err(|_| OracleError::InvalidNoise(cfg.noise_sd))?;
        acc += normal.sample(&mut rng);
    }
    Ok(acc.clamp(0.0, 1.0))
}

/// `(id, accuracy)` for every record, in input order.
pub fn label(records: &[ExperimentRecord], cfg: &OracleConfig) -> Result<Vec<(String, f64)>, OracleError> {
    records
        .iter()
        .map(|rec| Ok((rec.id.clone(), oracle_accuracy(rec, cfg)?)))
        .collect()
}
