//! Seeded random sampling of scaling coefficients under FLOPs constraints.
//!
//! Every record index draws from its own ChaCha8 stream: the generator is
//! seeded with `seed` via `ChaCha8Rng::seed_from_u64` and switched to stream
//! `index` with `set_stream`. Coefficients are drawn with
//! `Rng::random_range(lo..=hi)` from `rand` 0.9. These choices fix the meaning
//! of a seed, so sample sets are reproducible across runs, platforms and
//! thread counts.

mod store;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{ArchError, ArchitectureSpec, CostModel, ScalingCoefficients};
use crate::budget::{bracket, relative_error};

pub use self::store::{IngestSummary, RecordStore, STORE_HEADER};

/// Draws allowed across all records of one sampling call.
pub const RETRY_BUDGET: u64 = 1_000_000;

/// Half-width of the width search window around the analytic width, relative.
pub const WIDTH_WINDOW: f64 = 0.3;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
    #[error("retry budget of {budget} draws exhausted before {requested} samples were accepted")]
    BudgetExhausted { budget: u64, requested: usize },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: accuracy {value} outside [0, 1]")]
    InvalidAccuracy { line: u64, value: f64 },
    #[error("line {line}: unknown record id `{id}` and the row does not define a full record")]
    UnknownId { line: u64, id: String },
    #[error("record `{id}` already exists with different coefficients")]
    Conflict { id: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SearchError {
    /// True for failures caused by unreadable or malformed input rather than
    /// by the domain.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            SearchError::Malformed { .. } | SearchError::Io { .. } | SearchError::Arch(ArchError::Parse(_))
        )
    }
}

/// Closed interval a coefficient is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRange {
    pub lo: f64,
    pub hi: f64,
}

impl CoefficientRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn fixed(value: f64) -> Self {
        Self { lo: value, hi: value }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

impl Default for CoefficientRange {
    fn default() -> Self {
        Self::new(0.35, 2.8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetRatio {
    pub ratio: f64,
    /// Relative tolerance on the realized ratio.
    pub tolerance: f64,
}

impl TargetRatio {
    pub fn new(ratio: f64) -> Self {
        Self { ratio, tolerance: 0.03 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub r_range: CoefficientRange,
    pub d_range: CoefficientRange,
    pub w_range: CoefficientRange,
    pub band_low: f64,
    pub band_high: f64,
    pub target: Option<TargetRatio>,
    pub sample_count: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            r_range: CoefficientRange::default(),
            d_range: CoefficientRange::default(),
            w_range: CoefficientRange::default(),
            band_low: 0.03,
            band_high: 1.05,
            target: None,
            sample_count: 100,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::InvalidConfig(m));
        for (label, range) in [("r", self.r_range), ("d", self.d_range), ("w", self.w_range)] {
            if !(range.lo.is_finite() && range.hi.is_finite() && range.lo > 0.0 && range.lo <= range.hi) {
                return bad(format!(
                    "{label} range [{}, {}] must be positive and ordered",
                    range.lo, range.hi
                ));
            }
        }
        if !(self.band_low > 0.0 && self.band_low < self.band_high && self.band_high.is_finite()) {
            return bad(format!(
                "band [{}, {}] must satisfy 0 < low < high",
                self.band_low, self.band_high
            ));
        }
        if let Some(t) = self.target {
            if !(t.ratio.is_finite() && t.ratio > 0.0) {
                return bad(format!("target ratio {} must be positive", t.ratio));
            }
            if !(t.tolerance > 0.0 && t.tolerance <= 0.1) {
                return bad(format!("tolerance {} outside (0, 0.1]", t.tolerance));
            }
        }
        Ok(())
    }
}

/// One sampled configuration and, once trained, its accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub id: String,
    pub coeffs: ScalingCoefficients,
    pub flops: u64,
    pub params: u64,
    pub realized_ratio: f64,
    pub accuracy: Option<f64>,
}

impl ExperimentRecord {
    /// Costs `coeffs` on `model` and builds a pending record.
    pub fn measure(model: &CostModel, id: impl Into<String>, coeffs: ScalingCoefficients) -> Result<Self, ArchError> {
        let (_, report) = model.evaluate(coeffs)?;
        Ok(Self {
            id: id.into(),
            coeffs,
            flops: report.flops,
            params: report.params,
            realized_ratio: model.ratio_of(report),
            accuracy: None,
        })
    }
}

pub fn record_id(seed: u64, index: usize) -> String {
    format!("s{seed}-{index:04}")
}

fn stream_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs `draw` for every index until it accepts, sharing one global draw budget.
///
/// Each index consumes a deterministic number of draws, so whether the budget
/// suffices does not depend on scheduling.
fn sample_indexed<F>(cfg: &SamplingConfig, draw: F) -> Result<Vec<ExperimentRecord>, SearchError>
where
    F: Fn(&mut ChaCha8Rng, usize) -> Result<Option<ExperimentRecord>, SearchError> + Sync,
{
    let used = AtomicU64::new(0);
    (0..cfg.sample_count)
        .into_par_iter()
        .map(|index| {
            let mut rng = stream_rng(cfg.seed, index);
            loop {
                if used.fetch_add(1, Ordering::Relaxed) >= RETRY_BUDGET {
                    return Err(SearchError::BudgetExhausted {
                        budget: RETRY_BUDGET,
                        requested: cfg.sample_count,
                    });
                }
                if let Some(record) = draw(&mut rng, index)? {
                    return Ok(record);
                }
            }
        })
        .collect()
}

/// Samples `cfg.sample_count` records uniformly over the coefficient ranges,
/// keeping only those whose realized ratio lies in `[band_low, band_high]`.
pub fn sample_band(spec: &ArchitectureSpec, cfg: &SamplingConfig) -> Result<Vec<ExperimentRecord>, SearchError> {
    cfg.validate()?;
    let model = CostModel::new(spec.clone())?;
    sample_indexed(cfg, |rng, index| {
        let coeffs = ScalingCoefficients {
            r: cfg.r_range.sample(rng),
            d: cfg.d_range.sample(rng),
            w: cfg.w_range.sample(rng),
        };
        let ratio = model.ratio_unchecked(coeffs);
        if ratio < cfg.band_low || ratio > cfg.band_high {
            return Ok(None);
        }
        Ok(Some(ExperimentRecord::measure(
            &model,
            record_id(cfg.seed, index),
            coeffs,
        )?))
    })
}

/// Searches the width multiplier so that `(r, d, w)` realizes `target`
/// within `tolerance`, starting from `w0` and staying inside `±30%` of it
/// intersected with `range`. Returns the tuned width and its realized ratio.
pub fn tune_width(
    model: &CostModel,
    r: f64,
    d: f64,
    w0: f64,
    target: f64,
    tolerance: f64,
    range: CoefficientRange,
) -> Option<(f64, f64)> {
    let ratio_at = |w: f64| model.ratio_unchecked(ScalingCoefficients { r, d, w });
    let start = ratio_at(w0);
    if relative_error(start, target) <= tolerance {
        return Some((w0, start));
    }
    let lo = (w0 * (1.0 - WIDTH_WINDOW)).max(range.lo);
    let hi = (w0 * (1.0 + WIDTH_WINDOW)).min(range.hi);
    if lo > hi {
        return None;
    }
    let (w, ratio) = bracket(ratio_at, lo, hi, target).closest(target);
    (relative_error(ratio, target) <= tolerance).then_some((w, ratio))
}

/// Samples records at a fixed target ratio: draws `r` and `d`, sets
/// `w = sqrt(t / (d r^2))`, then tunes `w` until the realized ratio is within
/// the tolerance. Draws that cannot be tuned into the band are discarded.
pub fn sample_at_target(spec: &ArchitectureSpec, cfg: &SamplingConfig) -> Result<Vec<ExperimentRecord>, SearchError> {
    cfg.validate()?;
    let target = cfg
        .target
        .ok_or_else(|| SearchError::InvalidConfig("sample_at_target needs a target ratio".into()))?;
    let model = CostModel::new(spec.clone())?;
    sample_indexed(cfg, |rng, index| {
        let r = cfg.r_range.sample(rng);
        let d = cfg.d_range.sample(rng);
        let w0 = (target.ratio / (d * r * r)).sqrt();
        if !cfg.w_range.contains(w0) {
            return Ok(None);
        }
        let Some((w, _)) = tune_width(&model, r, d, w0, target.ratio, target.tolerance, cfg.w_range) else {
            return Ok(None);
        };
        let coeffs = ScalingCoefficients { r, d, w };
        Ok(Some(ExperimentRecord::measure(
            &model,
            record_id(cfg.seed, index),
            coeffs,
        )?))
    })
}
