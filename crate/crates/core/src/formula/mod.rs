//! The tiny formula: resolution and depth from fitted regressors, width from
//! the FLOPs constraint `r² · d · w² = c`.

mod giant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{ArchError, ArchitectureSpec, CostModel, CostReport, ResolvedArchitecture, ScalingCoefficients};
use crate::budget::{bracket, relative_error};
use crate::gpr::{fit_hyperparameters, GprError, GprModel, MeanFunction, Target};
use crate::search::{CoefficientRange, ExperimentRecord, WIDTH_WINDOW};

pub use self::giant::{inversed_giant, GiantScaling, COMPOUND_ALPHA, COMPOUND_BETA, COMPOUND_GAMMA};

/// Deviation from `c` above which the discretized result is corrected.
pub const CORRECTION_TOLERANCE: f64 = 0.03;

/// Deviation from `c` a corrected result may keep.
pub const FINAL_TOLERANCE: f64 = 0.05;

/// Half-width of the resolution scan, relative to the formula's resolution.
pub const RESOLUTION_WINDOW: f64 = 0.3;

#[derive(Debug, Error)]
pub enum FormulaError {
    #[error("reduction factor c = {0} must lie strictly between 0 and 1")]
    InvalidBudget(f64),
    #[error("invalid clamp bounds: {0}")]
    InvalidBounds(String),
    #[error("the resolution and depth models were fitted on different inputs")]
    MismatchedModels,
    #[error("invalid giant exponent {0}: must be finite and non-negative")]
    InvalidExponent(f64),
    #[error(transparent)]
    Gpr(#[from] GprError),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

/// Fitted `c → r` and `c → d` regressors with clamp bounds on their outputs.
#[derive(Debug, Clone)]
pub struct TinyFormula {
    model_r: GprModel,
    model_d: GprModel,
    r_bounds: CoefficientRange,
    d_bounds: CoefficientRange,
}

fn check_bounds(label: &str, b: CoefficientRange) -> Result<(), FormulaError> {
    if !(b.lo.is_finite() && b.hi.is_finite() && b.lo > 0.0 && b.lo <= b.hi) {
        return Err(FormulaError::InvalidBounds(format!(
            "{label} bounds [{}, {}]",
            b.lo, b.hi
        )));
    }
    Ok(())
}

impl TinyFormula {
    /// Pairs two models over the same inputs with the default sampling-range clamps.
    pub fn new(model_r: GprModel, model_d: GprModel) -> Result<Self, FormulaError> {
        if model_r.inputs() != model_d.inputs() {
            return Err(FormulaError::MismatchedModels);
        }
        Ok(Self {
            model_r,
            model_d,
            r_bounds: CoefficientRange::default(),
            d_bounds: CoefficientRange::default(),
        })
    }

    pub fn with_bounds(mut self, r_bounds: CoefficientRange, d_bounds: CoefficientRange) -> Result<Self, FormulaError> {
        check_bounds("r", r_bounds)?;
        check_bounds("d", d_bounds)?;
        self.r_bounds = r_bounds;
        self.d_bounds = d_bounds;
        Ok(self)
    }

    /// Fits both regressors on `(realized_ratio, r)` and `(realized_ratio, d)`
    /// pairs, choosing hyperparameters by grid search.
    pub fn fit(records: &[ExperimentRecord], mean: MeanFunction) -> Result<Self, FormulaError> {
        let fit_one = |target: Target| -> Result<GprModel, GprError> {
            let pairs: Vec<(f64, f64)> = records
                .iter()
                .map(|rec| {
                    let y = match target {
                        Target::R => rec.coeffs.r,
                        Target::D => rec.coeffs.d,
                    };
                    (rec.realized_ratio, y)
                })
                .collect();
            let hp = fit_hyperparameters(&pairs, mean)?;
            Ok(GprModel::fit_with_mean(&pairs, hp.kernel, hp.noise_variance, mean)?.with_target(target))
        };
        Self::new(fit_one(Target::R)?, fit_one(Target::D)?)
    }

    pub fn model_r(&self) -> &GprModel {
        &self.model_r
    }

    pub fn model_d(&self) -> &GprModel {
        &self.model_d
    }

    pub fn r_bounds(&self) -> CoefficientRange {
        self.r_bounds
    }

    pub fn d_bounds(&self) -> CoefficientRange {
        self.d_bounds
    }

    /// Continuous coefficients for reduction factor `c`: clamped posterior
    /// means for `r` and `d`, and `w = sqrt(c / (r² d))`.
    pub fn solve(&self, c: f64) -> Result<ScalingCoefficients, FormulaError> {
        if !(c > 0.0 && c < 1.0) {
            return Err(FormulaError::InvalidBudget(c));
        }
        let clamp = |v: f64, b: CoefficientRange| v.clamp(b.lo, b.hi);
        let r = clamp(self.model_r.predict(c)?.mean, self.r_bounds);
        let d = clamp(self.model_d.predict(c)?.mean, self.d_bounds);
        let w = (c / (r * r * d)).sqrt();
        Ok(ScalingCoefficients { r, d, w })
    }

    pub fn solve_resolved(&self, spec: &ArchitectureSpec, c: f64) -> Result<Solution, FormulaError> {
        self.solve_with(&CostModel::new(spec.clone())?, c)
    }

    /// Solves for `c` and discretizes. When the realized ratio misses `c` by more
    /// than [`CORRECTION_TOLERANCE`], the width is re-tuned within ±30%; if that
    /// is not enough, neighbouring input resolutions are tried outward from the
    /// formula's, re-tuning the width at each, until one lands within tolerance.
    pub fn solve_with(&self, model: &CostModel, c: f64) -> Result<Solution, FormulaError> {
        let formula = self.solve(c)?;
        let ScalingCoefficients { r, d, w } = formula;
        let base = model.spec().base_resolution;
        let ratio_at = |r: f64, w: f64| model.ratio_unchecked(ScalingCoefficients { r, d, w });
        let tune = |r: f64| {
            let (w, ratio) = bracket(
                |w| ratio_at(r, w),
                w * (1.0 - WIDTH_WINDOW),
                w * (1.0 + WIDTH_WINDOW),
                c,
            )
            .closest(c);
            (r, w, ratio)
        };

        let mut best = (r, w, ratio_at(r, w));
        if relative_error(best.2, c) > CORRECTION_TOLERANCE {
            best = tune(r);
        }
        if relative_error(best.2, c) > CORRECTION_TOLERANCE {
            let start = crate::arch::scale_resolution(base, r);
            let reach = (RESOLUTION_WINDOW * f64::from(start)).ceil() as u32;
            'scan: for k in 1..=reach {
                for res in [start.checked_sub(k), start.checked_add(k)].into_iter().flatten() {
                    let r_res = f64::from(res) / f64::from(base);
                    if res < crate::arch::MIN_RESOLUTION || !self.r_bounds.contains(r_res) {
                        continue;
                    }
                    let candidate = tune(r_res);
                    if relative_error(candidate.2, c) < relative_error(best.2, c) {
                        best = candidate;
                    }
                    if relative_error(best.2, c) <= CORRECTION_TOLERANCE {
                        break 'scan;
                    }
                }
            }
        }

        let coeffs = ScalingCoefficients {
            r: best.0,
            d,
            w: best.1,
        };
        let (architecture, cost) = model.evaluate(coeffs)?;
        let ratio = model.ratio_of(cost);
        let status = if relative_error(ratio, c) <= FINAL_TOLERANCE {
            BudgetStatus::Met
        } else {
            BudgetStatus::Unreachable { closest_ratio: ratio }
        };
        Ok(Solution {
            c,
            formula,
            coeffs,
            architecture,
            cost,
            ratio,
            status,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BudgetStatus {
    /// Realized FLOPs within [`FINAL_TOLERANCE`] of the budget.
    Met,
    /// Floors on resolution, depth or channels keep the network away from the
    /// budget; the closest realized ratio found is reported.
    Unreachable { closest_ratio: f64 },
}

/// A discretized network for one reduction factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub c: f64,
    /// Coefficients straight from the formula, before discretization.
    pub formula: ScalingCoefficients,
    /// Coefficients after budget correction.
    pub coeffs: ScalingCoefficients,
    pub architecture: ResolvedArchitecture,
    pub cost: CostReport,
    pub ratio: f64,
    pub status: BudgetStatus,
}

impl Solution {
    pub fn is_met(&self) -> bool {
        self.status == BudgetStatus::Met
    }

    /// The JSON document written for this solution: the coefficients and cost
    /// followed by a concrete architecture spec that costs the same at identity.
    pub fn to_document(
        &self,
        spec: &ArchitectureSpec,
        name: impl Into<String>,
    ) -> Result<SolutionDocument, FormulaError> {
        Ok(SolutionDocument {
            c: self.c,
            r: self.coeffs.r,
            d: self.coeffs.d,
            w: self.coeffs.w,
            resolution: self.architecture.resolution,
            flops: self.cost.flops,
            params: self.cost.params,
            ratio: self.ratio,
            status: self.status,
            formula: self.formula,
            architecture: spec.concretize(&self.architecture, name)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub c: f64,
    pub r: f64,
    pub d: f64,
    pub w: f64,
    pub resolution: u32,
    pub flops: u64,
    pub params: u64,
    pub ratio: f64,
    #[serde(flatten)]
    pub status: BudgetStatus,
    /// Coefficients before discretization and correction.
    pub formula: ScalingCoefficients,
    #[serde(flatten)]
    pub architecture: ArchitectureSpec,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::Kernel;

    /// Models that predict roughly constant targets near the given values.
    fn flat_formula(r: f64, d: f64) -> TinyFormula {
        let xs = [0.1, 0.3, 0.5, 0.7, 0.9];
        let kernel = Kernel::new(2.0, 4.0).unwrap();
        let fit = |y: f64| GprModel::fit(&xs.map(|x| (x, y)), kernel, 1e-6).unwrap();
        TinyFormula::new(fit(r), fit(d)).unwrap()
    }

    #[test]
    fn width_from_constraint() {
        let f = flat_formula(0.8, 0.5);
        let s = f.solve(0.25).unwrap();
        assert!((s.r - 0.8).abs() < 1e-3 && (s.d - 0.5).abs() < 1e-3);
        assert!((s.r * s.r * s.d * s.w * s.w - 0.25).abs() < 1e-12);
        let exact = (0.25f64 / (0.64 * 0.5)).sqrt();
        assert!((exact - 0.8839).abs() < 1e-4);
    }

    #[test]
    fn budget_bounds() {
        let f = flat_formula(1.0, 1.0);
        for c in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(f.solve(c), Err(FormulaError::InvalidBudget(_))));
        }
        let s = f.solve(0.81).unwrap();
        assert!((s.w - 0.9).abs() < 1e-3);
    }

    #[test]
    fn clamps_collapse_of_zero_mean_prior() {
        let xs = [0.5, 0.6, 0.7, 0.8];
        let kernel = Kernel::new(0.05, 1.0).unwrap();
        let fit = || GprModel::fit(&xs.map(|x| (x, 1.0)), kernel, 1e-4).unwrap();
        let f = TinyFormula::new(fit(), fit()).unwrap();
        let s = f.solve(0.05).unwrap();
        assert_eq!((s.r, s.d), (0.35, 0.35));
        assert!(s.w.is_finite() && s.w > 0.0);
    }

    #[test]
    fn mismatched_models_rejected() {
        let kernel = Kernel::new(0.3, 1.0).unwrap();
        let a = GprModel::fit(&[(0.2, 1.0), (0.5, 1.0)], kernel, 0.01).unwrap();
        let b = GprModel::fit(&[(0.3, 1.0), (0.5, 1.0)], kernel, 0.01).unwrap();
        assert!(matches!(TinyFormula::new(a, b), Err(FormulaError::MismatchedModels)));
    }

    #[test]
    fn resolved_budget_and_document() {
        let f = flat_formula(0.9, 0.9);
        let spec = ArchitectureSpec::efficientnet_b0();
        for c in [0.9, 0.5, 0.25, 0.13, 0.06] {
            let s = f.solve_resolved(&spec, c).unwrap();
            assert!(s.is_met(), "c={c}: {:?}", s.status);
            assert!(relative_error(s.ratio, c) <= FINAL_TOLERANCE);
            let doc = s.to_document(&spec, format!("tiny-{c}")).unwrap();
            let json = serde_json::to_value(&doc).unwrap();
            for key in ["c", "r", "d", "w", "resolution", "flops", "params", "stages", "status"] {
                assert!(json.get(key).is_some(), "missing {key}");
            }
            assert_eq!(json["status"], "met");
            let back: SolutionDocument = serde_json::from_value(json).unwrap();
            assert_eq!(back, doc);
        }
    }

    #[test]
    fn tiny_budget_is_unreachable() {
        let f = flat_formula(0.9, 0.9);
        let s = f.solve_resolved(&ArchitectureSpec::efficientnet_b0(), 0.001).unwrap();
        let BudgetStatus::Unreachable { closest_ratio } = s.status else {
            panic!("expected unreachable, got {:?}", s.status)
        };
        assert!(closest_ratio > 0.001 * 1.05);
        assert_eq!(closest_ratio, s.ratio);
    }
}
