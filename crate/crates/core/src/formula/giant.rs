//! Compound scaling run backwards: the baseline the tiny formula is compared to.

use serde::Serialize;

use super::{FormulaError, CORRECTION_TOLERANCE};
use crate::arch::{ArchitectureSpec, CostModel, CostReport, ScalingCoefficients, MIN_RESOLUTION};
use crate::budget::bracket;

/// Depth base of the compound rule.
pub const COMPOUND_ALPHA: f64 = 1.2;
/// Width base of the compound rule.
pub const COMPOUND_BETA: f64 = 1.1;
/// Resolution base of the compound rule.
pub const COMPOUND_GAMMA: f64 = 1.15;

/// Lowest width tried, as a fraction of the compound width.
const MIN_WIDTH_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GiantScaling {
    pub phi: f64,
    /// `(γ^-φ, α^-φ, β^-φ)` before tuning.
    pub compound: ScalingCoefficients,
    pub coeffs: ScalingCoefficients,
    pub cost: CostReport,
    pub ratio: f64,
    /// `2^-φ`.
    pub target: f64,
    /// Whether `ratio` is within 3% of `target`.
    pub within_tolerance: bool,
}

/// Shrinks `spec` by `φ` compound steps and tunes the result onto `2^-φ` of
/// the baseline FLOPs.
///
/// Depth keeps its compound value. Starting from the compound resolution and
/// stepping one pixel down at a time, the width is lowered from its compound
/// value only as far as needed to stay under `1.03 · 2^-φ`; the first
/// resolution whose ratio also reaches `0.97 · 2^-φ` is returned. If none
/// does, the attempt closest to the target is returned.
pub fn inversed_giant(spec: &ArchitectureSpec, phi: f64) -> Result<GiantScaling, FormulaError> {
    if !(phi.is_finite() && phi >= 0.0) {
        return Err(FormulaError::InvalidExponent(phi));
    }
    let model = CostModel::new(spec.clone())?;
    let compound = ScalingCoefficients {
        r: COMPOUND_GAMMA.powf(-phi),
        d: COMPOUND_ALPHA.powf(-phi),
        w: COMPOUND_BETA.powf(-phi),
    };
    let target = 2f64.powf(-phi);
    let upper = target * (1.0 + CORRECTION_TOLERANCE);
    let lower = target * (1.0 - CORRECTION_TOLERANCE);
    let base = f64::from(spec.base_resolution);
    let ratio_at = |r: f64, w: f64| model.ratio_unchecked(ScalingCoefficients { r, d: compound.d, w });

    let mut best: Option<(ScalingCoefficients, f64)> = None;
    let mut consider = |coeffs: ScalingCoefficients, ratio: f64| {
        let closer = best.is_none_or(|(_, b)| (ratio - target).abs() < (b - target).abs());
        if closer {
            best = Some((coeffs, ratio));
        }
        ratio >= lower
    };

    let mut resolution = crate::arch::scale_resolution(spec.base_resolution, compound.r);
    let mut r = compound.r;
    loop {
        let full = ratio_at(r, compound.w);
        let (w, ratio) = if full <= upper {
            (compound.w, full)
        } else {
            match bracket(|w| ratio_at(r, w), MIN_WIDTH_FRACTION * compound.w, compound.w, upper).below {
                Some(found) => found,
                None => (
                    MIN_WIDTH_FRACTION * compound.w,
                    ratio_at(r, MIN_WIDTH_FRACTION * compound.w),
                ),
            }
        };
        let coeffs = ScalingCoefficients { r, d: compound.d, w };
        if consider(coeffs, ratio) && ratio <= upper {
            break;
        }
        if resolution <= MIN_RESOLUTION {
            break;
        }
        resolution -= 1;
        r = f64::from(resolution) / base;
    }

    let (coeffs, _) = best.expect("at least one resolution is tried");
    let (_, cost) = model.evaluate(coeffs)?;
    let ratio = model.ratio_of(cost);
    Ok(GiantScaling {
        phi,
        compound,
        coeffs,
        cost,
        ratio,
        target,
        within_tolerance: (ratio - target).abs() <= CORRECTION_TOLERANCE * target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_identity() {
        let g = inversed_giant(&ArchitectureSpec::efficientnet_b0(), 0.0).unwrap();
        assert_eq!(g.coeffs, ScalingCoefficients::IDENTITY);
        assert_eq!(g.ratio, 1.0);
        assert!(g.within_tolerance);
    }

    #[test]
    fn one_step_matches_tuned_b_minus_one() {
        let g = inversed_giant(&ArchitectureSpec::efficientnet_b0(), 1.0).unwrap();
        assert!(g.within_tolerance, "{g:?}");
        assert!((g.coeffs.r - 0.86).abs() < 0.02, "{:?}", g.coeffs);
        assert!((g.coeffs.d - 0.83).abs() < 0.01);
        assert!((g.coeffs.w - 0.89).abs() < 0.08);
    }

    #[test]
    fn negative_exponent_rejected() {
        let spec = ArchitectureSpec::efficientnet_b0();
        assert!(matches!(
            inversed_giant(&spec, -1.0),
            Err(FormulaError::InvalidExponent(_))
        ));
        assert!(matches!(
            inversed_giant(&spec, f64::NAN),
            Err(FormulaError::InvalidExponent(_))
        ));
    }
}
