//! Scalar search on realized FLOPs ratios.
//!
//! Discretization makes the realized ratio a nondecreasing step function of
//! each coefficient, so the searches here bracket the target by bisection and
//! stop on a tolerance band instead of exact equality.

/// Bisection steps used by every search in this module.
pub(crate) const SEARCH_ITERATIONS: usize = 40;

/// Relative deviation of `value` from `target`.
pub(crate) fn relative_error(value: f64, target: f64) -> f64 {
    (value - target).abs() / target
}

/// Points on either side of a target for a nondecreasing function.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Bracket {
    /// Largest probed argument with `f(x) <= target`.
    pub below: Option<(f64, f64)>,
    /// Smallest probed argument with `f(x) > target`.
    pub above: Option<(f64, f64)>,
}

impl Bracket {
    /// The side whose value is relatively closest to `target`; ties go below.
    pub fn closest(&self, target: f64) -> (f64, f64) {
        match (self.below, self.above) {
            (Some(b), Some(a)) => {
                if relative_error(b.1, target) <= relative_error(a.1, target) {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("bracket always probes its endpoints"),
        }
    }
}

/// Brackets `target` on `[lo, hi]` for a nondecreasing `f`.
pub(crate) fn bracket(f: impl Fn(f64) -> f64, lo: f64, hi: f64, target: f64) -> Bracket {
    debug_assert!(lo <= hi);
    let f_lo = f(lo);
    if f_lo > target {
        return Bracket {
            below: None,
            above: Some((lo, f_lo)),
        };
    }
    let f_hi = f(hi);
    if f_hi <= target {
        return Bracket {
            below: Some((hi, f_hi)),
            above: None,
        };
    }
    let (mut below, mut above) = ((lo, f_lo), (hi, f_hi));
    for _ in 0..SEARCH_ITERATIONS {
        let mid = 0.5 * (below.0 + above.0);
        let f_mid = f(mid);
        if f_mid <= target {
            below = (mid, f_mid);
        } else {
            above = (mid, f_mid);
        }
    }
    Bracket {
        below: Some(below),
        above: Some(above),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brackets_a_step_function() {
        let step = |x: f64| (x * 10.0).floor() / 10.0;
        let b = bracket(step, 0.0, 1.0, 0.55);
        let (below, above) = (b.below.unwrap(), b.above.unwrap());
        assert_eq!(below.1, 0.5);
        assert_eq!(above.1, 0.6);
        assert!(above.0 - below.0 < 1e-9);
        assert_eq!(b.closest(0.52).1, 0.5);
        assert_eq!(b.closest(0.58).1, 0.6);
    }

    #[test]
    fn target_outside_range() {
        let b = bracket(|x| x, 1.0, 2.0, 0.5);
        assert!(b.below.is_none());
        assert_eq!(b.closest(0.5), (1.0, 1.0));
        let b = bracket(|x| x, 1.0, 2.0, 5.0);
        assert_eq!(b.closest(5.0), (2.0, 2.0));
    }
}
