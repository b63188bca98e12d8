//! Log-marginal-likelihood grid search over kernel and noise hyperparameters.

use std::cmp::Ordering;

use super::linalg::{solve_lower, SquareMatrix};
use super::{factorize, validate_noise, validate_pairs, GprError, Kernel, MeanFunction};

/// Fewest pairs accepted by [`fit_hyperparameters`].
pub const MIN_PAIRS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    pub kernel: Kernel,
    pub noise_variance: f64,
    pub log_likelihood: f64,
}

/// `n` points spaced evenly in log space from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo * (step * i as f64).exp() })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperparameterGrid {
    pub lengthscales: Vec<f64>,
    pub signal_variances: Vec<f64>,
    pub noise_variances: Vec<f64>,
}

impl Default for HyperparameterGrid {
    fn default() -> Self {
        Self {
            lengthscales: log_space(0.05, 2.0, 17),
            signal_variances: log_space(0.01, 4.0, 9),
            noise_variances: log_space(1e-4, 0.25, 9),
        }
    }
}

impl HyperparameterGrid {
    /// Every grid point with its log marginal likelihood, `None` where the
    /// factorization failed.
    pub fn evaluate(&self, pairs: &[(f64, f64)], mean: MeanFunction) -> Vec<(Kernel, f64, Option<f64>)> {
        let mut out =
            Vec::with_capacity(self.lengthscales.len() * self.signal_variances.len() * self.noise_variances.len());
        for &l in &self.lengthscales {
            for &s in &self.signal_variances {
                for &n in &self.noise_variances {
                    let kernel = Kernel {
                        lengthscale: l,
                        signal_variance: s,
                    };
                    out.push((kernel, n, log_marginal_likelihood(pairs, kernel, n, mean).ok()));
                }
            }
        }
        out
    }

    /// The grid argmax. Exact ties prefer larger lengthscale, then larger noise,
    /// then smaller signal variance.
    pub fn search(&self, pairs: &[(f64, f64)], mean: MeanFunction) -> Result<Hyperparameters, GprError> {
        validate_pairs(pairs, MIN_PAIRS)?;
        let mut best: Option<Hyperparameters> = None;
        for (kernel, noise_variance, lml) in self.evaluate(pairs, mean) {
            let Some(log_likelihood) = lml else { continue };
            let candidate = Hyperparameters {
                kernel,
                noise_variance,
                log_likelihood,
            };
            if best.is_none_or(|b| prefer(&candidate, &b) == Ordering::Greater) {
                best = Some(candidate);
            }
        }
        best.ok_or(GprError::NoFeasibleHyperparameters)
    }
}

fn prefer(a: &Hyperparameters, b: &Hyperparameters) -> Ordering {
    a.log_likelihood
        .total_cmp(&b.log_likelihood)
        .then(a.kernel.lengthscale.total_cmp(&b.kernel.lengthscale))
        .then(a.noise_variance.total_cmp(&b.noise_variance))
        .then(b.kernel.signal_variance.total_cmp(&a.kernel.signal_variance))
}

/// `−½ yᵀA⁻¹y − ½ log|A| − (m/2) log 2π` with `A = K + σ²I` (plus any jitter
/// the factorization needed) and `y` centered by the mean function.
pub fn log_marginal_likelihood(
    pairs: &[(f64, f64)],
    kernel: Kernel,
    noise_variance: f64,
    mean: MeanFunction,
) -> Result<f64, GprError> {
    kernel.validate()?;
    validate_noise(noise_variance)?;
    validate_pairs(pairs, 2)?;
    let inputs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let targets: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let offset = mean.offset(&targets);
    let centered: Vec<f64> = targets.iter().map(|y| y - offset).collect();
    let factor = factorize(&kernel, &inputs, noise_variance, false)?.factor;
    Ok(lml_from_factor(&factor, &centered))
}

fn lml_from_factor(factor: &SquareMatrix, y: &[f64]) -> f64 {
    let z = solve_lower(factor, y);
    let quad: f64 = z.iter().map(|v| v * v).sum();
    let log_det: f64 = (0..factor.dim()).map(|i| factor.get(i, i).ln()).sum::<f64>() * 2.0;
    let m = y.len() as f64;
    -0.5 * quad - 0.5 * log_det - 0.5 * m * (2.0 * std::f64::consts::PI).ln()
}

/// Grid search on the default grid.
pub fn fit_hyperparameters(pairs: &[(f64, f64)], mean: MeanFunction) -> Result<Hyperparameters, GprError> {
    HyperparameterGrid::default().search(pairs, mean)
}
