//! Exact Gaussian-process regression from FLOPs ratio to one scaling coefficient.
//!
//! The prior mean is zero unless [`MeanFunction::Constant`] is requested, in
//! which case the sample mean of the targets is subtracted before fitting and
//! added back to every prediction. Far from the data a zero-mean model reverts
//! to 0, so callers that need coefficients near 1 must clamp.

mod hyper;
mod linalg;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::hyper::{fit_hyperparameters, log_marginal_likelihood, HyperparameterGrid, Hyperparameters, MIN_PAIRS};
use self::linalg::{cholesky, reconstruction_error, solve_lower, solve_upper_transposed, SquareMatrix};

/// Jitter added to the diagonal, in order, when the plain factorization fails.
pub const JITTER_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Largest accepted elementwise error of `L Lᵀ` against the regularized Gram matrix.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-8;

/// Negative posterior variances smaller than this in magnitude are rounding noise.
pub const VARIANCE_ROUNDING: f64 = 1e-10;

/// Upper bound on training inputs: the sampling band's upper edge.
pub const MAX_INPUT: f64 = 1.05;

#[derive(Debug, Error)]
pub enum GprError {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid training data: {0}")]
    InvalidData(String),
    #[error(
        "Gram matrix is not positive definite even with jitter {jitter:e}; \
         check for duplicate inputs or use a positive noise variance"
    )]
    IllConditioned { jitter: f64 },
    #[error("test point {0} is not finite")]
    NonFiniteInput(f64),
    #[error("posterior variance {0:e} is negative beyond rounding")]
    NegativeVariance(f64),
    #[error("no hyperparameter grid point could be factorized")]
    NoFeasibleHyperparameters,
    #[error("stored model does not reproduce its factorization (error {0:e})")]
    Corrupt(f64),
    #[error(transparent)]
    Parse(#[from] serde_json::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Squared-exponential covariance `σ_f² · exp(−Δ² / (2ℓ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub lengthscale: f64,
    pub signal_variance: f64,
}

impl Kernel {
    pub fn new(lengthscale: f64, signal_variance: f64) -> Result<Self, GprError> {
        let kernel = Self {
            lengthscale,
            signal_variance,
        };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn validate(&self) -> Result<(), GprError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.lengthscale) || !ok(self.signal_variance) {
            return Err(GprError::InvalidKernel(format!(
                "lengthscale {} and signal variance {} must be positive and finite",
                self.lengthscale, self.signal_variance
            )));
        }
        Ok(())
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        self.signal_variance * (-d * d / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }
}

/// Which coefficient a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    R,
    D,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::R => "r",
            Target::D => "d",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanFunction {
    #[default]
    Zero,
    /// Constant prior mean equal to the sample mean of the targets.
    Constant,
}

impl MeanFunction {
    fn offset(self, targets: &[f64]) -> f64 {
        match self {
            MeanFunction::Zero => 0.0,
            MeanFunction::Constant => targets.iter().sum::<f64>() / targets.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

/// A fitted regressor. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GprModel {
    target: Option<Target>,
    kernel: Kernel,
    noise_variance: f64,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    mean: MeanFunction,
    offset: f64,
    jitter: f64,
    factor: SquareMatrix,
    alpha: Vec<f64>,
}

/// Factorization of `K + σ²I`, escalating jitter on failure.
struct Factorized {
    factor: SquareMatrix,
    jitter: f64,
}

fn gram(kernel: &Kernel, inputs: &[f64], diagonal: f64) -> SquareMatrix {
    SquareMatrix::from_fn(inputs.len(), |i, j| {
        let k = kernel.eval(inputs[i], inputs[j]);
        if i == j {
            k + diagonal
        } else {
            k
        }
    })
}

/// True when two inputs coincide, which makes the noiseless Gram matrix singular.
fn has_duplicates(inputs: &[f64]) -> bool {
    let mut sorted = inputs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).any(|w| w[0] == w[1])
}

/// With `verify`, a factor is only accepted if it reconstructs the matrix
/// within [`RECONSTRUCTION_TOLERANCE`].
fn factorize(kernel: &Kernel, inputs: &[f64], noise: f64, verify: bool) -> Result<Factorized, GprError> {
    // Jitter would hide an exactly singular system; refuse it instead.
    if noise == 0.0 && has_duplicates(inputs) {
        return Err(GprError::IllConditioned { jitter: 0.0 });
    }
    for jitter in std::iter::once(0.0).chain(JITTER_LADDER) {
        let a = gram(kernel, inputs, noise + jitter);
        if let Some(factor) = cholesky(&a) {
            if !verify || reconstruction_error(&factor, &a) <= RECONSTRUCTION_TOLERANCE {
                return Ok(Factorized { factor, jitter });
            }
        }
    }
    Err(GprError::IllConditioned {
        jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

fn validate_pairs(pairs: &[(f64, f64)], min: usize) -> Result<(), GprError> {
    if pairs.len() < min {
        return Err(GprError::InvalidData(format!(
            "need at least {min} training pairs, got {}",
            pairs.len()
        )));
    }
    for &(c, y) in pairs {
        if !c.is_finite() || !y.is_finite() {
            return Err(GprError::InvalidData(format!("non-finite pair ({c}, {y})")));
        }
        if c <= 0.0 || c > MAX_INPUT {
            return Err(GprError::InvalidData(format!("input {c} outside (0, {MAX_INPUT}]")));
        }
    }
    Ok(())
}

fn validate_noise(noise: f64) -> Result<(), GprError> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(GprError::InvalidKernel(format!(
            "noise variance {noise} must be finite and non-negative"
        )));
    }
    Ok(())
}

impl GprModel {
    /// Fits a zero-mean model.
    pub fn fit(pairs: &[(f64, f64)], kernel: Kernel, noise_variance: f64) -> Result<Self, GprError> {
        Self::fit_with_mean(pairs, kernel, noise_variance, MeanFunction::Zero)
    }

    pub fn fit_with_mean(
        pairs: &[(f64, f64)],
        kernel: Kernel,
        noise_variance: f64,
        mean: MeanFunction,
    ) -> Result<Self, GprError> {
        kernel.validate()?;
        validate_noise(noise_variance)?;
        validate_pairs(pairs, 2)?;
        let inputs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let targets: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let Factorized { factor, jitter } = factorize(&kernel, &inputs, noise_variance, true)?;
        let offset = mean.offset(&targets);
        let centered: Vec<f64> = targets.iter().map(|y| y - offset).collect();
        let alpha = solve_upper_transposed(&factor, &solve_lower(&factor, &centered));
        Ok(Self {
            target: None,
            kernel,
            noise_variance,
            inputs,
            targets,
            mean,
            offset,
            jitter,
            factor,
            alpha,
        })
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = Some(target);
        self
    }

    pub fn target(&self) -> Option<Target> {
        self.target
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn mean_function(&self) -> MeanFunction {
        self.mean
    }

    /// Diagonal jitter that the factorization needed, 0 when none.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// `K + σ²I + jitter·I` as an explicit matrix, row-major.
    pub fn regularized_gram(&self) -> Vec<Vec<f64>> {
        let a = gram(&self.kernel, &self.inputs, self.noise_variance + self.jitter);
        let n = a.dim();
        (0..n).map(|i| (0..n).map(|j| a.get(i, j)).collect()).collect()
    }

    /// The lower-triangular factor, row-major.
    pub fn factor(&self) -> Vec<Vec<f64>> {
        let n = self.factor.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.factor.get(i, j)).collect())
            .collect()
    }

    pub fn predict(&self, c: f64) -> Result<Posterior, GprError> {
        if !c.is_finite() {
            return Err(GprError::NonFiniteInput(c));
        }
        let k_star: Vec<f64> = self.inputs.iter().map(|&x| self.kernel.eval(c, x)).collect();
        let mean = self.offset + k_star.iter().zip(&self.alpha).map(|(k, a)| k * a).sum::<f64>();
        let v = solve_lower(&self.factor, &k_star);
        let prior = self.kernel.eval(c, c) + self.noise_variance;
        let mut variance = prior - v.iter().map(|x| x * x).sum::<f64>();
        if variance < 0.0 {
            if variance > -VARIANCE_ROUNDING {
                variance = 0.0;
            } else {
                return Err(GprError::NegativeVariance(variance));
            }
        }
        Ok(Posterior { mean, variance })
    }

    pub fn to_json(&self) -> Result<String, GprError> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    /// Restores a model, refactorizing and checking the factor against the Gram matrix.
    pub fn from_json(text: &str) -> Result<Self, GprError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.inputs.len() != file.targets.len() {
            return Err(GprError::InvalidData(format!(
                "{} inputs but {} targets",
                file.inputs.len(),
                file.targets.len()
            )));
        }
        let pairs: Vec<(f64, f64)> = file.inputs.iter().copied().zip(file.targets.iter().copied()).collect();
        let kernel = Kernel::new(file.lengthscale, file.signal_variance)?;
        let mean = if file.constant_mean {
            MeanFunction::Constant
        } else {
            MeanFunction::Zero
        };
        let mut model = Self::fit_with_mean(&pairs, kernel, file.noise_variance, mean)?;
        model.target = file.target;
        let a = gram(&model.kernel, &model.inputs, model.noise_variance + model.jitter);
        let err = reconstruction_error(&model.factor, &a);
        if err > RECONSTRUCTION_TOLERANCE {
            return Err(GprError::Corrupt(err));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), GprError> {
        let text = self.to_json()?;
        std::fs::write(path, text + "\n").map_err(|source| GprError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, GprError> {
        let text = std::fs::read_to_string(path).map_err(|source| GprError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            target: self.target,
            lengthscale: self.kernel.lengthscale,
            signal_variance: self.kernel.signal_variance,
            noise_variance: self.noise_variance,
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
            constant_mean: self.mean == MeanFunction::Constant,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<Target>,
    lengthscale: f64,
    signal_variance: f64,
    noise_variance: f64,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    constant_mean: bool,
}
