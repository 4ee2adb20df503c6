//! Maximum-likelihood fitting for logistic and linear regression with a
//! Gaussian approximation of the MLE sampling distribution.
//!
//! The logistic fit is Newton / iteratively reweighted least squares; its
//! covariance is the inverse observed Fisher information at the MLE (equal
//! to the expected information under the canonical logit link). The linear
//! fit is ordinary least squares via SVD with covariance
//! `sigma_hat^2 (X'X)^-1`. [`bootstrap_mle`] provides the nonparametric
//! case-resampling alternative.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{BoundDataset, ResponseKind};
use crate::error::ErrorClass;
use crate::seeding;

/// Default gradient max-norm tolerance for the logistic fit.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default Newton iteration cap.
pub const DEFAULT_MAX_ITER: usize = 100;
/// Coefficient max-norm beyond which the fit is declared separated.
pub const SEPARATION_BOUND: f64 = 1e4;

#[derive(Debug, Error)]
pub enum GlmError {
    #[error("expected {expected:?} response for this fit")]
    WrongResponseKind { expected: ResponseKind },
    #[error("design matrix is rank deficient or n <= d (n = {n}, d = {d})")]
    SingularMatrix { n: usize, d: usize },
    #[error("no convergence after {iterations} iterations (gradient max-norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },
    #[error(
        "quasi-complete separation: coefficient max-norm exceeded {bound:.1e} at iteration {iterations}"
    )]
    Separation { iterations: usize, bound: f64 },
    #[error("degenerate data: residual variance is zero (coefficients {coefficients:?})")]
    DegenerateData { coefficients: Vec<f64> },
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("bootstrap failed: {failed} of {reps} replicates did not converge")]
    BootstrapFailure { failed: usize, reps: usize },
}

impl GlmError {
    pub fn class(&self) -> ErrorClass {
        match self {
            GlmError::WrongResponseKind { .. } | GlmError::BadArgument(_) => ErrorClass::Validation,
            _ => ErrorClass::Numeric,
        }
    }
}

/// Univariate normal distribution, the atom for priors, MLE marginals, and
/// posterior marginals. Invariant: finite mean, strictly positive finite sd.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianDist {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianDist {
    pub fn new(mean: f64, sd: f64) -> Result<GaussianDist, GlmError> {
        if !mean.is_finite() || !sd.is_finite() {
            return Err(GlmError::BadArgument(format!(
                "non-finite Gaussian parameters (mean {mean}, sd {sd})"
            )));
        }
        if sd <= 0.0 {
            return Err(GlmError::BadArgument(format!(
                "Gaussian sd must be positive, got {sd}"
            )));
        }
        Ok(GaussianDist { mean, sd })
    }

    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }

    /// Probability density at `x`.
    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        (-0.5 * z * z).exp() / (self.sd * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// Natural log of the density at `x`.
    pub fn log_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * z * z - self.sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// A maximum-likelihood fit with its Gaussian sampling-distribution
/// approximation.
#[derive(Debug, Clone)]
pub struct MLEFit {
    pub coefficients: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub marginals: Vec<GaussianDist>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual variance estimate RSS/(n-d); linear model only.
    pub noise_variance: Option<f64>,
    /// Coefficient names in design-matrix order (intercept first if present).
    pub names: Vec<String>,
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
fn log1p_exp(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Bernoulli log-likelihood with logit link at `beta`.
pub fn logistic_loglik(design: &DMatrix<f64>, response: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = design * beta;
    eta.iter()
        .zip(response.iter())
        .map(|(&e, &y)| y * e - log1p_exp(e))
        .sum()
}

/// Gradient of [`logistic_loglik`] with respect to `beta`: X'(y - p).
pub fn logistic_grad(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    beta: &DVector<f64>,
) -> DVector<f64> {
    let eta = design * beta;
    let resid = DVector::from_fn(eta.len(), |i, _| response[i] - sigmoid(eta[i]));
    design.transpose() * resid
}

/// Gaussian log-likelihood at `beta` with fixed noise variance.
pub fn linear_loglik(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    beta: &DVector<f64>,
    noise_variance: f64,
) -> f64 {
    let resid = response - design * beta;
    let n = response.len() as f64;
    -0.5 * n * (2.0 * std::f64::consts::PI * noise_variance).ln()
        - resid.norm_squared() / (2.0 * noise_variance)
}

/// Gradient of [`linear_loglik`] with respect to `beta`: X'(y - Xb)/sigma^2.
pub fn linear_grad(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    beta: &DVector<f64>,
    noise_variance: f64,
) -> DVector<f64> {
    let resid = response - design * beta;
    design.transpose() * resid / noise_variance
}

fn marginals_from(
    coefficients: &DVector<f64>,
    covariance: &DMatrix<f64>,
) -> Result<Vec<GaussianDist>, GlmError> {
    coefficients
        .iter()
        .enumerate()
        .map(|(j, &c)| GaussianDist::new(c, covariance[(j, j)].sqrt()))
        .collect()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Weighted cross-product X' diag(w) X.
fn weighted_gram(design: &DMatrix<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
    let d = design.ncols();
    let mut gram = DMatrix::zeros(d, d);
    for i in 0..design.nrows() {
        let w = weights[i];
        let row = design.row(i);
        for a in 0..d {
            let wa = w * row[a];
            for b in a..d {
                gram[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    gram
}

/// Fits logistic regression by Newton/IRLS.
///
/// Converges when the score max-norm drops to `tol`; distinguishes plain
/// iteration exhaustion from quasi-complete separation (coefficient blow-up
/// past [`SEPARATION_BOUND`]).
pub fn fit_logistic_mle(
    data: &BoundDataset,
    tol: f64,
    max_iter: usize,
) -> Result<MLEFit, GlmError> {
    if data.spec.response_kind != ResponseKind::Binary {
        return Err(GlmError::WrongResponseKind {
            expected: ResponseKind::Binary,
        });
    }
    let x = &data.design;
    let y = &data.response;
    let (n, d) = (x.nrows(), x.ncols());
    if n < d {
        return Err(GlmError::SingularMatrix { n, d });
    }

    let mut beta = DVector::zeros(d);
    let mut iterations = 0;
    loop {
        let grad = logistic_grad(x, y, &beta);
        let grad_norm = grad.amax();
        if grad_norm <= tol {
            break;
        }
        if iterations >= max_iter {
            return Err(GlmError::NonConvergence {
                iterations,
                grad_norm,
            });
        }
        let eta = x * &beta;
        // Floor on the IRLS weights keeps the Hessian invertible when
        // fitted probabilities saturate; separation is caught by the
        // coefficient bound below.
        let weights = DVector::from_fn(n, |i, _| {
            let p = sigmoid(eta[i]);
            (p * (1.0 - p)).max(1e-10)
        });
        let hessian = weighted_gram(x, &weights);
        let chol = hessian
            .clone()
            .cholesky()
            .ok_or(GlmError::SingularMatrix { n, d })?;
        beta += chol.solve(&grad);
        iterations += 1;
        if beta.amax() > SEPARATION_BOUND {
            return Err(GlmError::Separation {
                iterations,
                bound: SEPARATION_BOUND,
            });
        }
    }

    let eta = x * &beta;
    let weights = DVector::from_fn(n, |i, _| {
        let p = sigmoid(eta[i]);
        p * (1.0 - p)
    });
    let information = weighted_gram(x, &weights);
    let chol = information
        .cholesky()
        .ok_or(GlmError::SingularMatrix { n, d })?;
    let mut covariance = chol.inverse();
    symmetrize(&mut covariance);
    let marginals = marginals_from(&beta, &covariance)?;
    let loglik = logistic_loglik(x, y, &beta);

    Ok(MLEFit {
        coefficients: beta,
        covariance,
        marginals,
        loglik,
        iterations,
        converged: true,
        noise_variance: None,
        names: data.spec.coefficient_names(),
    })
}

/// Fits linear regression by ordinary least squares (SVD solve).
///
/// `noise_variance` is RSS/(n-d); a numerically zero residual sum of
/// squares raises [`GlmError::DegenerateData`] carrying the coefficients,
/// since a zero-sd sampling distribution cannot be represented.
pub fn fit_linear_mle(data: &BoundDataset) -> Result<MLEFit, GlmError> {
    if data.spec.response_kind != ResponseKind::Continuous {
        return Err(GlmError::WrongResponseKind {
            expected: ResponseKind::Continuous,
        });
    }
    let x = &data.design;
    let y = &data.response;
    let (n, d) = (x.nrows(), x.ncols());
    if n <= d {
        return Err(GlmError::SingularMatrix { n, d });
    }

    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > max_sv * 1e-12)
        .count();
    if rank < d {
        return Err(GlmError::SingularMatrix { n, d });
    }
    let beta = svd
        .solve(y, max_sv * 1e-12)
        .map_err(|_| GlmError::SingularMatrix { n, d })?;

    let resid = y - x * &beta;
    let rss = resid.norm_squared();
    if rss <= 100.0 * f64::EPSILON * y.norm_squared().max(1.0) {
        return Err(GlmError::DegenerateData {
            coefficients: beta.iter().copied().collect(),
        });
    }
    let noise_variance = rss / (n - d) as f64;

    let gram = x.transpose() * x;
    let chol = gram.cholesky().ok_or(GlmError::SingularMatrix { n, d })?;
    let mut covariance = chol.inverse() * noise_variance;
    symmetrize(&mut covariance);
    let marginals = marginals_from(&beta, &covariance)?;
    // Maximized Gaussian log-likelihood uses the ML variance RSS/n.
    let loglik = linear_loglik(x, y, &beta, rss / n as f64);

    Ok(MLEFit {
        coefficients: beta,
        covariance,
        marginals,
        loglik,
        iterations: 0,
        converged: true,
        noise_variance: Some(noise_variance),
        names: data.spec.coefficient_names(),
    })
}

/// Fits the model matching the spec's response kind.
pub fn fit_mle(data: &BoundDataset, tol: f64, max_iter: usize) -> Result<MLEFit, GlmError> {
    match data.spec.response_kind {
        ResponseKind::Binary => fit_logistic_mle(data, tol, max_iter),
        ResponseKind::Continuous => fit_linear_mle(data),
    }
}

/// Case-resampling bootstrap of the MLE.
#[derive(Debug, Clone)]
pub struct BootstrapSummary {
    /// Coefficient vectors of the convergent replicates.
    pub replicates: Vec<DVector<f64>>,
    /// Per-coefficient Gaussian summary (bootstrap mean and sd).
    pub marginals: Vec<GaussianDist>,
    /// Replicates dropped for non-convergence.
    pub skipped: usize,
    pub names: Vec<String>,
}

/// Resamples `reps` datasets of n rows with replacement and refits each.
///
/// Replicate r uses an RNG derived from (`seed`, r), so results are
/// independent of evaluation order and reproducible for a fixed seed.
/// Non-convergent replicates are skipped and counted; more than half
/// failing aborts with [`GlmError::BootstrapFailure`].
pub fn bootstrap_mle(
    data: &BoundDataset,
    reps: usize,
    seed: u64,
) -> Result<BootstrapSummary, GlmError> {
    if reps < 2 {
        return Err(GlmError::BadArgument(format!(
            "bootstrap needs reps >= 2, got {reps}"
        )));
    }
    let n = data.n;
    let mut replicates = Vec::with_capacity(reps);
    let mut skipped = 0usize;
    for rep in 0..reps {
        let mut rng = ChaCha20Rng::seed_from_u64(seeding::derive(seed, rep as u64));
        let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let resampled = data.subset(&rows);
        match fit_mle(&resampled, DEFAULT_TOL, DEFAULT_MAX_ITER) {
            Ok(fit) => replicates.push(fit.coefficients),
            Err(_) => skipped += 1,
        }
    }
    if skipped * 2 > reps || replicates.len() < 2 {
        return Err(GlmError::BootstrapFailure {
            failed: skipped,
            reps,
        });
    }

    let d = replicates[0].len();
    let m = replicates.len() as f64;
    let mut marginals = Vec::with_capacity(d);
    for j in 0..d {
        let mean = replicates.iter().map(|r| r[j]).sum::<f64>() / m;
        let ss = replicates
            .iter()
            .map(|r| (r[j] - mean).powi(2))
            .sum::<f64>();
        let sd = (ss / (m - 1.0)).sqrt();
        marginals.push(GaussianDist::new(mean, sd)?);
    }

    Ok(BootstrapSummary {
        replicates,
        marginals,
        skipped,
        names: data.spec.coefficient_names(),
    })
}
