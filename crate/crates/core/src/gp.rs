//! Gaussian-process regression on the encoded unit cube.
//!
//! Matérn 5/2 kernel with one lengthscale per dimension. Targets are
//! standardized before fitting; predictions come back in the original units.
//! Kernel hyperparameters are chosen by maximizing the log marginal likelihood
//! from several starting points, with bounds enforced in log space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use thiserror::Error;

use crate::seed::SeedStream;

/// Lower limit on the noise variance.
pub const NOISE_FLOOR: f64 = 1e-10;

/// Diagonal jitter tried, in order, when the Cholesky factorization fails.
const JITTER_LADDER: [f64; 8] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite training target at row {0}")]
    NonFiniteTarget(usize),
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),
    #[error("covariance matrix is singular after jitter {jitter:e} (condition estimate {condition:e})")]
    Singular { jitter: f64, condition: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn isotropic(dim: usize, lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Self {
        KernelParams { lengthscales: vec![lengthscale; dim], signal_variance, noise_variance }
    }

    fn validate(&self, dim: usize) -> Result<(), GpError> {
        if self.lengthscales.len() != dim {
            return Err(GpError::DimensionMismatch { expected: dim, got: self.lengthscales.len() });
        }
        if self.lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(GpError::InvalidParams("lengthscales must be positive".into()));
        }
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(GpError::InvalidParams("signal variance must be positive".into()));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= NOISE_FLOOR) {
            return Err(GpError::InvalidParams(format!("noise variance must be >= {NOISE_FLOOR:e}")));
        }
        Ok(())
    }

    /// Prior covariance between two encoded points (noise excluded).
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let r = scaled_distance(a, b, &self.lengthscales);
        self.signal_variance * matern52(r)
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_variance.ln());
        v.push(self.noise_variance.ln());
        v
    }

    fn from_log(theta: &[f64]) -> Self {
        let k = theta.len() - 2;
        KernelParams {
            lengthscales: theta[..k].iter().map(|t| t.exp()).collect(),
            signal_variance: theta[k].exp(),
            noise_variance: theta[k + 1].exp().max(NOISE_FLOOR),
        }
    }
}

fn scaled_distance(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter().zip(b).zip(lengthscales).map(|((x, y), l)| ((x - y) / l).powi(2)).sum::<f64>().sqrt()
}

fn matern52(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Box constraints for hyperparameter fitting.
#[derive(Clone, Debug, PartialEq)]
pub struct FitBounds {
    pub lengthscale: (f64, f64),
    pub signal_variance: (f64, f64),
    pub noise_variance: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        FitBounds { lengthscale: (1e-3, 10.0), signal_variance: (1e-3, 10.0), noise_variance: (1e-8, 1.0) }
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub bounds: FitBounds,
    /// Random starting points in addition to the default one.
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: SeedStream,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { bounds: FitBounds::default(), restarts: 8, max_iters: 100, seed: SeedStream::new(0) }
    }
}

/// A fitted GP: the training set, the factorized covariance and the weights `(K + σ²I)⁻¹ y`.
#[derive(Clone, Debug)]
pub struct GpPosterior {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    params: KernelParams,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    ys: DVector<f64>,
    alpha: DVector<f64>,
}

struct Factorized {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

fn covariance(x: &[Vec<f64>], params: &KernelParams) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| params.kernel(&x[i], &x[j]))
}

fn factorize(mut k: DMatrix<f64>, noise: f64) -> Result<Factorized, GpError> {
    let n = k.nrows();
    for i in 0..n {
        k[(i, i)] += noise;
    }
    for jitter in JITTER_LADDER {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(kj) {
            if chol.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Ok(Factorized { chol, jitter });
            }
        }
    }
    let eig = k.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    Err(GpError::Singular { jitter: JITTER_LADDER[JITTER_LADDER.len() - 1], condition })
}

fn standardize(y: &[f64]) -> (f64, f64, DVector<f64>) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    (mean, scale, DVector::from_iterator(y.len(), y.iter().map(|v| (v - mean) / scale)))
}

fn check_inputs(x: &[Vec<f64>], y: &[f64]) -> Result<usize, GpError> {
    if x.len() != y.len() {
        return Err(GpError::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    let dim = x.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(GpError::DimensionMismatch { expected: 1, got: 0 });
    }
    if let Some(bad) = x.iter().find(|r| r.len() != dim) {
        return Err(GpError::DimensionMismatch { expected: dim, got: bad.len() });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(GpError::NonFiniteTarget(i));
    }
    Ok(dim)
}

impl GpPosterior {
    /// Conditions the GP on `(x, y)` with fixed kernel parameters.
    pub fn new(x: Vec<Vec<f64>>, y: &[f64], params: KernelParams) -> Result<Self, GpError> {
        if x.is_empty() {
            return Err(GpError::TooFewPoints { needed: 1, got: 0 });
        }
        let dim = check_inputs(&x, y)?;
        params.validate(dim)?;
        let (y_mean, y_scale, ys) = standardize(y);
        let f = factorize(covariance(&x, &params), params.noise_variance)?;
        let alpha = f.chol.solve(&ys);
        Ok(GpPosterior { x, y_mean, y_scale, params, jitter: f.jitter, chol: f.chol, ys, alpha })
    }

    /// Fits kernel hyperparameters by multi-start marginal-likelihood maximization, then conditions.
    pub fn fit(x: Vec<Vec<f64>>, y: &[f64], options: &FitOptions) -> Result<Self, GpError> {
        if x.len() < 2 {
            return Err(GpError::TooFewPoints { needed: 2, got: x.len() });
        }
        let dim = check_inputs(&x, y)?;
        let (_, _, ys) = standardize(y);
        let b = &options.bounds;
        let mut lo = vec![b.lengthscale.0.ln(); dim];
        lo.extend([b.signal_variance.0.ln(), b.noise_variance.0.max(NOISE_FLOOR).ln()]);
        let mut hi = vec![b.lengthscale.1.ln(); dim];
        hi.extend([b.signal_variance.1.ln(), b.noise_variance.1.ln()]);

        let mut starts = vec![KernelParams::isotropic(dim, 0.5, 1.0, 1e-3).to_log()];
        let mut rng = options.seed.child("gp-fit").rng();
        for _ in 0..options.restarts {
            starts.push(lo.iter().zip(&hi).map(|(l, h)| l + rng.random::<f64>() * (h - l)).collect());
        }

        let mut best: Option<(f64, Vec<f64>)> = None;
        for start in starts {
            let start: Vec<f64> = start.iter().zip(lo.iter().zip(&hi)).map(|(t, (l, h))| t.clamp(*l, *h)).collect();
            if let Some((value, theta)) = maximize_lml(&x, &ys, start, &lo, &hi, options.max_iters) {
                if best.as_ref().is_none_or(|(v, _)| value > *v) {
                    best = Some((value, theta));
                }
            }
        }
        match best {
            Some((_, theta)) => GpPosterior::new(x, y, KernelParams::from_log(&theta)),
            // Every start failed to factorize; report the failure from the default parameters.
            None => GpPosterior::new(x, y, KernelParams::isotropic(dim, 0.5, 1.0, b.noise_variance.1)),
        }
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.lengthscales.len()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Diagonal jitter added beyond the noise variance to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Mean and scale used to standardize the targets.
    pub fn target_scaling(&self) -> (f64, f64) {
        (self.y_mean, self.y_scale)
    }

    /// Predictive mean and variance of the latent function at `x`, in target units.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64), GpError> {
        if x.len() != self.dim() {
            return Err(GpError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let kstar = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| self.params.kernel(xi, x)));
        let mean = kstar.dot(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(&kstar).expect("triangular factor is non-singular");
        let var = (self.params.signal_variance - v.norm_squared()).max(0.0);
        Ok((self.y_mean + self.y_scale * mean, self.y_scale * self.y_scale * var))
    }

    /// Log marginal likelihood of the standardized targets under the current parameters.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.x.len() as f64;
        let logdet: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * self.ys.dot(&self.alpha) - logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Log marginal likelihood and its gradient with respect to the log-parameters
/// `[ln l_1 .. ln l_k, ln signal_variance, ln noise_variance]`.
pub fn lml_with_gradient(x: &[Vec<f64>], y: &DVector<f64>, log_params: &[f64]) -> Option<(f64, Vec<f64>)> {
    let params = KernelParams::from_log(log_params);
    let n = x.len();
    let dim = params.lengthscales.len();
    let kf = covariance(x, &params);
    let f = factorize(kf.clone(), params.noise_variance).ok()?;
    let alpha = f.chol.solve(y);
    let logdet: f64 = f.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let value = -0.5 * y.dot(&alpha) - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // dL/dθ = ½ tr((ααᵀ − K⁻¹) ∂K/∂θ)
    let w = &alpha * alpha.transpose() - f.chol.inverse();
    let mut grad = vec![0.0; dim + 2];
    for i in 0..n {
        for j in 0..n {
            let wij = w[(i, j)];
            if i != j {
                let r = scaled_distance(&x[i], &x[j], &params.lengthscales);
                let s = SQRT5 * r;
                let common = params.signal_variance * (5.0 / 3.0) * (1.0 + s) * (-s).exp();
                for (d, l) in params.lengthscales.iter().enumerate() {
                    grad[d] += 0.5 * wij * common * ((x[i][d] - x[j][d]) / l).powi(2);
                }
            }
            grad[dim] += 0.5 * wij * kf[(i, j)];
        }
        grad[dim + 1] += 0.5 * w[(i, i)] * params.noise_variance;
    }
    Some((value, grad))
}

/// Projected gradient ascent with backtracking, in log-parameter space.
fn maximize_lml(
    x: &[Vec<f64>],
    y: &DVector<f64>,
    start: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    max_iters: usize,
) -> Option<(f64, Vec<f64>)> {
    let project = |t: Vec<f64>| -> Vec<f64> { t.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect() };
    let (mut value, mut grad) = lml_with_gradient(x, y, &start)?;
    let mut theta = start;
    let mut step = 0.5;
    for _ in 0..max_iters {
        let mut improved = false;
        while step > 1e-8 {
            let cand = project(theta.iter().zip(&grad).map(|(t, g)| t + step * g).collect());
            let moved: f64 = cand.iter().zip(&theta).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            if moved == 0.0 {
                break;
            }
            match lml_with_gradient(x, y, &cand) {
                Some((v, g)) if v > value + 1e-4 * moved / step => {
                    let gain = v - value;
                    theta = cand;
                    value = v;
                    grad = g;
                    improved = gain > 1e-9;
                    step *= 2.0;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !improved {
            break;
        }
    }
    Some((value, theta))
}
