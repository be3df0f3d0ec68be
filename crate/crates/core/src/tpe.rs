//! Tree-structured Parzen estimator over the encoded unit cube.
//!
//! Observations are split at a score quantile: the top `ceil(gamma * n)`
//! trials form the "good" set (scores are maximized), the rest the "bad" set.
//! Each set gets an independent per-dimension density: a truncated-Gaussian
//! KDE mixed with a uniform prior for continuous and integer coordinates, and
//! smoothed choice frequencies for categorical ones. Candidates are drawn from
//! the good density `l` and the one maximizing `l / g` is proposed.

use rand::Rng;
use statrs::function::erf::erfc_inv;
use thiserror::Error;

use crate::acquisition::normal_cdf;
use crate::seed::SeedStream;
use crate::space::{Config, SearchSpace};

pub const DEFAULT_GAMMA: f64 = 0.25;
pub const DEFAULT_CANDIDATES: usize = 24;
pub const DEFAULT_MIN_STARTUP: usize = 5;
/// Smallest KDE bandwidth, as a fraction of the unit interval.
pub const MIN_BANDWIDTH: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum TpeError {
    #[error("TPE needs at least 2 successful trials, got {0}")]
    InsufficientHistory(usize),
    #[error("gamma must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("good and bad sets must both be non-empty")]
    EmptySet,
}

/// A scored, encoded configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub index: usize,
    pub score: f64,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub good: Vec<Observation>,
    pub bad: Vec<Observation>,
    /// Lowest score inside the good set.
    pub y_star: f64,
}

/// Partitions observations into the top quantile and the rest.
/// Ties are ordered by index, so earlier trials enter the good set first.
pub fn split(observations: &[Observation], gamma: f64) -> Result<Split, TpeError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(TpeError::InvalidGamma(gamma));
    }
    let n = observations.len();
    if n < 2 {
        return Err(TpeError::InsufficientHistory(n));
    }
    let mut sorted: Vec<&Observation> = observations.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    let n_good = ((gamma * n as f64).ceil() as usize).clamp(1, n - 1);
    let good: Vec<Observation> = sorted[..n_good].iter().map(|o| (*o).clone()).collect();
    let bad = sorted[n_good..].iter().map(|o| (*o).clone()).collect();
    let y_star = good.last().expect("n_good >= 1").score;
    Ok(Split { good, bad, y_star })
}

/// Density of one coordinate.
#[derive(Clone, Debug, PartialEq)]
pub enum DimDensity {
    /// Equal-weight mixture of a uniform prior on `[0, 1]` and one Gaussian per
    /// centre, each truncated to `[0, 1]`.
    Kde { centres: Vec<f64>, bandwidth: f64, masses: Vec<f64> },
    /// Choice probabilities `(count_j + 1/C) / (m + 1)`.
    Categorical { probs: Vec<f64> },
}

impl DimDensity {
    fn kde(centres: Vec<f64>) -> Self {
        let m = centres.len() as f64;
        let bandwidth = if centres.len() > 1 {
            let mean = centres.iter().sum::<f64>() / m;
            let sd = (centres.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
            // Scott's rule
            (sd * m.powf(-0.2)).max(MIN_BANDWIDTH)
        } else {
            MIN_BANDWIDTH
        };
        let masses = centres
            .iter()
            .map(|c| normal_cdf((1.0 - c) / bandwidth) - normal_cdf((0.0 - c) / bandwidth))
            .collect();
        DimDensity::Kde { centres, bandwidth, masses }
    }

    fn categorical(bins: &[usize], choices: usize) -> Self {
        let m = bins.len() as f64;
        let mut probs = vec![1.0 / choices as f64; choices];
        for &b in bins {
            probs[b] += 1.0;
        }
        probs.iter_mut().for_each(|p| *p /= m + 1.0);
        DimDensity::Categorical { probs }
    }

    /// Density with respect to the unit interval at coordinate `u`.
    pub fn pdf(&self, u: f64) -> f64 {
        match self {
            DimDensity::Kde { centres, bandwidth, masses } => {
                let mut total = 1.0;
                for (c, z) in centres.iter().zip(masses) {
                    let t = (u - c) / bandwidth;
                    total += (-0.5 * t * t).exp() / (bandwidth * (2.0 * std::f64::consts::PI).sqrt() * z);
                }
                total / (centres.len() as f64 + 1.0)
            }
            DimDensity::Categorical { probs } => {
                let c = probs.len();
                probs[bin_of(u, c)] * c as f64
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DimDensity::Kde { centres, bandwidth, .. } => {
                let k = rng.random_range(0..=centres.len());
                if k == centres.len() {
                    return rng.random::<f64>();
                }
                let c = centres[k];
                let lo = normal_cdf(-c / bandwidth);
                let hi = normal_cdf((1.0 - c) / bandwidth);
                let p = (lo + rng.random::<f64>() * (hi - lo)).clamp(1e-300, 1.0 - 1e-16);
                // Φ⁻¹(p) = -√2 erfc⁻¹(2p)
                (c - bandwidth * std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)).clamp(0.0, 1.0)
            }
            DimDensity::Categorical { probs } => {
                let mut u: f64 = rng.random();
                let mut j = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    if u < *p {
                        j = i;
                        break;
                    }
                    u -= p;
                }
                (j as f64 + 0.5) / probs.len() as f64
            }
        }
    }
}

fn bin_of(u: f64, m: usize) -> usize {
    ((u * m as f64).floor() as usize).min(m - 1)
}

/// Product densities for the good (`l`) and bad (`g`) sets.
#[derive(Clone, Debug, PartialEq)]
pub struct TpeModel {
    pub l: Vec<DimDensity>,
    pub g: Vec<DimDensity>,
    pub n_candidates: usize,
}

pub fn fit_densities(good: &[Vec<f64>], bad: &[Vec<f64>], space: &SearchSpace, n_candidates: usize) -> Result<TpeModel, TpeError> {
    if good.is_empty() || bad.is_empty() {
        return Err(TpeError::EmptySet);
    }
    let fit = |set: &[Vec<f64>]| -> Vec<DimDensity> {
        space
            .params()
            .iter()
            .enumerate()
            .map(|(d, p)| {
                if p.is_categorical() {
                    let c = p.cardinality().expect("categorical has choices");
                    let bins: Vec<usize> = set.iter().map(|x| bin_of(x[d], c)).collect();
                    DimDensity::categorical(&bins, c)
                } else {
                    DimDensity::kde(set.iter().map(|x| x[d]).collect())
                }
            })
            .collect()
    };
    Ok(TpeModel { l: fit(good), g: fit(bad), n_candidates: n_candidates.max(1) })
}

impl TpeModel {
    pub fn log_l(&self, x: &[f64]) -> f64 {
        self.l.iter().zip(x).map(|(d, &u)| d.pdf(u).ln()).sum()
    }

    pub fn log_g(&self, x: &[f64]) -> f64 {
        self.g.iter().zip(x).map(|(d, &u)| d.pdf(u).ln()).sum()
    }

    /// `ln l(x) - ln g(x)`.
    pub fn log_ratio(&self, x: &[f64]) -> f64 {
        self.log_l(x) - self.log_g(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TpeProposal {
    pub config: Config,
    pub encoded: Vec<f64>,
    pub log_ratio: f64,
}

/// Draws `n_candidates` points from `l` and returns the one with the largest `l / g`
/// (first drawn wins ties).
pub fn propose_tpe(model: &TpeModel, space: &SearchSpace, seed: SeedStream) -> TpeProposal {
    let mut rng = seed.child("tpe-candidates").rng();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..model.n_candidates {
        let raw: Vec<f64> = model.l.iter().map(|d| d.sample(&mut rng)).collect();
        let x = space.canonicalize(&raw).expect("samples lie in the unit cube");
        let r = model.log_ratio(&x);
        if best.as_ref().is_none_or(|(br, _)| r > *br) {
            best = Some((r, x));
        }
    }
    let (log_ratio, encoded) = best.expect("at least one candidate");
    TpeProposal { config: space.decode(&encoded).expect("canonical point"), encoded, log_ratio }
}

/// Split, fit and propose in one step.
pub fn suggest(
    observations: &[Observation],
    space: &SearchSpace,
    gamma: f64,
    n_candidates: usize,
    seed: SeedStream,
) -> Result<TpeProposal, TpeError> {
    let s = split(observations, gamma)?;
    let good: Vec<Vec<f64>> = s.good.into_iter().map(|o| o.x).collect();
    let bad: Vec<Vec<f64>> = s.bad.into_iter().map(|o| o.x).collect();
    let model = fit_densities(&good, &bad, space, n_candidates)?;
    Ok(propose_tpe(&model, space, seed))
}
