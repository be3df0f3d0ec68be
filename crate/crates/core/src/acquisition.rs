//! Acquisition functions over a GP posterior and the inner maximizer that picks
//! the next configuration.
//!
//! Scores are maximized: expected improvement is measured above the best
//! observed score.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::gp::{GpError, GpPosterior};
use crate::seed::SeedStream;
use crate::sobol::SobolDesign;
use crate::space::{Config, SearchSpace};

pub const DEFAULT_UCB_BETA: f64 = 2.0;
pub const PROBES: usize = 1024;
pub const REFINE_STARTS: usize = 8;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    #[default]
    Ei,
    Ucb,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    /// Used only by UCB; must be positive.
    pub ucb_beta: f64,
    /// Reference value for EI: the best observed score.
    pub incumbent_best: f64,
}

impl AcquisitionSpec {
    pub fn ei(incumbent_best: f64) -> Self {
        AcquisitionSpec { kind: AcquisitionKind::Ei, ucb_beta: DEFAULT_UCB_BETA, incumbent_best }
    }

    pub fn ucb(beta: f64) -> Self {
        assert!(beta > 0.0, "UCB beta must be positive");
        AcquisitionSpec { kind: AcquisitionKind::Ucb, ucb_beta: beta, incumbent_best: f64::NAN }
    }

    pub fn value(&self, mean: f64, variance: f64) -> f64 {
        match self.kind {
            AcquisitionKind::Ei => ei(mean, variance, self.incumbent_best),
            AcquisitionKind::Ucb => ucb(mean, variance, self.ucb_beta),
        }
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `z Φ(z) + φ(z)`, evaluated without cancellation in the lower tail.
fn ei_factor(z: f64) -> f64 {
    if z > -6.0 {
        return (z * normal_cdf(z) + normal_pdf(z)).max(0.0);
    }
    // For x = -z: Φ(-x) = φ(x) R(x) with the Mills ratio R(x) given by the
    // continued fraction 1 / (x + 1/(x + 2/(x + 3/(x + ...)))).
    let x = -z;
    let mut f = x;
    for k in (1..=120).rev() {
        f = x + k as f64 / f;
    }
    let mills = 1.0 / f;
    (normal_pdf(x) * (1.0 - x * mills)).max(0.0)
}

/// Expected improvement of `N(mean, variance)` over `best`.
pub fn ei(mean: f64, variance: f64, best: f64) -> f64 {
    let sigma = variance.max(0.0).sqrt();
    let diff = mean - best;
    if sigma == 0.0 {
        return diff.max(0.0);
    }
    sigma * ei_factor(diff / sigma)
}

/// `mean + sqrt(beta * variance)`.
pub fn ucb(mean: f64, variance: f64, beta: f64) -> f64 {
    mean + (beta * variance.max(0.0)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub config: Config,
    /// Encoding of `config` (discrete coordinates at their bin centres).
    pub encoded: Vec<f64>,
    pub value: f64,
}

/// Canonicalized quasi-random probe points used by [`propose`].
pub fn probe_points(space: &SearchSpace, seed: SeedStream) -> Vec<Vec<f64>> {
    SobolDesign::new(space.dim(), seed.child("probes"))
        .points(PROBES)
        .iter()
        .map(|p| space.canonicalize(p).expect("Sobol points lie in the unit cube"))
        .collect()
}

pub fn acquisition_at(posterior: &GpPosterior, spec: &AcquisitionSpec, encoded: &[f64]) -> Result<f64, GpError> {
    let (m, v) = posterior.predict(encoded)?;
    Ok(spec.value(m, v))
}

/// Maximizes the acquisition over the space: 1024 scrambled-Sobol probes, then
/// coordinate search from the 8 best. Every evaluated point is snapped onto a
/// real configuration first, so discrete coordinates move bin by bin.
pub fn propose(
    posterior: &GpPosterior,
    space: &SearchSpace,
    spec: &AcquisitionSpec,
    seed: SeedStream,
) -> Result<Proposal, GpError> {
    if posterior.dim() != space.dim() {
        return Err(GpError::DimensionMismatch { expected: space.dim(), got: posterior.dim() });
    }
    let eval = |x: &[f64]| acquisition_at(posterior, spec, x);
    let probes = probe_points(space, seed);
    let mut scored = Vec::with_capacity(probes.len());
    for (i, p) in probes.iter().enumerate() {
        scored.push((eval(p)?, i));
    }
    // descending value, ties to the lower probe index
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut starts: Vec<usize> = Vec::with_capacity(REFINE_STARTS);
    for &(_, i) in &scored {
        if starts.len() == REFINE_STARTS {
            break;
        }
        if !starts.iter().any(|&s| probes[s] == probes[i]) {
            starts.push(i);
        }
    }

    let steps: Vec<Option<f64>> = space.params().iter().map(|p| p.cardinality().map(|m| 1.0 / m as f64)).collect();
    let mut best_x = probes[scored[0].1].clone();
    let mut best_v = scored[0].0;
    for &s in &starts {
        let (x, v) = refine(&probes[s], &steps, space, &eval)?;
        if v > best_v {
            best_x = x;
            best_v = v;
        }
    }
    let config = space.decode(&best_x).expect("refined point lies in the unit cube");
    Ok(Proposal { config, encoded: best_x, value: best_v })
}

fn refine<F>(start: &[f64], discrete_steps: &[Option<f64>], space: &SearchSpace, eval: &F) -> Result<(Vec<f64>, f64), GpError>
where
    F: Fn(&[f64]) -> Result<f64, GpError>,
{
    let mut x = start.to_vec();
    let mut v = eval(&x)?;
    let mut step = 0.05;
    for _ in 0..200 {
        let mut improved = false;
        for d in 0..x.len() {
            let h = discrete_steps[d].unwrap_or(step);
            for dir in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[d] = (cand[d] + dir * h).clamp(0.0, 1.0);
                let cand = space.canonicalize(&cand).expect("clamped into the unit cube");
                if cand == x {
                    continue;
                }
                let cv = eval(&cand)?;
                if cv > v {
                    x = cand;
                    v = cv;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            if discrete_steps.iter().all(Option::is_some) || step < 1e-4 {
                break;
            }
            step *= 0.5;
        }
    }
    Ok((x, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::KernelParams;
    use crate::space::{ParamDef, ParamKind};

    #[test]
    fn ei_closed_form_examples() {
        assert_eq!(ei(0.3, 0.0, 0.3), 0.0);
        assert_eq!(ei(0.5, 0.0, 0.3), 0.5 - 0.3);
        assert!((ei(0.0, 1.0, 0.0) - INV_SQRT_2PI).abs() < 1e-15);
        let tail = ei(-10.0, 1.0, 0.0);
        assert!((0.0..1e-20).contains(&tail), "{tail}");
    }

    #[test]
    fn ei_is_continuous_across_tail_switch() {
        let a = ei_factor(-6.0 + 1e-9);
        let b = ei_factor(-6.0 - 1e-9);
        assert!(((a - b) / a).abs() < 1e-6, "{a} {b}");
        // asymptotic expansion φ(x)/x² (1 - 3/x² + 15/x⁴) at x = 30
        let x: f64 = 30.0;
        let approx = normal_pdf(x) / (x * x) * (1.0 - 3.0 / (x * x) + 15.0 / x.powi(4));
        assert!(((ei_factor(-x) - approx) / approx).abs() < 1e-4);
    }

    #[test]
    fn ei_is_monotone_in_mean_and_sigma() {
        let mut prev = 0.0;
        for i in -50..50 {
            let v = ei(i as f64 * 0.2, 1.0, 0.0);
            assert!(v >= prev);
            prev = v;
        }
        assert!(ei(0.0, 4.0, 0.0) > ei(0.0, 1.0, 0.0));
    }

    #[test]
    fn ucb_examples() {
        assert_eq!(ucb(0.5, 0.0, 3.0), 0.5);
        assert_eq!(ucb(0.0, 4.0, 1.0), 2.0);
        for (m, v) in [(0.1, 0.3), (-2.0, 5.0)] {
            assert!(ucb(m, v, 0.5) <= ucb(m, v, 2.0));
        }
    }

    fn one_d() -> SearchSpace {
        SearchSpace::new(vec![ParamDef::new("x", ParamKind::Uniform { lo: 0.0, hi: 1.0 }).unwrap()]).unwrap()
    }

    #[test]
    fn proposal_dominates_every_probe() {
        let space = one_d();
        let gp = GpPosterior::new(vec![vec![0.2], vec![0.8]], &[0.0, 1.0], KernelParams::isotropic(1, 0.2, 1.0, 1e-6)).unwrap();
        let spec = AcquisitionSpec::ei(1.0);
        let seed = SeedStream::new(5);
        let p = propose(&gp, &space, &spec, seed).unwrap();
        for probe in probe_points(&space, seed) {
            assert!(p.value >= acquisition_at(&gp, &spec, &probe).unwrap());
        }
        assert!((p.value - acquisition_at(&gp, &spec, &p.encoded).unwrap()).abs() < 1e-15);
        assert_eq!(p, propose(&gp, &space, &spec, seed).unwrap());
    }

    #[test]
    fn categorical_proposal_is_exhaustive_argmax() {
        let space = SearchSpace::new(vec![ParamDef::new(
            "c",
            ParamKind::Categorical { choices: (0..6).map(serde_json::Value::from).collect() },
        )
        .unwrap()])
        .unwrap();
        let x: Vec<Vec<f64>> = [0usize, 2, 5].iter().map(|&i| vec![(i as f64 + 0.5) / 6.0]).collect();
        let gp = GpPosterior::new(x, &[0.1, 0.9, 0.4], KernelParams::isotropic(1, 0.15, 1.0, 1e-6)).unwrap();
        for spec in [AcquisitionSpec::ei(0.9), AcquisitionSpec::ucb(2.0)] {
            let p = propose(&gp, &space, &spec, SeedStream::new(1)).unwrap();
            let best = (0..6)
                .map(|i| (acquisition_at(&gp, &spec, &[(i as f64 + 0.5) / 6.0]).unwrap(), i))
                .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a });
            assert_eq!(p.config.values[0], crate::space::ParamValue::Choice(best.1));
        }
    }

    #[test]
    fn flat_observations_push_ei_away_from_data() {
        let space = one_d();
        let x = vec![vec![0.1], vec![0.15], vec![0.2]];
        let gp = GpPosterior::new(x.clone(), &[0.5; 3], KernelParams::isotropic(1, 0.1, 1.0, 1e-6)).unwrap();
        let spec = AcquisitionSpec::ei(0.5);
        let p = propose(&gp, &space, &spec, SeedStream::new(2)).unwrap();
        assert!(p.value > acquisition_at(&gp, &spec, &x[0]).unwrap());
        assert!(p.encoded[0] > 0.4);
    }
}
