//! The sequential optimization loop and its baselines.
//!
//! Every optimizer kind runs through [`run`]: pick a configuration, evaluate
//! it, record the trial, repeat until the trial or time budget is spent.
//! Randomness comes from named sub-streams of the run seed (`design`,
//! `random`, `gp-fit`, `proposal`), so a run is reproducible from its seed.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{self, AcquisitionKind, AcquisitionSpec, DEFAULT_UCB_BETA};
use crate::gp::{FitOptions, GpPosterior};
use crate::history::{History, HistoryError, Trial, TrialLog, TrialStatus};
use crate::objective::{Objective, ObjectiveError, ObjectiveRequest, ResponseStatus};
use crate::seed::SeedStream;
use crate::sobol::SobolDesign;
use crate::space::{Config, SearchSpace, SpaceError, DEFAULT_GRID_CAP};
use crate::tpe::{self, Observation, DEFAULT_CANDIDATES, DEFAULT_GAMMA, DEFAULT_MIN_STARTUP};

pub const DEFAULT_N0: usize = 5;
/// Grid levels used for continuous parameters when none are configured.
pub const DEFAULT_CONTINUOUS_LEVELS: usize = 5;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid optimizer spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error("run finished without a successful trial ({trials} attempted)")]
    NoOkTrials { trials: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    GpBo,
    Tpe,
    Grid,
    Random,
}

impl OptimizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::GpBo => "gp_bo",
            OptimizerKind::Tpe => "tpe",
            OptimizerKind::Grid => "grid",
            OptimizerKind::Random => "random",
        }
    }
}

fn default_beta() -> f64 {
    DEFAULT_UCB_BETA
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_candidates() -> usize {
    DEFAULT_CANDIDATES
}
fn default_min_startup() -> usize {
    DEFAULT_MIN_STARTUP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    /// Label used in reports; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: OptimizerKind,
    pub budget: usize,
    /// Initial design size; defaults to `min(5, budget)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_budget_s: Option<f64>,
    #[serde(default)]
    pub acquisition: AcquisitionKind,
    #[serde(default = "default_beta")]
    pub ucb_beta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_candidates")]
    pub n_candidates: usize,
    #[serde(default = "default_min_startup")]
    pub min_startup: usize,
    /// Grid levels per parameter; defaults to every value of discrete
    /// parameters and five levels for continuous ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<usize>>,
}

impl OptimizerSpec {
    pub fn new(kind: OptimizerKind, budget: usize, seed: u64) -> Self {
        OptimizerSpec {
            name: None,
            kind,
            budget,
            n0: None,
            seed,
            time_budget_s: None,
            acquisition: AcquisitionKind::Ei,
            ucb_beta: DEFAULT_UCB_BETA,
            gamma: DEFAULT_GAMMA,
            n_candidates: DEFAULT_CANDIDATES,
            min_startup: DEFAULT_MIN_STARTUP,
            levels: None,
        }
    }

    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.as_str())
    }

    pub fn effective_n0(&self) -> usize {
        self.n0.unwrap_or(DEFAULT_N0.min(self.budget))
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidSpec(m));
        if self.budget == 0 {
            return bad("budget must be at least 1".into());
        }
        match self.n0 {
            Some(0) => return bad("n0 must be at least 1".into()),
            Some(n) if n > self.budget => return bad(format!("n0 = {n} exceeds the budget of {}", self.budget)),
            _ => {}
        }
        if let Some(t) = self.time_budget_s {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("time_budget_s must be positive, got {t}"));
            }
        }
        if !(self.ucb_beta > 0.0 && self.ucb_beta.is_finite()) {
            return bad(format!("ucb_beta must be positive, got {}", self.ucb_beta));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.n_candidates == 0 {
            return bad("n_candidates must be at least 1".into());
        }
        if self.levels.is_some() && self.kind != OptimizerKind::Grid {
            return bad("levels only apply to grid search".into());
        }
        Ok(())
    }

    fn grid_levels(&self, space: &SearchSpace) -> Vec<usize> {
        self.levels.clone().unwrap_or_else(|| space.default_levels(DEFAULT_CONTINUOUS_LEVELS))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub spec: OptimizerSpec,
    pub history: History,
    /// Best ok trial (earliest on ties).
    pub incumbent: Trial,
    /// Cumulative trial time in seconds (self-reported where available).
    pub total_s: f64,
    /// Wall-clock time the engine itself spent.
    pub wall_s: f64,
}

/// Per-run settings that are not part of the optimizer itself.
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Forwarded to the objective with every request.
    pub deadline_s: Option<f64>,
    /// Each trial is appended here before the next one is proposed.
    pub log: Option<&'a mut TrialLog>,
}

enum Proposer {
    Sobol { design: SobolDesign, next: u32 },
    Random(Box<rand_chacha::ChaCha8Rng>),
    Grid(std::vec::IntoIter<Config>),
}

/// First `n` points of the run's initial design, as configurations.
pub fn sobol_design(space: &SearchSpace, seed: u64, n: usize) -> Vec<Config> {
    let design = SobolDesign::new(space.dim(), SeedStream::new(seed).child("design"));
    (0..n as u32).map(|i| sobol_config(space, &design, i)).collect()
}

fn sobol_config(space: &SearchSpace, design: &SobolDesign, index: u32) -> Config {
    space.decode(&design.point(index)).expect("Sobol points lie in the unit cube")
}

/// Runs one optimization.
pub fn run(spec: &OptimizerSpec, space: &SearchSpace, objective: &mut dyn Objective, options: RunOptions<'_>) -> Result<RunResult, EngineError> {
    spec.validate()?;
    let started = Instant::now();
    let root = SeedStream::new(spec.seed);
    let RunOptions { deadline_s, mut log } = options;

    let mut fallback = match spec.kind {
        OptimizerKind::GpBo => Proposer::Sobol { design: SobolDesign::new(space.dim(), root.child("design")), next: 0 },
        OptimizerKind::Tpe | OptimizerKind::Random => Proposer::Random(Box::new(root.child("random").rng())),
        OptimizerKind::Grid => Proposer::Grid(space.grid(&spec.grid_levels(space), DEFAULT_GRID_CAP)?.into_iter()),
    };
    let startup = match spec.kind {
        OptimizerKind::GpBo => spec.effective_n0(),
        OptimizerKind::Tpe => spec.effective_n0().max(spec.min_startup),
        OptimizerKind::Grid | OptimizerKind::Random => usize::MAX,
    };

    let mut history = History::new();
    for t in 1..=spec.budget {
        if spec.time_budget_s.is_some_and(|cap| history.elapsed_s() >= cap) {
            log::info!("time budget reached after {} trials", history.len());
            break;
        }
        let model_based = if t > startup { propose_model(spec, space, &history, root, t) } else { None };
        let Some(config) = model_based.or_else(|| next_fallback(&mut fallback, space)) else {
            break; // grid exhausted
        };

        let request = ObjectiveRequest { trial: t, params: space.to_params(&config), deadline_s };
        let t0 = Instant::now();
        let response = objective.evaluate(&request)?;
        let measured = t0.elapsed().as_secs_f64();
        let duration_s = response.duration_s.unwrap_or(measured);
        let (status, score) = match response.status {
            ResponseStatus::Ok => (TrialStatus::Ok, response.score),
            ResponseStatus::Failed => (TrialStatus::Failed, None),
            ResponseStatus::Timeout => (TrialStatus::Timeout, None),
        };
        if status != TrialStatus::Ok {
            log::warn!("trial {t} {status:?}: {}", response.detail.as_deref().unwrap_or("no detail"));
        }
        let trial = Trial { index: t, config, score, duration_s, cumulative_s: history.elapsed_s() + duration_s, status };
        match log.as_deref_mut() {
            Some(l) => history.record_logged(trial, l, space)?,
            None => history.record(trial)?,
        }
    }

    let incumbent = history.incumbent().cloned().ok_or(EngineError::NoOkTrials { trials: history.len() })?;
    Ok(RunResult {
        spec: spec.clone(),
        total_s: history.elapsed_s(),
        history,
        incumbent,
        wall_s: started.elapsed().as_secs_f64(),
    })
}

fn next_fallback(p: &mut Proposer, space: &SearchSpace) -> Option<Config> {
    match p {
        Proposer::Sobol { design, next } => {
            let c = sobol_config(space, design, *next);
            *next += 1;
            Some(c)
        }
        Proposer::Random(rng) => Some(space.sample(rng.as_mut())),
        Proposer::Grid(it) => it.next(),
    }
}

/// Model-based proposal for trial `t`; `None` means "use the fallback design".
fn propose_model(spec: &OptimizerSpec, space: &SearchSpace, history: &History, root: SeedStream, t: usize) -> Option<Config> {
    let encoded: Vec<(Vec<f64>, f64, usize)> = history
        .ok_trials()
        .map(|tr| (space.encode(&tr.config).expect("recorded configs are valid"), tr.score.expect("ok trial"), tr.index))
        .collect();
    let proposal_seed = root.child("proposal").index(t as u64);
    match spec.kind {
        OptimizerKind::GpBo => {
            if encoded.len() < 2 {
                return None;
            }
            let (x, y): (Vec<Vec<f64>>, Vec<f64>) = encoded.into_iter().map(|(x, y, _)| (x, y)).unzip();
            let fit = FitOptions { seed: root.child("gp-fit").index(t as u64), ..FitOptions::default() };
            let gp = match GpPosterior::fit(x, &y, &fit) {
                Ok(gp) => gp,
                Err(e) => {
                    log::warn!("trial {t}: GP fit failed ({e}); using the next design point");
                    return None;
                }
            };
            let acq = match spec.acquisition {
                AcquisitionKind::Ei => AcquisitionSpec::ei(history.best_score().expect("ok trials exist")),
                AcquisitionKind::Ucb => AcquisitionSpec::ucb(spec.ucb_beta),
            };
            match acquisition::propose(&gp, space, &acq, proposal_seed) {
                Ok(p) => Some(p.config),
                Err(e) => {
                    log::warn!("trial {t}: acquisition failed ({e}); using the next design point");
                    None
                }
            }
        }
        OptimizerKind::Tpe => {
            let obs: Vec<Observation> = encoded.into_iter().map(|(x, score, index)| Observation { index, score, x }).collect();
            match tpe::suggest(&obs, space, spec.gamma, spec.n_candidates, proposal_seed) {
                Ok(p) => Some(p.config),
                Err(e) => {
                    log::debug!("trial {t}: {e}; sampling from the prior");
                    None
                }
            }
        }
        OptimizerKind::Grid | OptimizerKind::Random => None,
    }
}

/// One (optimizer, repeat) cell of a race.
#[derive(Clone, Debug, PartialEq)]
pub struct RaceJob {
    /// Unique across the race.
    pub name: String,
    pub repeat: usize,
    /// Copy of the optimizer spec with `seed` already offset by `repeat`.
    pub spec: OptimizerSpec,
}

/// Expands `specs × repeats` into jobs. Repeat `r` runs with seed `seed + r`;
/// duplicate display names get a `-2`, `-3`, … suffix.
pub fn race_jobs(specs: &[OptimizerSpec], repeats: usize) -> Result<Vec<RaceJob>, EngineError> {
    if repeats == 0 {
        return Err(EngineError::InvalidSpec("repeats must be at least 1".into()));
    }
    let mut names: Vec<String> = Vec::new();
    for s in specs {
        s.validate()?;
        let base = s.display_name().to_string();
        let mut name = base.clone();
        let mut k = 2;
        while names.contains(&name) {
            name = format!("{base}-{k}");
            k += 1;
        }
        names.push(name);
    }
    Ok(specs
        .iter()
        .zip(names)
        .flat_map(|(s, name)| {
            (0..repeats).map(move |r| {
                let mut spec = s.clone();
                spec.name = Some(name.clone());
                spec.seed = s.seed.wrapping_add(r as u64);
                RaceJob { name: name.clone(), repeat: r, spec }
            })
        })
        .collect())
}

#[derive(Debug)]
pub struct RaceOutcome {
    pub job: RaceJob,
    pub result: Result<RunResult, EngineError>,
}

/// Runs every job with a fresh objective, up to `jobs` at a time. Outcomes come
/// back in job order; a failed run does not stop the others.
///
/// `objective` builds the objective for a job; `log` optionally opens its trial log.
pub fn race<O, L>(jobs: &[RaceJob], space: &SearchSpace, objective: O, log: L, deadline_s: Option<f64>, parallelism: usize) -> Vec<RaceOutcome>
where
    O: Fn(&RaceJob) -> Result<Box<dyn Objective>, ObjectiveError> + Sync,
    L: Fn(&RaceJob) -> Result<Option<TrialLog>, HistoryError> + Sync,
{
    let run_one = |job: &RaceJob| -> Result<RunResult, EngineError> {
        let mut obj = objective(job)?;
        let mut trial_log = log(job)?;
        run(&job.spec, space, obj.as_mut(), RunOptions { deadline_s, log: trial_log.as_mut() })
    };
    let slots: Vec<Mutex<Option<Result<RunResult, EngineError>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..parallelism.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = run_one(&jobs[i]);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    jobs.iter()
        .cloned()
        .zip(slots)
        .map(|(job, slot)| RaceOutcome { job, result: slot.into_inner().expect("slot lock").expect("every job ran") })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{ObjectiveResponse, SeededSynthetic, SyntheticKind, SyntheticObjective};
    use crate::objective::DurationModel;

    fn synthetic(kind: SyntheticKind, noise_sd: f64, seed: u64) -> SeededSynthetic {
        SeededSynthetic::new(SyntheticObjective { kind, noise_sd, duration: DurationModel::default() }, SeedStream::new(seed))
    }

    fn run_kind(kind: OptimizerKind, budget: usize, seed: u64, obj: SyntheticKind) -> RunResult {
        let spec = OptimizerSpec::new(kind, budget, seed);
        run(&spec, &obj.space(), &mut synthetic(obj, 0.0, seed), RunOptions::default()).unwrap()
    }

    #[test]
    fn single_trial_budget() {
        for kind in [OptimizerKind::GpBo, OptimizerKind::Tpe, OptimizerKind::Grid, OptimizerKind::Random] {
            let r = run_kind(kind, 1, 3, SyntheticKind::MockSer);
            assert_eq!(r.history.len(), 1);
            assert_eq!(r.incumbent, r.history.trials()[0]);
        }
    }

    #[test]
    fn random_search_is_reproducible() {
        let a = run_kind(OptimizerKind::Random, 10, 8, SyntheticKind::MockSer);
        let b = run_kind(OptimizerKind::Random, 10, 8, SyntheticKind::MockSer);
        assert_eq!(a.history, b.history);
        assert_ne!(a.history, run_kind(OptimizerKind::Random, 10, 9, SyntheticKind::MockSer).history);
    }

    #[test]
    fn gp_bo_starts_with_the_sobol_design() {
        let space = SyntheticKind::MockSer.space();
        let r = run_kind(OptimizerKind::GpBo, 8, 21, SyntheticKind::MockSer);
        let design = sobol_design(&space, 21, 5);
        let logged: Vec<Config> = r.history.trials()[..5].iter().map(|t| t.config.clone()).collect();
        assert_eq!(logged, design);
    }

    #[test]
    fn tpe_starts_with_prior_samples() {
        let space = SyntheticKind::MockSer.space();
        let r = run_kind(OptimizerKind::Tpe, 8, 4, SyntheticKind::MockSer);
        let mut rng = SeedStream::new(4).child("random").rng();
        for t in &r.history.trials()[..5] {
            assert_eq!(t.config, space.sample(&mut rng));
        }
    }

    #[test]
    fn grid_follows_enumeration_and_stops_when_exhausted() {
        let space = SyntheticKind::Quadratic1d.space();
        let mut spec = OptimizerSpec::new(OptimizerKind::Grid, 10, 0);
        spec.levels = Some(vec![4]);
        let r = run(&spec, &space, &mut synthetic(SyntheticKind::Quadratic1d, 0.0, 0), RunOptions::default()).unwrap();
        assert_eq!(r.history.len(), 4);
        let expected = space.grid(&[4], DEFAULT_GRID_CAP).unwrap();
        assert_eq!(r.history.trials().iter().map(|t| t.config.clone()).collect::<Vec<_>>(), expected);
    }

    #[test]
    fn grid_ignores_seed() {
        let a = run_kind(OptimizerKind::Grid, 12, 1, SyntheticKind::MockSer);
        let b = run_kind(OptimizerKind::Grid, 12, 2, SyntheticKind::MockSer);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn incumbent_never_decreases() {
        for kind in [OptimizerKind::GpBo, OptimizerKind::Tpe, OptimizerKind::Random] {
            let r = run_kind(kind, 12, 5, SyntheticKind::Branin2d);
            let curve = r.history.best_so_far_curve().unwrap();
            assert!(curve.windows(2).all(|w| w[1].1 >= w[0].1));
            assert_eq!(curve.last().unwrap().1, r.incumbent.score.unwrap());
        }
    }

    #[test]
    fn gp_bo_finds_quadratic_vertex() {
        let hits = (0..20u64)
            .filter(|&seed| {
                let spec = OptimizerSpec::new(OptimizerKind::GpBo, 15, seed);
                let space = SyntheticKind::Quadratic1d.space();
                let r = run(&spec, &space, &mut synthetic(SyntheticKind::Quadratic1d, 0.0, seed), RunOptions::default()).unwrap();
                let x = space.to_params(&r.incumbent.config)["x"].as_f64().unwrap();
                (x - 0.7).abs() < 0.1
            })
            .count();
        assert!(hits >= 18, "{hits}/20");
    }

    struct Instant0(usize);
    impl Objective for Instant0 {
        fn evaluate(&mut self, _: &ObjectiveRequest) -> Result<ObjectiveResponse, ObjectiveError> {
            self.0 += 1;
            Ok(ObjectiveResponse::ok(1.0, Some(0.0)))
        }
    }

    #[test]
    fn never_exceeds_budget_with_instant_objective() {
        let space = SyntheticKind::MockSer.space();
        for kind in [OptimizerKind::GpBo, OptimizerKind::Tpe, OptimizerKind::Random, OptimizerKind::Grid] {
            let mut obj = Instant0(0);
            let r = run(&OptimizerSpec::new(kind, 7, 0), &space, &mut obj, RunOptions::default()).unwrap();
            assert_eq!((obj.0, r.history.len()), (7, 7));
        }
    }

    #[test]
    fn time_budget_is_checked_between_trials() {
        let mut spec = OptimizerSpec::new(OptimizerKind::Random, 15, 0);
        spec.time_budget_s = Some(150.0); // 60 s per trial → stops after the third
        let space = SyntheticKind::MockSer.space();
        let r = run(&spec, &space, &mut synthetic(SyntheticKind::MockSer, 0.0, 0), RunOptions::default()).unwrap();
        assert_eq!(r.history.len(), 3);
        assert_eq!(r.total_s, 180.0);
    }

    struct FailOdd;
    impl Objective for FailOdd {
        fn evaluate(&mut self, req: &ObjectiveRequest) -> Result<ObjectiveResponse, ObjectiveError> {
            Ok(if req.trial % 2 == 1 { ObjectiveResponse::failed("boom") } else { ObjectiveResponse::ok(req.trial as f64, None) })
        }
    }

    struct AlwaysFail;
    impl Objective for AlwaysFail {
        fn evaluate(&mut self, _: &ObjectiveRequest) -> Result<ObjectiveResponse, ObjectiveError> {
            Ok(ObjectiveResponse::failed("boom"))
        }
    }

    #[test]
    fn failures_are_recorded_and_skipped() {
        let space = SyntheticKind::MockSer.space();
        let r = run(&OptimizerSpec::new(OptimizerKind::GpBo, 9, 0), &space, &mut FailOdd, RunOptions::default()).unwrap();
        assert_eq!(r.history.len(), 9);
        assert_eq!(r.history.ok_count(), 4);
        assert_eq!(r.incumbent.index, 8);
        assert!(matches!(
            run(&OptimizerSpec::new(OptimizerKind::Tpe, 4, 0), &space, &mut AlwaysFail, RunOptions::default()),
            Err(EngineError::NoOkTrials { trials: 4 })
        ));
    }

    #[test]
    fn spec_validation() {
        let mut s = OptimizerSpec::new(OptimizerKind::GpBo, 3, 0);
        s.n0 = Some(4);
        assert!(s.validate().is_err());
        s.n0 = None;
        assert_eq!(s.effective_n0(), 3);
        s.gamma = 1.0;
        assert!(s.validate().is_err());
        assert!(OptimizerSpec::new(OptimizerKind::Random, 0, 0).validate().is_err());
        let parsed: OptimizerSpec =
            serde_json::from_str(r#"{"kind":"gp_bo","budget":15,"n0":5,"seed":42,"acquisition":"ei"}"#).unwrap();
        assert_eq!(parsed.effective_n0(), 5);
        assert!(serde_json::from_str::<OptimizerSpec>(r#"{"kind":"gp_bo","budget":15,"bugdet":3}"#).is_err());
    }

    fn mock_factory(job: &RaceJob) -> Result<Box<dyn Objective>, ObjectiveError> {
        Ok(Box::new(synthetic(SyntheticKind::MockSer, 0.01, job.spec.seed)))
    }

    #[test]
    fn race_shape_and_determinism() {
        let space = SyntheticKind::MockSer.space();
        let specs = vec![OptimizerSpec::new(OptimizerKind::Random, 6, 10), OptimizerSpec::new(OptimizerKind::Random, 6, 10)];
        let jobs = race_jobs(&specs, 3).unwrap();
        assert_eq!(jobs.len(), 6);
        assert_eq!(jobs[3].name, "random-2");
        assert_eq!(jobs.iter().map(|j| j.spec.seed).collect::<Vec<_>>(), [10, 11, 12, 10, 11, 12]);
        let serial = race(&jobs, &space, mock_factory, |_| Ok(None), None, 1);
        let parallel = race(&jobs, &space, mock_factory, |_| Ok(None), None, 4);
        for (a, b) in serial.iter().zip(&parallel) {
            assert_eq!(a.result.as_ref().unwrap().history, b.result.as_ref().unwrap().history);
        }
        for r in 0..3 {
            assert_eq!(serial[r].result.as_ref().unwrap().history, serial[r + 3].result.as_ref().unwrap().history);
        }
    }

    #[test]
    fn one_failed_run_does_not_stop_the_race() {
        let space = SyntheticKind::MockSer.space();
        let jobs = race_jobs(&[OptimizerSpec::new(OptimizerKind::Random, 3, 0)], 3).unwrap();
        let out = race(
            &jobs,
            &space,
            |j: &RaceJob| -> Result<Box<dyn Objective>, ObjectiveError> {
                if j.repeat == 1 { Ok(Box::new(AlwaysFail)) } else { mock_factory(j) }
            },
            |_| Ok(None),
            None,
            2,
        );
        assert!(out[0].result.is_ok() && out[2].result.is_ok());
        assert!(matches!(out[1].result, Err(EngineError::NoOkTrials { .. })));
    }
}
