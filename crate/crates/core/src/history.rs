//! Optimization history: evaluated trials, incumbent tracking and the JSONL run log.
//!
//! Scores are stored higher-is-better. Failed and timed-out trials stay in the
//! history (and the log) but carry no score and never become the incumbent.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::space::{Config, SearchSpace, SpaceError};

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("trial index {got} out of sequence, expected {expected}")]
    IndexGap { expected: usize, got: usize },
    #[error("trial {index}: cumulative time {cumulative_s} s precedes previous {previous_s} s")]
    TimeWentBackwards { index: usize, cumulative_s: f64, previous_s: f64 },
    #[error("trial {index}: {reason}")]
    Inconsistent { index: usize, reason: String },
    #[error("history has no successful trials")]
    NoOkTrials,
    #[error("{path}:{line}: {reason}")]
    CorruptLine { path: String, line: usize, reason: String },
    #[error("run log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Space(#[from] SpaceError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
    Timeout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    /// 1-based position in the run.
    pub index: usize,
    pub config: Config,
    /// `Some` iff `status == Ok`.
    pub score: Option<f64>,
    pub duration_s: f64,
    /// Seconds since the run started, at completion of this trial.
    pub cumulative_s: f64,
    pub status: TrialStatus,
}

impl Trial {
    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    trials: Vec<Trial>,
    incumbent: Option<usize>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn ok_trials(&self) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(|t| t.is_ok())
    }

    pub fn ok_count(&self) -> usize {
        self.ok_trials().count()
    }

    /// Best ok trial; ties go to the earliest index.
    pub fn incumbent(&self) -> Option<&Trial> {
        self.incumbent.map(|i| &self.trials[i])
    }

    pub fn best_score(&self) -> Option<f64> {
        self.incumbent().and_then(|t| t.score)
    }

    pub fn elapsed_s(&self) -> f64 {
        self.trials.last().map_or(0.0, |t| t.cumulative_s)
    }

    fn check(&self, trial: &Trial) -> Result<(), HistoryError> {
        let expected = self.trials.len() + 1;
        if trial.index != expected {
            return Err(HistoryError::IndexGap { expected, got: trial.index });
        }
        let inconsistent = |reason: &str| HistoryError::Inconsistent { index: trial.index, reason: reason.into() };
        match (trial.status, trial.score) {
            (TrialStatus::Ok, Some(s)) if s.is_finite() => {}
            (TrialStatus::Ok, _) => return Err(inconsistent("ok trial without a finite score")),
            (_, Some(_)) => return Err(inconsistent("failed trial carries a score")),
            (_, None) => {}
        }
        if !(trial.duration_s >= 0.0 && trial.duration_s.is_finite()) {
            return Err(inconsistent("duration must be finite and non-negative"));
        }
        let previous_s = self.elapsed_s();
        if !(trial.cumulative_s >= previous_s) || !trial.cumulative_s.is_finite() {
            return Err(HistoryError::TimeWentBackwards { index: trial.index, cumulative_s: trial.cumulative_s, previous_s });
        }
        Ok(())
    }

    /// Appends a trial, updating the incumbent only on a strict improvement.
    pub fn record(&mut self, trial: Trial) -> Result<(), HistoryError> {
        self.check(&trial)?;
        if let (Some(s), true) = (trial.score, trial.is_ok()) {
            if self.best_score().is_none_or(|best| s > best) {
                self.incumbent = Some(self.trials.len());
            }
        }
        self.trials.push(trial);
        Ok(())
    }

    /// Like [`History::record`], but the trial is written and flushed to `log` first.
    pub fn record_logged(&mut self, trial: Trial, log: &mut TrialLog, space: &SearchSpace) -> Result<(), HistoryError> {
        self.check(&trial)?;
        log.append(&trial, space)?;
        self.record(trial)
    }

    /// `(cumulative seconds, best score so far)`, one point per ok trial.
    pub fn best_so_far_curve(&self) -> Result<Vec<(f64, f64)>, HistoryError> {
        let mut best = f64::NEG_INFINITY;
        let curve: Vec<(f64, f64)> = self
            .ok_trials()
            .map(|t| {
                best = best.max(t.score.expect("ok trials carry scores"));
                (t.cumulative_s, best)
            })
            .collect();
        if curve.is_empty() {
            return Err(HistoryError::NoOkTrials);
        }
        Ok(curve)
    }

    /// Reads a run log written by [`TrialLog`].
    pub fn load(path: &Path, space: &SearchSpace) -> Result<History, HistoryError> {
        let display = path.display().to_string();
        let file = File::open(path).map_err(|source| HistoryError::Io { path: display.clone(), source })?;
        let mut history = History::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let corrupt = |reason: String| HistoryError::CorruptLine { path: display.clone(), line: i + 1, reason };
            let line = line.map_err(|e| corrupt(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: TrialLine = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            let config = space.from_params(&raw.params).map_err(|e| corrupt(e.to_string()))?;
            let trial = Trial {
                index: raw.index,
                config,
                score: raw.score,
                duration_s: raw.duration_s,
                cumulative_s: raw.cumulative_s,
                status: raw.status,
            };
            history.record(trial).map_err(|e| corrupt(e.to_string()))?;
        }
        Ok(history)
    }

    /// Serializes every trial as the run log would.
    pub fn to_jsonl(&self, space: &SearchSpace) -> String {
        self.trials.iter().map(|t| trial_line(t, space) + "\n").collect()
    }
}

#[derive(Serialize, Deserialize)]
struct TrialLine {
    index: usize,
    params: Map<String, Value>,
    score: Option<f64>,
    duration_s: f64,
    cumulative_s: f64,
    status: TrialStatus,
}

fn trial_line(trial: &Trial, space: &SearchSpace) -> String {
    let line = TrialLine {
        index: trial.index,
        params: space.to_params(&trial.config),
        score: trial.score,
        duration_s: trial.duration_s,
        cumulative_s: trial.cumulative_s,
        status: trial.status,
    };
    serde_json::to_string(&line).expect("trial line serializes")
}

/// Append-only `trials.jsonl` writer. Each line is flushed before `append` returns.
pub struct TrialLog {
    path: PathBuf,
    file: File,
}

impl TrialLog {
    /// Creates a new log; refuses to overwrite an existing file.
    pub fn create(path: &Path) -> Result<Self, HistoryError> {
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|source| HistoryError::Io { path: path.display().to_string(), source })?;
        Ok(TrialLog { path: path.to_path_buf(), file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, trial: &Trial, space: &SearchSpace) -> Result<(), HistoryError> {
        let mut line = trial_line(trial, space);
        line.push('\n');
        let io = |source| HistoryError::Io { path: self.path.display().to_string(), source };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.flush().map_err(io)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedStream;
    use crate::space::table2_space;

    fn trial(index: usize, score: Option<f64>, cumulative_s: f64) -> Trial {
        let space = table2_space();
        Trial {
            index,
            config: space.sample(&mut SeedStream::new(index as u64).rng()),
            score,
            duration_s: 1.0,
            cumulative_s,
            status: if score.is_some() { TrialStatus::Ok } else { TrialStatus::Failed },
        }
    }

    fn replay(scores: &[Option<f64>]) -> History {
        let mut h = History::new();
        for (i, s) in scores.iter().enumerate() {
            h.record(trial(i + 1, *s, (i + 1) as f64 * 60.0)).unwrap();
        }
        h
    }

    #[test]
    fn first_ok_trial_becomes_incumbent() {
        assert_eq!(replay(&[Some(0.5)]).incumbent().unwrap().index, 1);
    }

    #[test]
    fn ties_keep_earliest_incumbent() {
        assert_eq!(replay(&[Some(0.5), Some(0.5)]).incumbent().unwrap().index, 1);
    }

    #[test]
    fn failures_are_skipped_for_incumbent() {
        let h = replay(&[Some(0.5), None, Some(0.9)]);
        assert_eq!(h.incumbent().unwrap().index, 3);
        assert_eq!(h.len(), 3);
        assert_eq!(h.ok_count(), 2);
    }

    #[test]
    fn out_of_sequence_index_is_rejected() {
        let mut h = replay(&[Some(0.5)]);
        assert!(matches!(h.record(trial(3, Some(0.1), 500.0)), Err(HistoryError::IndexGap { expected: 2, got: 3 })));
        assert!(matches!(h.record(trial(1, Some(0.1), 500.0)), Err(HistoryError::IndexGap { .. })));
        assert!(matches!(h.record(trial(2, Some(0.1), 10.0)), Err(HistoryError::TimeWentBackwards { .. })));
        let mut bad = trial(2, None, 500.0);
        bad.status = TrialStatus::Ok;
        assert!(h.record(bad).is_err());
    }

    #[test]
    fn best_so_far_curve_examples() {
        let h = replay(&[Some(0.3), Some(0.2), Some(0.4)]);
        assert_eq!(h.best_so_far_curve().unwrap(), vec![(60.0, 0.3), (120.0, 0.3), (180.0, 0.4)]);

        let mut single = History::new();
        single.record(trial(1, Some(0.96), 2.4 * 60.0)).unwrap();
        assert_eq!(single.best_so_far_curve().unwrap(), vec![(144.0, 0.96)]);

        let flat = replay(&[Some(0.7); 4]);
        assert!(flat.best_so_far_curve().unwrap().iter().all(|&(_, s)| s == 0.7));

        assert!(matches!(replay(&[None]).best_so_far_curve(), Err(HistoryError::NoOkTrials)));
    }

    #[test]
    fn run_log_round_trips_byte_for_byte() {
        let space = table2_space();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        let mut log = TrialLog::create(&path).unwrap();
        let mut h = History::new();
        let mut t = 0.0;
        for i in 1..=6 {
            t += 37.123456789 * i as f64;
            let score = if i == 4 { None } else { Some(1.0 / (i as f64 + 0.1)) };
            h.record_logged(trial(i, score, t), &mut log, &space).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, h.to_jsonl(&space));
        let loaded = History::load(&path, &space).unwrap();
        assert_eq!(loaded, h);
        assert_eq!(loaded.to_jsonl(&space), text);
        assert!(TrialLog::create(&path).is_err(), "existing logs are never overwritten");
    }

    #[test]
    fn corrupt_line_reports_its_number() {
        let space = table2_space();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        let h = replay(&[Some(0.1), Some(0.2)]);
        std::fs::write(&path, h.to_jsonl(&space) + "{not json\n").unwrap();
        match History::load(&path, &space) {
            Err(HistoryError::CorruptLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
