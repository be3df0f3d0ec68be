//! On-disk layout of finished runs.
//!
//! A run directory holds `trials.jsonl` (one line per trial, written as the run
//! progresses), `result.json` (what ran and how it ended) and `config.json`
//! (the effective configuration). A race directory holds one run directory per
//! (optimizer, repeat) plus `report.json` and `report.txt`. Files are only ever
//! created, never rewritten.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::engine::{EngineError, OptimizerSpec, RunResult};
use crate::history::{History, HistoryError};
use crate::metrics::{render_reports, Report, RunRecord};
use crate::space::{SearchSpace, SpaceError};

pub const TRIALS_FILE: &str = "trials.jsonl";
pub const RESULT_FILE: &str = "result.json";
pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

#[derive(Debug, Error)]
pub enum RunDirError {
    #[error("no run logs found under {0}")]
    NoRuns(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: recorded space is invalid: {source}")]
    Space {
        path: String,
        #[source]
        source: SpaceError,
    },
    #[error(transparent)]
    History(#[from] HistoryError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunDirError + '_ {
    move |source| RunDirError::Io { path: path.display().to_string(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncumbentMeta {
    pub trial: usize,
    pub score: f64,
    pub params: Map<String, Value>,
}

/// Contents of `result.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub optimizer: String,
    pub repeat: usize,
    pub spec: OptimizerSpec,
    pub space: Value,
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incumbent: Option<IncumbentMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunMeta {
    pub fn new(optimizer: &str, repeat: usize, spec: &OptimizerSpec, space: &SearchSpace, result: &Result<RunResult, EngineError>) -> Self {
        let mut meta = RunMeta {
            optimizer: optimizer.to_string(),
            repeat,
            spec: spec.clone(),
            space: space.to_json(),
            trials: 0,
            total_s: None,
            incumbent: None,
            error: None,
        };
        match result {
            Ok(r) => {
                meta.trials = r.history.len();
                meta.total_s = Some(r.total_s);
                meta.incumbent = Some(IncumbentMeta {
                    trial: r.incumbent.index,
                    score: r.incumbent.score.expect("incumbent is ok"),
                    params: space.to_params(&r.incumbent.config),
                });
            }
            Err(e) => meta.error = Some(e.to_string()),
        }
        meta
    }
}

/// Writes `contents` to a file that must not exist yet.
pub fn create_file(path: &Path, contents: &str) -> Result<(), RunDirError> {
    let mut f = OpenOptions::new().write(true).create_new(true).open(path).map_err(io_err(path))?;
    f.write_all(contents.as_bytes()).map_err(io_err(path))
}

pub fn create_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunDirError> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    create_file(path, &s)
}

/// Run directories at or below each of `roots`, in sorted order.
pub fn find_runs(roots: &[PathBuf]) -> Result<Vec<PathBuf>, RunDirError> {
    let mut out = Vec::new();
    for root in roots {
        let before = out.len();
        collect(root, &mut out)?;
        if out.len() == before {
            return Err(RunDirError::NoRuns(root.display().to_string()));
        }
    }
    Ok(out)
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), RunDirError> {
    if dir.join(TRIALS_FILE).is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for s in subdirs {
        collect(&s, out)?;
    }
    Ok(())
}

/// Reads `result.json` and replays `trials.jsonl` against the recorded space.
pub fn load_run(dir: &Path) -> Result<(RunMeta, SearchSpace, History), RunDirError> {
    let meta_path = dir.join(RESULT_FILE);
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: RunMeta =
        serde_json::from_str(&text).map_err(|source| RunDirError::Json { path: meta_path.display().to_string(), source })?;
    let space = serde_json::from_value::<SearchSpace>(meta.space.clone())
        .map_err(|e| RunDirError::Space { path: meta_path.display().to_string(), source: SpaceError::Json(e) })?;
    let history = History::load(&dir.join(TRIALS_FILE), &space)?;
    Ok((meta, space, history))
}

/// Rebuilds the report from logs alone. Runs without a successful trial are skipped.
pub fn report_from_dirs(roots: &[PathBuf], thresholds: &[f64]) -> Result<Report, RunDirError> {
    let mut records = Vec::new();
    for dir in find_runs(roots)? {
        let (meta, space, history) = load_run(&dir)?;
        match RunRecord::from_history(&meta.optimizer, meta.repeat, &history, &space, thresholds) {
            Some(r) => records.push(r),
            None => log::warn!("{}: no successful trial, left out of the report", dir.display()),
        }
    }
    Ok(render_reports(&records, thresholds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, OptimizerKind, RunOptions};
    use crate::history::TrialLog;
    use crate::objective::{DurationModel, SeededSynthetic, SyntheticKind, SyntheticObjective};
    use crate::seed::SeedStream;

    fn write_run(dir: &Path, name: &str, repeat: usize, seed: u64) -> RunResult {
        fs::create_dir_all(dir).unwrap();
        let space = SyntheticKind::MockSer.space();
        let mut spec = OptimizerSpec::new(OptimizerKind::Random, 6, seed);
        spec.name = Some(name.into());
        let mut obj = SeededSynthetic::new(
            SyntheticObjective { kind: SyntheticKind::MockSer, noise_sd: 0.0, duration: DurationModel::default() },
            SeedStream::new(seed),
        );
        let mut log = TrialLog::create(&dir.join(TRIALS_FILE)).unwrap();
        let result = run(&spec, &space, &mut obj, RunOptions { deadline_s: None, log: Some(&mut log) });
        create_json(&dir.join(RESULT_FILE), &RunMeta::new(name, repeat, &spec, &space, &result)).unwrap();
        result.unwrap()
    }

    #[test]
    fn report_from_logs_matches_in_memory_report() {
        let tmp = tempfile::tempdir().unwrap();
        let a = write_run(&tmp.path().join("race/random-r0"), "random", 0, 3);
        let b = write_run(&tmp.path().join("race/random-r1"), "random", 1, 4);
        let space = SyntheticKind::MockSer.space();
        let th = [0.8, 0.9];
        let records: Vec<RunRecord> = [(0, &a), (1, &b)]
            .iter()
            .map(|(r, res)| RunRecord::from_history("random", *r, &res.history, &space, &th).unwrap())
            .collect();
        let from_logs = report_from_dirs(&[tmp.path().join("race")], &th).unwrap();
        assert_eq!(from_logs.to_json_string(), render_reports(&records, &th).to_json_string());
    }

    #[test]
    fn empty_directory_has_no_runs() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(report_from_dirs(&[tmp.path().to_path_buf()], &[0.9]), Err(RunDirError::NoRuns(_))));
    }

    #[test]
    fn files_are_never_overwritten() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("x.json");
        create_file(&p, "1").unwrap();
        assert!(create_file(&p, "2").is_err());
        assert_eq!(fs::read_to_string(&p).unwrap(), "1");
    }
}
