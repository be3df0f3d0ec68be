//! The boundary between the optimizer and the thing being optimized.
//!
//! Objectives receive an [`ObjectiveRequest`] (trial number plus a
//! `{name: value}` parameter map) and answer with an [`ObjectiveResponse`].
//! Two implementations exist: built-in synthetic landscapes evaluated
//! in-process, and external workers spoken to over newline-delimited JSON on
//! their standard input/output:
//!
//! ```text
//! engine → {"hello":{"space":{...},"protocol":1}}
//! worker → {"ready":true}
//! engine → {"trial":3,"params":{"lr":2.59e-5,"epochs":8,"unfreeze":4,"maxlen":80000},"deadline_s":600}
//! worker → {"score":0.97,"duration_s":312.5,"status":"ok"}
//! ```
//!
//! Exactly one request is in flight at a time.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::seed::SeedStream;
use crate::space::{SearchSpace, TABLE2_SPACE_JSON};

pub const PROTOCOL_VERSION: u32 = 1;
const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(60);

/// Errors that abort a run. Ordinary objective failures are reported as
/// [`ResponseStatus::Failed`] responses instead.
#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("objective `{kind}` is defined on its own search space; the configured space does not match")]
    SpaceMismatch { kind: &'static str },
    #[error("starting worker `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("worker handshake failed: {0}")]
    Handshake(String),
    #[error("worker exited during trial {trial} after {restarts} restart(s)")]
    WorkerExited { trial: usize, restarts: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRequest {
    pub trial: usize,
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_s: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseStatus {
    Ok,
    Failed,
    /// Assigned by the engine when the deadline passes; never sent by workers.
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    pub status: ResponseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ObjectiveResponse {
    pub fn ok(score: f64, duration_s: Option<f64>) -> Self {
        ObjectiveResponse { score: Some(score), duration_s, status: ResponseStatus::Ok, detail: None }
    }

    pub fn failed(detail: impl Into<String>) -> Self {
        ObjectiveResponse { score: None, duration_s: None, status: ResponseStatus::Failed, detail: Some(detail.into()) }
    }

    fn timeout(deadline_s: f64) -> Self {
        ObjectiveResponse {
            score: None,
            duration_s: None,
            status: ResponseStatus::Timeout,
            detail: Some(format!("no response within {deadline_s} s")),
        }
    }

    /// Parses one worker line, enforcing the response schema.
    pub fn parse_line(line: &str) -> Result<Self, String> {
        let r: ObjectiveResponse = serde_json::from_str(line).map_err(|e| e.to_string())?;
        match r.status {
            ResponseStatus::Ok if !r.score.is_some_and(f64::is_finite) => Err("ok response without a finite score".into()),
            ResponseStatus::Timeout => Err("workers may not report status timeout".into()),
            _ if r.duration_s.is_some_and(|d| !(d >= 0.0 && d.is_finite())) => Err("duration_s must be non-negative".into()),
            _ => Ok(r),
        }
    }
}

pub trait Objective: Send {
    fn evaluate(&mut self, request: &ObjectiveRequest) -> Result<ObjectiveResponse, ObjectiveError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// `-(x - 0.7)^2` on `x ∈ [0, 1]`.
    Quadratic1d,
    /// Negated Branin on `[-5, 10] × [0, 15]`.
    Branin2d,
    /// Smooth stand-in for the fine-tuning objective on the four-parameter space,
    /// peaking at lr = 2.6e-5, 8 epochs, unfreeze 4, maxlen ≥ 64k.
    MockSer,
}

pub const QUADRATIC_VERTEX: f64 = 0.7;
pub const QUADRATIC_PEAK: f64 = 0.0;
pub const BRANIN_MINIMUM: f64 = 0.397_887_357_729_738;
pub const MOCK_SER_PEAK: f64 = 0.97;
pub const MOCK_SER_BEST_LR: f64 = 2.6e-5;

impl SyntheticKind {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticKind::Quadratic1d => "quadratic_1d",
            SyntheticKind::Branin2d => "branin_2d",
            SyntheticKind::MockSer => "mock_ser",
        }
    }

    pub fn space(&self) -> SearchSpace {
        let doc = match self {
            SyntheticKind::Quadratic1d => r#"{"params":[{"name":"x","kind":"uniform","lo":0.0,"hi":1.0}]}"#,
            SyntheticKind::Branin2d => {
                r#"{"params":[{"name":"x1","kind":"uniform","lo":-5.0,"hi":10.0},{"name":"x2","kind":"uniform","lo":0.0,"hi":15.0}]}"#
            }
            SyntheticKind::MockSer => TABLE2_SPACE_JSON,
        };
        SearchSpace::from_json_str(doc).expect("built-in spaces are valid")
    }

    /// Noise-free score; `None` when the parameters are missing or out of range.
    pub fn score(&self, params: &Map<String, Value>) -> Option<f64> {
        self.space().from_params(params).ok()?;
        let num = |name: &str| params.get(name).and_then(Value::as_f64);
        Some(match self {
            SyntheticKind::Quadratic1d => QUADRATIC_PEAK - (num("x")? - QUADRATIC_VERTEX).powi(2),
            SyntheticKind::Branin2d => -branin(num("x1")?, num("x2")?),
            SyntheticKind::MockSer => mock_ser(num("lr")?, num("epochs")?, num("unfreeze")?, num("maxlen")?),
        })
    }
}

pub fn branin(x1: f64, x2: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

pub fn mock_ser(lr: f64, epochs: f64, unfreeze: f64, maxlen: f64) -> f64 {
    let short = if maxlen < 64_000.0 { 1.0 } else { 0.0 };
    (MOCK_SER_PEAK
        - 0.25 * (lr.log10() - MOCK_SER_BEST_LR.log10()).powi(2)
        - 0.01 * (epochs - 8.0).abs()
        - 0.005 * (unfreeze - 4.0).abs()
        - 0.02 * short)
        .clamp(0.0, 1.0)
}

/// Simulated evaluation time reported by synthetic objectives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DurationModel {
    Constant { seconds: f64 },
    /// `base_s + per_epoch_sample_s * epochs * maxlen` (missing parameters count as 0).
    Linear { base_s: f64, per_epoch_sample_s: f64 },
}

impl Default for DurationModel {
    fn default() -> Self {
        DurationModel::Constant { seconds: 60.0 }
    }
}

impl DurationModel {
    pub fn seconds(&self, params: &Map<String, Value>) -> f64 {
        match self {
            DurationModel::Constant { seconds } => *seconds,
            DurationModel::Linear { base_s, per_epoch_sample_s } => {
                let get = |n: &str| params.get(n).and_then(Value::as_f64).unwrap_or(0.0);
                base_s + per_epoch_sample_s * get("epochs") * get("maxlen")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticObjective {
    pub kind: SyntheticKind,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub duration: DurationModel,
}

/// Pure evaluation: identical `(params, noise_seed)` give identical responses.
pub fn evaluate_synthetic(obj: &SyntheticObjective, params: &Map<String, Value>, noise_seed: SeedStream) -> ObjectiveResponse {
    let Some(clean) = obj.kind.score(params) else {
        return ObjectiveResponse::failed(format!("parameters are not a valid {} configuration", obj.kind.name()));
    };
    let mut score = clean;
    if obj.noise_sd > 0.0 {
        let normal = Normal::new(0.0, obj.noise_sd).expect("noise_sd is finite");
        score += normal.sample(&mut noise_seed.rng());
        if obj.kind == SyntheticKind::MockSer {
            score = score.clamp(0.0, 1.0);
        }
    }
    ObjectiveResponse::ok(score, Some(obj.duration.seconds(params)))
}

/// A synthetic objective bound to a run: per-trial noise comes from the run's seed stream.
pub struct SeededSynthetic {
    objective: SyntheticObjective,
    noise: SeedStream,
}

impl SeededSynthetic {
    pub fn new(objective: SyntheticObjective, run_seed: SeedStream) -> Self {
        SeededSynthetic { objective, noise: run_seed.child("objective-noise") }
    }
}

impl Objective for SeededSynthetic {
    fn evaluate(&mut self, request: &ObjectiveRequest) -> Result<ObjectiveResponse, ObjectiveError> {
        Ok(evaluate_synthetic(&self.objective, &request.params, self.noise.index(request.trial as u64)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalSettings {
    /// Shell command line that launches the worker.
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_s: Option<f64>,
}

/// Objective section of a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Quadratic1d(SyntheticSettings),
    Branin2d(SyntheticSettings),
    MockSer(SyntheticSettings),
    External(ExternalSettings),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSettings {
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub duration: DurationModel,
}

impl ObjectiveSpec {
    pub fn synthetic(&self) -> Option<SyntheticObjective> {
        let (kind, s) = match self {
            ObjectiveSpec::Quadratic1d(s) => (SyntheticKind::Quadratic1d, s),
            ObjectiveSpec::Branin2d(s) => (SyntheticKind::Branin2d, s),
            ObjectiveSpec::MockSer(s) => (SyntheticKind::MockSer, s),
            ObjectiveSpec::External(_) => return None,
        };
        Some(SyntheticObjective { kind, noise_sd: s.noise_sd, duration: s.duration.clone() })
    }

    pub fn deadline_s(&self) -> Option<f64> {
        match self {
            ObjectiveSpec::External(e) => e.deadline_s,
            _ => None,
        }
    }

    /// Instantiates a fresh objective for one run.
    pub fn build(&self, space: &SearchSpace, run_seed: SeedStream) -> Result<Box<dyn Objective>, ObjectiveError> {
        match self {
            ObjectiveSpec::External(e) => Ok(Box::new(ExternalWorker::new(e.command.clone(), space.to_json()))),
            _ => {
                let obj = self.synthetic().expect("synthetic variant");
                if obj.kind.space() != *space {
                    return Err(ObjectiveError::SpaceMismatch { kind: obj.kind.name() });
                }
                Ok(Box::new(SeededSynthetic::new(obj, run_seed)))
            }
        }
    }
}

struct WorkerProcess {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
}

impl WorkerProcess {
    fn spawn(command: &str) -> Result<Self, ObjectiveError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ObjectiveError::Spawn { command: command.to_string(), source })?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(l).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(WorkerProcess { child, stdin, lines: rx })
    }

    fn send(&mut self, line: &str) -> std::io::Result<()> {
        let stdin = self.stdin.as_mut().ok_or(std::io::ErrorKind::BrokenPipe)?;
        stdin.write_all(line.as_bytes())?;
        stdin.write_all(b"\n")?;
        stdin.flush()
    }

    fn recv(&self, timeout: Option<Duration>) -> Result<String, RecvTimeoutError> {
        match timeout {
            Some(t) => self.lines.recv_timeout(t),
            None => self.lines.recv().map_err(|_| RecvTimeoutError::Disconnected),
        }
    }
}

impl Drop for WorkerProcess {
    fn drop(&mut self) {
        self.stdin.take();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Client side of the worker protocol.
///
/// A worker that times out is killed and replaced before the next trial. A
/// worker that exits unexpectedly is restarted once and the request retried;
/// a second consecutive exit aborts the run.
pub struct ExternalWorker {
    command: String,
    space_doc: Value,
    process: Option<WorkerProcess>,
    max_restarts: usize,
    restarts_used: usize,
}

impl ExternalWorker {
    pub fn new(command: String, space_doc: Value) -> Self {
        ExternalWorker { command, space_doc, process: None, max_restarts: 1, restarts_used: 0 }
    }

    fn start(&mut self) -> Result<(), ObjectiveError> {
        let mut p = WorkerProcess::spawn(&self.command)?;
        let hello = json!({"hello": {"space": self.space_doc, "protocol": PROTOCOL_VERSION}});
        p.send(&hello.to_string()).map_err(|e| ObjectiveError::Handshake(format!("sending hello: {e}")))?;
        let reply = p.recv(Some(HANDSHAKE_TIMEOUT)).map_err(|e| ObjectiveError::Handshake(match e {
            RecvTimeoutError::Timeout => "no reply to hello".to_string(),
            RecvTimeoutError::Disconnected => "worker exited before replying to hello".to_string(),
        }))?;
        let ready: Value =
            serde_json::from_str(&reply).map_err(|e| ObjectiveError::Handshake(format!("invalid reply {reply:?}: {e}")))?;
        if ready.get("ready") != Some(&Value::Bool(true)) {
            return Err(ObjectiveError::Handshake(format!("expected {{\"ready\":true}}, got {reply}")));
        }
        self.process = Some(p);
        Ok(())
    }

    pub fn evaluate_external(&mut self, request: &ObjectiveRequest) -> Result<ObjectiveResponse, ObjectiveError> {
        let line = serde_json::to_string(request).expect("request serializes");
        loop {
            if self.process.is_none() {
                self.start()?;
            }
            let p = self.process.as_mut().expect("worker started");
            let sent = p.send(&line);
            let reply = match sent {
                Ok(()) => p.recv(request.deadline_s.map(Duration::from_secs_f64)),
                Err(_) => Err(RecvTimeoutError::Disconnected),
            };
            match reply {
                Ok(text) => {
                    return Ok(match ObjectiveResponse::parse_line(&text) {
                        Ok(r) => {
                            self.restarts_used = 0;
                            r
                        }
                        Err(e) => ObjectiveResponse::failed(format!("malformed response {text:?}: {e}")),
                    });
                }
                Err(RecvTimeoutError::Timeout) => {
                    self.process = None;
                    return Ok(ObjectiveResponse::timeout(request.deadline_s.unwrap_or_default()));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    self.process = None;
                    if self.restarts_used >= self.max_restarts {
                        return Err(ObjectiveError::WorkerExited { trial: request.trial, restarts: self.restarts_used });
                    }
                    self.restarts_used += 1;
                    log::warn!("worker exited during trial {}, restarting", request.trial);
                }
            }
        }
    }
}

impl Objective for ExternalWorker {
    fn evaluate(&mut self, request: &ObjectiveRequest) -> Result<ObjectiveResponse, ObjectiveError> {
        self.evaluate_external(request)
    }
}

/// Wall-clock helper for objectives that do not report their own duration.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
