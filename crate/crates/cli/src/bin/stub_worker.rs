//! Minimal external objective worker for exercising the wire protocol.
//!
//! Modes:
//! - `echo`: score = lr * 1e4
//! - `mock-ser`: the built-in mock-SER landscape (noise-free)
//! - `sleep`: waits `--seconds` before answering with score 0.5
//! - `garbage`: answers the first request with a non-JSON line, then exits

use std::io::{BufRead, Write};
use std::time::Duration;

use clap::{Parser, ValueEnum};
use serde_json::{json, Value};
use smbo_core::objective::{ObjectiveRequest, SyntheticKind};

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Echo,
    MockSer,
    Sleep,
    Garbage,
}

#[derive(Parser)]
struct Args {
    #[arg(long, value_enum, default_value = "echo")]
    mode: Mode,
    #[arg(long, default_value_t = 1.0)]
    seconds: f64,
    /// Reported `duration_s` for every ok response.
    #[arg(long)]
    duration: Option<f64>,
}

fn respond(args: &Args, line: &str) -> Option<Value> {
    let req: ObjectiveRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return Some(json!({"status": "failed", "detail": format!("bad request: {e}")})),
    };
    let score = match args.mode {
        Mode::Echo => req.params.get("lr").and_then(Value::as_f64).map(|lr| lr * 1e4),
        Mode::MockSer => SyntheticKind::MockSer.score(&req.params),
        Mode::Sleep => {
            std::thread::sleep(Duration::from_secs_f64(args.seconds));
            Some(0.5)
        }
        Mode::Garbage => return None,
    };
    Some(match (score, args.duration) {
        (Some(s), Some(d)) => json!({"score": s, "duration_s": d, "status": "ok"}),
        (Some(s), None) => json!({"score": s, "status": "ok"}),
        (None, _) => json!({"status": "failed", "detail": "parameters not understood"}),
    })
}

fn main() {
    let args = Args::parse();
    let stdin = std::io::stdin();
    let mut out = std::io::stdout().lock();
    let mut lines = stdin.lock().lines();
    match lines.next() {
        Some(Ok(hello)) if serde_json::from_str::<Value>(&hello).is_ok_and(|v| v["hello"]["protocol"] == 1) => {}
        _ => std::process::exit(1),
    }
    writeln!(out, "{}", json!({"ready": true})).and_then(|_| out.flush()).expect("stdout");
    for line in lines.map_while(Result::ok) {
        match respond(&args, &line) {
            Some(v) => writeln!(out, "{v}").and_then(|_| out.flush()).expect("stdout"),
            None => {
                writeln!(out, "this is not json").and_then(|_| out.flush()).expect("stdout");
                return;
            }
        }
    }
}
