use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use smbo_core::config::{resolve, ConfigError, LoadedConfig, RunConfig};
use smbo_core::engine::{self, EngineError, OptimizerKind, RaceJob, RunOptions, DEFAULT_CONTINUOUS_LEVELS};
use smbo_core::history::TrialLog;
use smbo_core::metrics::DEFAULT_THRESHOLDS;
use smbo_core::objective::{ExternalSettings, Objective, ObjectiveError, ObjectiveSpec};
use smbo_core::rundir::{self, RunDirError, RunMeta, CONFIG_FILE, REPORT_JSON, REPORT_TEXT, RESULT_FILE, TRIALS_FILE};
use smbo_core::space::{SearchSpace, SpaceError, DEFAULT_GRID_CAP};
use smbo_core::SeedStream;
use thiserror::Error;

/// Sequential model-based hyperparameter optimization: runs, races and reports.
#[derive(Parser)]
#[command(name = "smbo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimizer and write its trial log.
    Run(RunArgs),
    /// Run several optimizers over repeated seeds and write a comparison report.
    Race(RunArgs),
    /// Rebuild the report from existing run or race directories.
    Report(ReportArgs),
    /// Count the configurations a grid search would enumerate.
    GridCount(GridArgs),
    /// Check a search space document.
    ValidateSpace(SpaceArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Base seed for every optimizer (repeat r uses seed + r).
    #[arg(long)]
    seed: Option<u64>,
    /// Trial budget for every optimizer.
    #[arg(long)]
    budget: Option<usize>,
    /// Parent directory for run directories.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent runs in a race.
    #[arg(long)]
    jobs: Option<usize>,
    /// Launch line of an external objective worker (replaces the configured objective).
    #[arg(long)]
    worker: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run or race directories; their logs are pooled into one report.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Take thresholds from this config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Score thresholds (repeatable); overrides any config.
    #[arg(long = "threshold")]
    thresholds: Vec<f64>,
    /// Also write report.json and report.txt here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, required_unless_present = "space")]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "config")]
    space: Option<PathBuf>,
    /// Comma-separated levels per parameter, e.g. 5,10,6,6.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
}

#[derive(Args)]
struct SpaceArgs {
    #[arg(required_unless_present = "config")]
    space: Option<PathBuf>,
    #[arg(long, conflicts_with = "space")]
    config: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("space {path}: {source}")]
    Space { path: String, source: SpaceError },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Logs(RunDirError),
    #[error(transparent)]
    Output(RunDirError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{failed} of {total} runs failed")]
    RaceFailures { failed: usize, total: usize },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Space { .. } => 2,
            CliError::Objective(ObjectiveError::SpaceMismatch { .. }) => 2,
            CliError::Engine(EngineError::InvalidSpec(_) | EngineError::Space(_)) => 2,
            CliError::Engine(EngineError::Objective(ObjectiveError::SpaceMismatch { .. })) => 2,
            CliError::Engine(_) | CliError::Objective(_) | CliError::RaceFailures { .. } => 3,
            CliError::Logs(_) => 4,
            CliError::Output(_) | CliError::Io { .. } => 1,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Race(a) => cmd_race(a),
        Command::Report(a) => cmd_report(a),
        Command::GridCount(a) => cmd_grid_count(a),
        Command::ValidateSpace(a) => cmd_validate_space(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Config with command-line overrides applied, plus its resolved space.
struct Effective {
    loaded: LoadedConfig,
    space: SearchSpace,
}

fn effective_config(a: &RunArgs) -> Result<Effective, CliError> {
    let mut loaded = RunConfig::load(&a.config)?;
    let space = loaded.space()?;
    let c = &mut loaded.config;
    if let Some(seed) = a.seed {
        c.override_seed(seed);
    }
    if let Some(budget) = a.budget {
        c.override_budget(budget);
    }
    if let Some(out) = &a.out {
        c.out_dir = out.clone();
    }
    if let Some(jobs) = a.jobs {
        c.jobs = Some(jobs);
    }
    if let Some(command) = &a.worker {
        let deadline_s = c.objective.deadline_s();
        c.objective = ObjectiveSpec::External(ExternalSettings { command: command.clone(), deadline_s });
    }
    // echo an absolute space path so the copy in the run directory stays usable
    if let Some(p) = &c.space {
        let abs = resolve(&loaded.base_dir, p);
        c.space = Some(std::fs::canonicalize(&abs).unwrap_or(abs));
    }
    c.check()?;
    Ok(Effective { loaded, space })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// Creates `<out>/<millis since epoch, zero-padded>-<tag>s<seed>`, suffixing on collision.
fn create_run_dir(out: &Path, tag: &str, seed: u64) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let millis = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    let base = format!("{millis:015}-{tag}s{seed}");
    for k in 1.. {
        let dir = out.join(if k == 1 { base.clone() } else { format!("{base}-{k}") });
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io_err(&dir)(e)),
        }
    }
    unreachable!()
}

fn cmd_run(a: RunArgs) -> Result<(), CliError> {
    let Effective { loaded, space } = effective_config(&a)?;
    let config = &loaded.config;
    let specs = config.specs();
    let [spec] = specs.as_slice() else {
        return Err(CliError::Usage(format!("`run` takes one optimizer, the config lists {}; use `race`", specs.len())));
    };
    let dir = create_run_dir(&config.out_dir, "", spec.seed)?;
    rundir::create_json(&dir.join(CONFIG_FILE), config).map_err(CliError::Output)?;

    let mut log = TrialLog::create(&dir.join(TRIALS_FILE)).map_err(|e| CliError::Output(e.into()))?;
    let result = config
        .objective
        .build(&space, SeedStream::new(spec.seed))
        .map_err(EngineError::from)
        .and_then(|mut obj| {
            engine::run(spec, &space, obj.as_mut(), RunOptions { deadline_s: config.objective.deadline_s(), log: Some(&mut log) })
        });
    let meta = RunMeta::new(spec.display_name(), 0, spec, &space, &result);
    rundir::create_json(&dir.join(RESULT_FILE), &meta).map_err(CliError::Output)?;

    println!("run directory: {}", dir.display());
    let r = result?;
    let params: Vec<String> = space.to_params(&r.incumbent.config).iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "{} trials, best score {} at trial {} ({})",
        r.history.len(),
        r.incumbent.score.expect("incumbent is ok"),
        r.incumbent.index,
        params.join(" ")
    );
    Ok(())
}

fn job_dir(race_dir: &Path, job: &RaceJob) -> PathBuf {
    race_dir.join(format!("{}-r{:03}", job.name, job.repeat))
}

fn cmd_race(a: RunArgs) -> Result<(), CliError> {
    let Effective { loaded, space } = effective_config(&a)?;
    let config = &loaded.config;
    let specs = config.specs();
    if specs.len() < 2 {
        return Err(CliError::Usage(format!("a race needs at least two optimizers, the config lists {}", specs.len())));
    }
    let jobs = engine::race_jobs(&specs, config.repeats)?;
    let race_dir = create_run_dir(&config.out_dir, "race-", specs[0].seed)?;
    rundir::create_json(&race_dir.join(CONFIG_FILE), config).map_err(CliError::Output)?;

    let parallelism = config.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let outcomes = engine::race(
        &jobs,
        &space,
        |job: &RaceJob| -> Result<Box<dyn Objective>, ObjectiveError> { config.objective.build(&space, SeedStream::new(job.spec.seed)) },
        |job: &RaceJob| {
            let dir = job_dir(&race_dir, job);
            std::fs::create_dir(&dir).map_err(|source| smbo_core::HistoryError::Io { path: dir.display().to_string(), source })?;
            TrialLog::create(&dir.join(TRIALS_FILE)).map(Some)
        },
        config.objective.deadline_s(),
        parallelism,
    );

    let mut failed = 0;
    for o in &outcomes {
        let dir = job_dir(&race_dir, &o.job);
        if let Err(e) = &o.result {
            failed += 1;
            eprintln!("{} repeat {}: {e}", o.job.name, o.job.repeat);
        }
        if dir.is_dir() {
            let meta = RunMeta::new(&o.job.name, o.job.repeat, &o.job.spec, &space, &o.result);
            rundir::create_json(&dir.join(RESULT_FILE), &meta).map_err(CliError::Output)?;
        }
    }

    let report = rundir::report_from_dirs(std::slice::from_ref(&race_dir), &config.thresholds).map_err(CliError::Logs)?;
    rundir::create_file(&race_dir.join(REPORT_JSON), &report.to_json_string()).map_err(CliError::Output)?;
    let text = report.to_text();
    rundir::create_file(&race_dir.join(REPORT_TEXT), &text).map_err(CliError::Output)?;
    println!("race directory: {}\n", race_dir.display());
    print!("{text}");
    if failed > 0 {
        return Err(CliError::RaceFailures { failed, total: outcomes.len() });
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<(), CliError> {
    let thresholds = if !a.thresholds.is_empty() {
        a.thresholds.clone()
    } else if let Some(c) = &a.config {
        RunConfig::load(c)?.config.thresholds
    } else {
        // a race directory remembers the thresholds it was configured with
        let echoed = a.dirs[0].join(CONFIG_FILE);
        match echoed.is_file() {
            true => RunConfig::load(&echoed)?.config.thresholds,
            false => DEFAULT_THRESHOLDS.to_vec(),
        }
    };
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CliError::Usage("thresholds must be strictly ascending".into()));
    }
    let report = rundir::report_from_dirs(&a.dirs, &thresholds).map_err(CliError::Logs)?;
    let text = report.to_text();
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out).map_err(io_err(out))?;
        rundir::create_file(&out.join(REPORT_JSON), &report.to_json_string()).map_err(CliError::Output)?;
        rundir::create_file(&out.join(REPORT_TEXT), &text).map_err(CliError::Output)?;
    }
    print!("{text}");
    Ok(())
}

fn load_space(path: &Path) -> Result<SearchSpace, CliError> {
    SearchSpace::load(path).map_err(|source| CliError::Space { path: path.display().to_string(), source })
}

fn cmd_grid_count(a: GridArgs) -> Result<(), CliError> {
    let (space, configured) = match (&a.config, &a.space) {
        (Some(c), _) => {
            let loaded = RunConfig::load(c)?;
            let levels = loaded.config.specs().into_iter().find(|s| s.kind == OptimizerKind::Grid).and_then(|s| s.levels);
            (loaded.space()?, levels)
        }
        (None, Some(s)) => (load_space(s)?, None),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let levels = a.levels.or(configured).unwrap_or_else(|| space.default_levels(DEFAULT_CONTINUOUS_LEVELS));
    let count = space.grid_count(&levels).map_err(|source| CliError::Space { path: "grid".into(), source })?;
    let shown: Vec<String> = levels.iter().map(usize::to_string).collect();
    println!("{count}");
    if count > DEFAULT_GRID_CAP {
        eprintln!("warning: levels {} exceed the enumeration cap of {DEFAULT_GRID_CAP}", shown.join(","));
    }
    Ok(())
}

fn cmd_validate_space(a: SpaceArgs) -> Result<(), CliError> {
    let space = match (&a.space, &a.config) {
        (Some(p), _) => load_space(p)?,
        (None, Some(c)) => RunConfig::load(c)?.space()?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    println!("ok: {} parameters", space.dim());
    for p in space.params() {
        let card = p.cardinality().map_or("continuous".to_string(), |m| format!("{m} values"));
        println!("  {:<16} {:<12} {card}", p.name(), kind_name(p.kind()));
    }
    Ok(())
}

fn kind_name(k: &smbo_core::ParamKind) -> &'static str {
    match k {
        smbo_core::ParamKind::LogUniform { .. } => "log_uniform",
        smbo_core::ParamKind::Uniform { .. } => "uniform",
        smbo_core::ParamKind::Int { .. } => "int",
        smbo_core::ParamKind::Categorical { .. } => "categorical",
    }
}
