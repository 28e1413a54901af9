use std::io::IsTerminal;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use gazeclass::analyze::{analyze, AnalyzeOptions};
use gazeclass::script::ScriptFile;
use gazeclass_server::config::{ConfigError, ServerConfig};
use gazeclass_server::driver::{run_in_process, run_over_network, DriverError};
use gazeclass_server::record::{Record, RecordWriter};
use gazeclass_server::{http, replay, ScaledClock, Service};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "gazeclass", version, about = "Class-wide gaze attention: serve, simulate, analyze, replay")]
struct Cli {
    /// Seed override for simulation and statistics.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Server/session config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the session service until SIGINT/SIGTERM.
    Serve(ServeArgs),
    /// Run a scenario script, in process or against a server.
    Simulate(SimulateArgs),
    /// Produce analysis tables from a record file.
    Analyze(AnalyzeArgs),
    /// Re-run a record and check the published events reproduce.
    Replay { record: PathBuf },
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    record_dir: Option<PathBuf>,
    #[arg(long)]
    time_scale: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    script: PathBuf,
    /// Server base URL, e.g. http://127.0.0.1:8080. In-process when absent.
    #[arg(long)]
    endpoint: Option<String>,
    /// Clock speed of the server at `--endpoint`.
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    record: PathBuf,
    #[arg(long)]
    cohesiveness: bool,
    #[arg(long)]
    randomization_test: bool,
    #[arg(long)]
    dbscan: bool,
    #[arg(long)]
    heatmap: bool,
    #[arg(long)]
    score_series: bool,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    sample_size: Option<usize>,
    /// Bins of the null-distribution histogram.
    #[arg(long, default_value_t = 50)]
    bins: usize,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ServerConfig::load(p)?,
        None => ServerConfig::default(),
    };
    cfg.apply_env(std::env::vars())?;
    if let Some(seed) = cli.seed {
        cfg.session.seed = seed;
    }
    match cli.command {
        Command::Serve(args) => serve(cfg, args),
        Command::Simulate(args) => simulate(cfg, cli.seed, cli.out, args),
        Command::Analyze(args) => run_analyze(cli.seed, cli.out, args),
        Command::Replay { record } => run_replay(&record, cli.out),
    }
}

fn tokio_runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(runtime)
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = term.recv() => {}
                    _ = tokio::signal::ctrl_c() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn serve(mut cfg: ServerConfig, args: ServeArgs) -> Result<(), Failure> {
    let s = &mut cfg.server;
    if let Some(b) = args.bind {
        s.bind = b;
    }
    if let Some(p) = args.port {
        s.port = p;
    }
    if let Some(d) = args.record_dir {
        s.record_dir = Some(d);
    }
    if let Some(t) = args.time_scale {
        s.time_scale = t;
    }
    cfg.validate()?;
    let addr: SocketAddr = format!("{}:{}", cfg.server.bind, cfg.server.port)
        .parse()
        .map_err(|e| Failure::Config(format!("invalid server.bind: {e}")))?;
    tokio_runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| runtime(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(runtime)?;
        tracing::info!(addr = %local, record_dir = ?cfg.server.record_dir, time_scale = cfg.server.time_scale, "listening");
        let clock = Arc::new(ScaledClock::new(cfg.server.time_scale));
        let service = Service::new(cfg, clock);
        http::serve(listener, service, shutdown_signal()).await.map_err(runtime)?;
        tracing::info!("stopped");
        Ok(())
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(runtime)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    session: &'a str,
    students: usize,
    duration_ms: u64,
    windows: usize,
    mean_score: f64,
    alerts: Vec<u64>,
    accepted: u64,
    dropped: u64,
    skipped_windows: u64,
    failed_clients: usize,
    p99_latency_ms: f64,
}

fn simulate(cfg: ServerConfig, seed: Option<u64>, out: Option<PathBuf>, args: SimulateArgs) -> Result<(), Failure> {
    let mut file = ScriptFile::load(&args.script)?;
    if let Some(seed) = seed {
        file.script.seed = seed;
    }
    let session = file.session.unwrap_or(cfg.session);
    let out = out.unwrap_or_else(|| PathBuf::from("simulation"));
    let summary = match &args.endpoint {
        None => {
            std::fs::create_dir_all(&out).map_err(runtime)?;
            let record = RecordWriter::create(&out.join("record.ndjson")).map_err(runtime)?;
            run_in_process(&file.script, session, Some(record))
        }
        Some(url) => tokio_runtime()?.block_on(run_over_network(url, &file.script, &session, args.time_scale)),
    }
    .map_err(|e| match e {
        DriverError::Config(c) => Failure::Config(c.to_string()),
        DriverError::Scenario(g) => Failure::Config(g.to_string()),
        other => runtime(other),
    })?;
    write_json(&out.join("summary.json"), &summary)?;
    let scores = summary.scores();
    let report = SimulateReport {
        session: &summary.session,
        students: summary.students,
        duration_ms: summary.duration_ms,
        windows: scores.len(),
        mean_score: if scores.is_empty() { 0.0 } else { scores.iter().sum::<f64>() / scores.len() as f64 },
        alerts: summary.alerts().map(|e| e.end_ms).collect(),
        accepted: summary.accepted,
        dropped: summary.dropped,
        skipped_windows: summary.skipped_windows,
        failed_clients: summary.failed_clients,
        p99_latency_ms: summary.latency.p99_ms,
    };
    println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);
    Ok(())
}

fn open_record(path: &Path) -> Result<Record, Failure> {
    let record = Record::open(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    for c in &record.corrupt {
        tracing::warn!(line = c.line_no, error = %c.error, "skipping corrupt record line");
    }
    Ok(record)
}

fn run_analyze(seed: Option<u64>, out: Option<PathBuf>, args: AnalyzeArgs) -> Result<(), Failure> {
    let record = open_record(&args.record)?;
    let mut opts = AnalyzeOptions {
        cohesiveness: args.cohesiveness,
        randomization: args.randomization_test,
        dbscan: args.dbscan,
        heatmap: args.heatmap,
        score_series: args.score_series,
        seed,
        trials: args.trials,
        sample_size: args.sample_size,
        histogram_bins: args.bins,
    };
    if !opts.any() {
        opts = AnalyzeOptions {
            seed,
            trials: args.trials,
            sample_size: args.sample_size,
            histogram_bins: args.bins,
            ..AnalyzeOptions::all()
        };
    }
    let out = out.unwrap_or_else(|| PathBuf::from("analysis"));
    let summary = analyze(&record, &opts, &out).map_err(|e| match e {
        gazeclass::analyze::AnalyzeError::Gaze(g @ gazeclass_core::GazeError::InvalidConfig { .. }) => {
            Failure::Config(g.to_string())
        }
        other => runtime(other),
    })?;
    write_json(&out.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).map_err(runtime)?);
    Ok(())
}

#[derive(Serialize)]
struct ReplaySummary<'a> {
    session: &'a str,
    matches: bool,
    recorded_windows: usize,
    replayed_windows: usize,
    skipped_windows: u64,
    alerts: Vec<u64>,
    corrupt_lines: usize,
    closed: bool,
    mismatches: &'a [replay::Mismatch],
}

fn run_replay(path: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let record = open_record(path)?;
    let report = replay::replay(&record).map_err(runtime)?;
    let summary = ReplaySummary {
        session: &report.session,
        matches: report.matches(),
        recorded_windows: report.recorded_windows,
        replayed_windows: report.events.len(),
        skipped_windows: report.skipped_windows,
        alerts: report.alerts().map(|e| e.end_ms).collect(),
        corrupt_lines: report.corrupt_lines,
        closed: report.closed,
        mismatches: &report.mismatches,
    };
    if let Some(out) = out {
        write_json(&out.join("replay.json"), &summary)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary).map_err(runtime)?);
    if report.matches() {
        Ok(())
    } else {
        Err(runtime(format!("{} field(s) differ from the record", report.mismatches.len())))
    }
}
