use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use sensor_relay::codec::{DEFAULT_FETCH_PATH, DEFAULT_INGEST_PATH};
use sensor_relay::loopback::{run_e2e, E2eConfig};
use sensor_relay::relay::{run_relay, ChannelMode, RelayConfig, RelayError};
use sensor_relay::retrieval::{run_poll, PollConfig, PollLimit, StreamFormat, StreamWriter};
use sensor_relay::sensor::TraceSpec;
use sensor_relay::sim::{
    report, run_sim, sweep, LatencyModel, ReportFormat, SimConfig, SimError, SimRow, SweepGrid, WriteModel,
};
use sensor_relay::transport::{HttpTransport, Transport};
use sensor_relay::webhost::{Persistence, Service, ServiceConfig, ServiceError};

/// Sensor telemetry relay: web host, relay, poller and race simulator.
///
/// Every flag can also be set through an environment variable named
/// SENSOR_RELAY_<FLAG>, e.g. SENSOR_RELAY_INTERVAL_MS.
#[derive(Parser)]
#[command(name = "sensor-relay", version, about)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the web host until interrupted.
    Serve(ServeArgs),
    /// Sample a trace and push each reading to the web host.
    Relay(RelayArgs),
    /// Poll the stored record and stream decoded samples to stdout.
    Poll(PollArgs),
    /// Run one deterministic simulation and print a report.
    Sim(SimArgs),
    /// Run a grid of simulations from a `key=v1|v2` file.
    Sweep(SweepArgs),
    /// Service, relay and poller over loopback, with verification.
    E2e(E2eArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "SENSOR_RELAY_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Store file. Ignored with --memory.
    #[arg(long, env = "SENSOR_RELAY_STORE", default_value = "maina.dat")]
    store: PathBuf,
    /// Keep the record in memory only.
    #[arg(long, env = "SENSOR_RELAY_MEMORY")]
    memory: bool,
    #[arg(long, env = "SENSOR_RELAY_INGEST_PATH", default_value = DEFAULT_INGEST_PATH)]
    ingest_path: String,
    #[arg(long, env = "SENSOR_RELAY_FETCH_PATH", default_value = DEFAULT_FETCH_PATH)]
    fetch_path: String,
}

#[derive(Args)]
struct RelayArgs {
    #[arg(long, env = "SENSOR_RELAY_ENDPOINT", default_value = "http://127.0.0.1:8080")]
    endpoint: String,
    #[arg(long, env = "SENSOR_RELAY_INGEST_PATH", default_value = DEFAULT_INGEST_PATH)]
    ingest_path: String,
    #[arg(long, env = "SENSOR_RELAY_INTERVAL_MS", default_value_t = 350)]
    interval_ms: u64,
    #[arg(long, env = "SENSOR_RELAY_MODE", default_value = "sync")]
    mode: ChannelMode,
    /// constant[:x,y,z] | sinusoid[:amp,freq] | walk[:sd] | step[:inc] | replay:PATH
    #[arg(long, env = "SENSOR_RELAY_TRACE", default_value = "walk")]
    trace: TraceSpec,
    #[arg(long, env = "SENSOR_RELAY_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "SENSOR_RELAY_TICKS", default_value_t = 100)]
    ticks: u64,
    /// In-flight cap for async mode.
    #[arg(long, env = "SENSOR_RELAY_MAX_INFLIGHT")]
    max_inflight: Option<usize>,
    #[arg(long, env = "SENSOR_RELAY_TIMEOUT_MS", default_value_t = 5000)]
    timeout_ms: u64,
    /// Back off exponentially after failed requests.
    #[arg(long, env = "SENSOR_RELAY_BACKOFF")]
    backoff: bool,
    /// Do not echo samples to stdout.
    #[arg(long, short, env = "SENSOR_RELAY_QUIET")]
    quiet: bool,
    /// Per-request CSV plus summary.
    #[arg(long, env = "SENSOR_RELAY_METRICS_OUT")]
    metrics_out: Option<PathBuf>,
}

#[derive(Args)]
struct PollArgs {
    #[arg(long, env = "SENSOR_RELAY_SOURCE", default_value = "http://127.0.0.1:8080/maina.dat")]
    source: String,
    #[arg(long, env = "SENSOR_RELAY_INTERVAL_MS", default_value_t = 100)]
    interval_ms: u64,
    #[arg(
        long,
        env = "SENSOR_RELAY_POLLS",
        default_value_t = 100,
        conflicts_with = "duration_ms"
    )]
    polls: u64,
    #[arg(long, env = "SENSOR_RELAY_DURATION_MS")]
    duration_ms: Option<u64>,
    #[arg(long, env = "SENSOR_RELAY_FORMAT", default_value = "csv")]
    format: StreamFormat,
    #[arg(long, env = "SENSOR_RELAY_TIMEOUT_MS", default_value_t = 5000)]
    timeout_ms: u64,
    #[arg(long, env = "SENSOR_RELAY_METRICS_OUT")]
    metrics_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, env = "SENSOR_RELAY_RELAY_INTERVAL_MS", default_value_t = 350)]
    relay_interval_ms: u64,
    #[arg(long, env = "SENSOR_RELAY_MODE", default_value = "sync")]
    mode: ChannelMode,
    #[arg(long, env = "SENSOR_RELAY_POLL_INTERVAL_MS", default_value_t = 100)]
    poll_interval_ms: u64,
    /// fixed:L | uniform:lo,hi | lognormal:mu,sigma (ms)
    #[arg(long, env = "SENSOR_RELAY_LATENCY", default_value = "fixed:0")]
    latency: LatencyModel,
    /// atomic | torn:BYTES_PER_MS
    #[arg(long, env = "SENSOR_RELAY_WRITE_MODEL", default_value = "atomic")]
    write_model: WriteModel,
    #[arg(long, env = "SENSOR_RELAY_DURATION_MS", default_value_t = 10_000)]
    duration_ms: u64,
    #[arg(long, env = "SENSOR_RELAY_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "SENSOR_RELAY_TRACE", default_value = "walk")]
    trace: TraceSpec,
    #[arg(long, env = "SENSOR_RELAY_MAX_INFLIGHT")]
    max_inflight: Option<usize>,
    #[arg(long, env = "SENSOR_RELAY_TIMEOUT_MS")]
    timeout_ms: Option<u64>,
    #[command(flatten)]
    output: ReportArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// csv | md
    #[arg(long, env = "SENSOR_RELAY_REPORT", default_value = "csv")]
    report: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long, env = "SENSOR_RELAY_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Grid file: one `key=v1|v2|...` line per axis.
    grid: PathBuf,
    #[command(flatten)]
    output: ReportArgs,
}

#[derive(Args)]
struct E2eArgs {
    #[arg(long, env = "SENSOR_RELAY_RELAY_INTERVAL_MS", default_value_t = 50)]
    relay_interval_ms: u64,
    #[arg(long, env = "SENSOR_RELAY_POLL_INTERVAL_MS", default_value_t = 20)]
    poll_interval_ms: u64,
    #[arg(long, env = "SENSOR_RELAY_TICKS", default_value_t = 100)]
    ticks: u64,
    #[arg(long, env = "SENSOR_RELAY_GRACE_MS", default_value_t = 200)]
    grace_ms: u64,
    #[arg(long, env = "SENSOR_RELAY_MIN_OBSERVED", default_value_t = 0.95)]
    min_observed: f64,
}

enum Failure {
    Usage(anyhow::Error),
    Verification,
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("SENSOR_RELAY_LOG").unwrap_or_else(|_| EnvFilter::new(level)))
        .with_writer(io::stderr)
        .init();

    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(3);
        }
    };
    match runtime.block_on(dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

async fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Serve(a) => cmd_serve(a).await,
        Command::Relay(a) => cmd_relay(a).await,
        Command::Poll(a) => cmd_poll(a).await,
        Command::Sim(a) => cmd_sim(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::E2e(a) => cmd_e2e(a).await,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

async fn cmd_serve(a: ServeArgs) -> Result<(), Failure> {
    let config = ServiceConfig {
        bind: a.bind,
        ingest_path: a.ingest_path,
        fetch_path: a.fetch_path,
        persistence: if a.memory {
            Persistence::MemoryOnly
        } else {
            Persistence::FileBacked(a.store)
        },
    };
    let service = Service::bind(&config).await.map_err(|e| match e {
        ServiceError::InvalidConfig(_) => Failure::Usage(e.into()),
        e => Failure::Runtime(e.into()),
    })?;
    eprintln!("listening on http://{}", service.local_addr()?);
    service
        .run(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Failure::Runtime(e.into()))
}

async fn cmd_relay(a: RelayArgs) -> Result<(), Failure> {
    let config = RelayConfig {
        interval_ms: a.interval_ms,
        mode: a.mode,
        endpoint: a.endpoint,
        ingest_path: a.ingest_path,
        max_inflight: a.max_inflight,
        request_timeout_ms: a.timeout_ms,
        ticks: a.ticks,
        backoff: a.backoff,
    };
    let transport: Arc<dyn Transport> = Arc::new(HttpTransport::new());
    let mut stdout = io::stdout();
    let echo: Option<&mut (dyn Write + Send)> = if a.quiet { None } else { Some(&mut stdout) };
    let metrics = run_relay(&config, a.trace.with_seed(a.seed), transport, echo)
        .await
        .map_err(|e| match e {
            RelayError::InvalidConfig(_) => Failure::Usage(e.into()),
            e => Failure::Runtime(e.into()),
        })?;
    if let Some(path) = a.metrics_out {
        let mut out = create(&path)?;
        metrics.write_document(&mut out)?;
        out.flush()?;
    }
    for (k, v) in metrics.summary() {
        eprintln!("{k}={v}");
    }
    Ok(())
}

async fn cmd_poll(a: PollArgs) -> Result<(), Failure> {
    let config = PollConfig {
        interval_ms: a.interval_ms,
        source_url: a.source,
        limit: a.duration_ms.map_or(PollLimit::Polls(a.polls), PollLimit::DurationMs),
        request_timeout_ms: a.timeout_ms,
    };
    config.validate().map_err(|e| Failure::Usage(e.into()))?;
    let transport: Arc<dyn Transport> = Arc::new(HttpTransport::new());
    let mut writer = StreamWriter::new(io::stdout().lock(), a.format)?;
    let mut write_err = None;
    let report = run_poll(&config, transport, |s| {
        if write_err.is_none() {
            write_err = writer.write(s).err();
        }
    })
    .await
    .map_err(|e| Failure::Runtime(e.into()))?;
    writer.finish()?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    if let Some(path) = a.metrics_out {
        let mut out = create(&path)?;
        report.metrics.write_summary(&mut out)?;
        out.flush()?;
    }
    report.metrics.write_summary(io::stderr())?;
    Ok(())
}

fn write_report(rows: &[SimRow], args: &ReportArgs) -> Result<(), Failure> {
    match &args.out {
        Some(path) => {
            let mut out = create(path)?;
            report(rows, args.report, &mut out)?;
            out.flush()?;
        }
        None => report(rows, args.report, io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_sim(a: SimArgs) -> Result<(), Failure> {
    let config = SimConfig {
        relay_interval_ms: a.relay_interval_ms,
        mode: a.mode,
        poll_interval_ms: a.poll_interval_ms,
        latency: a.latency,
        write_model: a.write_model,
        trace: a.trace.with_seed(a.seed),
        duration_ms: a.duration_ms,
        seed: a.seed,
        max_inflight: a.max_inflight,
        request_timeout_ms: a.timeout_ms,
    };
    let metrics = run_sim(&config).map_err(|e: SimError| Failure::Usage(e.into()))?;
    write_report(&[SimRow { config, metrics }], &a.output)
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.grid).with_context(|| format!("cannot read {}", a.grid.display()))?;
    let grid = SweepGrid::parse(&text, SimConfig::default()).map_err(|e| Failure::Usage(e.into()))?;
    let rows = sweep(&grid).map_err(|e| Failure::Usage(e.into()))?;
    write_report(&rows, &a.output)
}

async fn cmd_e2e(a: E2eArgs) -> Result<(), Failure> {
    if a.relay_interval_ms == 0 || a.poll_interval_ms == 0 {
        return Err(Failure::Usage(anyhow!("intervals must be positive")));
    }
    let config = E2eConfig {
        relay_interval_ms: a.relay_interval_ms,
        poll_interval_ms: a.poll_interval_ms,
        ticks: a.ticks,
        grace_ms: a.grace_ms,
        min_observed: a.min_observed,
        ..E2eConfig::default()
    };
    let report = run_e2e(&config).await.map_err(|e| Failure::Runtime(e.into()))?;
    report.write_text(io::stdout().lock())?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}
