//! In-process end-to-end run: web host, relay and poller over loopback.

use std::fmt;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::sync::Arc;

use thiserror::Error;
use tokio::sync::oneshot;

use crate::codec::{Triple, DEFAULT_FETCH_PATH, DEFAULT_INGEST_PATH};
use crate::relay::{run_relay, ChannelMode, RelayConfig, RelayError, RelayMetrics};
use crate::retrieval::{run_poll, PollConfig, PollError, PollLimit, PollMetrics};
use crate::sensor::TraceSpec;
use crate::transport::{HttpTransport, Transport};
use crate::webhost::{Persistence, Service, ServiceConfig, ServiceError};

#[derive(Debug, Clone, PartialEq)]
pub struct E2eConfig {
    pub relay_interval_ms: u64,
    pub poll_interval_ms: u64,
    pub ticks: u64,
    /// Extra polling time after the last relay tick.
    pub grace_ms: u64,
    /// Fraction of relayed versions the poller must see.
    pub min_observed: f64,
    pub step_increment: f64,
}

impl Default for E2eConfig {
    fn default() -> Self {
        E2eConfig {
            relay_interval_ms: 50,
            poll_interval_ms: 20,
            ticks: 100,
            grace_ms: 200,
            min_observed: 0.95,
            step_increment: 0.01,
        }
    }
}

#[derive(Debug, Error)]
pub enum E2eError {
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error(transparent)]
    Poll(#[from] PollError),
    #[error("component task failed: {0}")]
    Join(String),
}

/// Why a run failed. Only the first problem found is reported.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `later` was retrieved after `earlier` but relayed before it.
    OutOfOrder {
        earlier: Triple,
        later: Triple,
    },
    NeverRelayed {
        triple: Triple,
    },
    DecodeFailures(u64),
    BelowThreshold {
        observed: usize,
        relayed: usize,
        min: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfOrder { earlier, later } => {
                write!(
                    f,
                    "out of order: retrieved ({earlier}) then ({later}), relayed the other way round"
                )
            }
            Violation::NeverRelayed { triple } => write!(f, "retrieved ({triple}) was never relayed"),
            Violation::DecodeFailures(n) => write!(f, "{n} decode failures"),
            Violation::BelowThreshold { observed, relayed, min } => {
                write!(f, "observed {observed} of {relayed} versions, need {:.0}%", min * 100.0)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct E2eReport {
    pub config: E2eConfig,
    pub relayed: Vec<Triple>,
    pub retrieved: Vec<Triple>,
    pub relay: RelayMetrics,
    pub poll: PollMetrics,
    pub violation: Option<Violation>,
    pub warnings: Vec<String>,
    pub wall_ms: f64,
}

impl E2eReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }

    pub fn observed_fraction(&self) -> f64 {
        if self.relayed.is_empty() {
            1.0
        } else {
            self.retrieved.len() as f64 / self.relayed.len() as f64
        }
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "e2e: {}", if self.passed() { "PASS" } else { "FAIL" })?;
        writeln!(
            out,
            "relay_interval_ms={} poll_interval_ms={} ticks={}",
            self.config.relay_interval_ms, self.config.poll_interval_ms, self.config.ticks
        )?;
        writeln!(out, "relayed={}", self.relayed.len())?;
        writeln!(out, "retrieved_distinct={}", self.retrieved.len())?;
        writeln!(out, "observed_fraction={:.3}", self.observed_fraction())?;
        writeln!(out, "decode_failures={}", self.poll.decode_failure_total())?;
        writeln!(out, "relay_failures={}", self.relay.requests_failed)?;
        writeln!(out, "wall_ms={:.0}", self.wall_ms)?;
        for w in &self.warnings {
            writeln!(out, "warning: {w}")?;
        }
        if let Some(v) = &self.violation {
            writeln!(out, "violation: {v}")?;
        }
        Ok(())
    }
}

/// Checks `retrieved` against `relayed`: an order-preserving subsequence,
/// no decode failures and enough coverage. Coverage is only a warning when
/// the poller is not faster than the relay.
pub fn verify(
    relayed: &[Triple],
    retrieved: &[Triple],
    decode_failures: u64,
    min_observed: f64,
    coverage_fatal: bool,
) -> (Option<Violation>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut pos = 0;
    for (i, t) in retrieved.iter().enumerate() {
        match relayed[pos..].iter().position(|r| r == t) {
            Some(off) => pos += off + 1,
            None if relayed.iter().any(|r| r == t) => {
                let earlier = retrieved[i.saturating_sub(1)];
                return (Some(Violation::OutOfOrder { earlier, later: *t }), warnings);
            }
            None => return (Some(Violation::NeverRelayed { triple: *t }), warnings),
        }
    }
    if decode_failures > 0 {
        return (Some(Violation::DecodeFailures(decode_failures)), warnings);
    }
    let observed = retrieved.len();
    if (observed as f64) < min_observed * relayed.len() as f64 {
        let v = Violation::BelowThreshold {
            observed,
            relayed: relayed.len(),
            min: min_observed,
        };
        if coverage_fatal {
            return (Some(v), warnings);
        }
        warnings.push(format!("missed {} versions ({v})", relayed.len() - observed));
    }
    (None, warnings)
}

/// Starts a memory-backed service on an ephemeral loopback port, then runs
/// a synchronous relay on a step trace and a poller against it.
pub async fn run_e2e(config: &E2eConfig) -> Result<E2eReport, E2eError> {
    let started = std::time::Instant::now();
    let service = Service::bind(&ServiceConfig {
        bind: SocketAddr::from(([127, 0, 0, 1], 0)),
        persistence: Persistence::MemoryOnly,
        ..ServiceConfig::default()
    })
    .await?;
    let addr = service.local_addr().map_err(|e| E2eError::Join(e.to_string()))?;
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let server = tokio::spawn(service.run(async {
        let _ = stop_rx.await;
    }));

    let transport: Arc<dyn Transport> = Arc::new(HttpTransport::new());
    let base = format!("http://{addr}");
    let poll_cfg = PollConfig {
        interval_ms: config.poll_interval_ms,
        source_url: format!("{base}{DEFAULT_FETCH_PATH}"),
        limit: PollLimit::DurationMs(config.ticks * config.relay_interval_ms + config.grace_ms),
        request_timeout_ms: 2_000,
    };
    let relay_cfg = RelayConfig {
        interval_ms: config.relay_interval_ms,
        mode: ChannelMode::Synchronous,
        endpoint: base,
        ingest_path: DEFAULT_INGEST_PATH.to_owned(),
        ticks: config.ticks,
        request_timeout_ms: 2_000,
        ..RelayConfig::default()
    };

    let poll_transport = transport.clone();
    let poller = tokio::spawn(async move { run_poll(&poll_cfg, poll_transport, |_| {}).await });
    let relay = run_relay(&relay_cfg, TraceSpec::step(config.step_increment), transport, None).await;
    let poll = poller.await.map_err(|e| E2eError::Join(e.to_string()));
    let _ = stop_tx.send(());
    let served = server.await.map_err(|e| E2eError::Join(e.to_string()));

    let relay = relay?;
    let poll = poll??;
    served??;

    let relayed = relay.delivered();
    let retrieved = poll.distinct_sequence();
    let coverage_fatal = config.poll_interval_ms < config.relay_interval_ms;
    let (violation, warnings) = verify(
        &relayed,
        &retrieved,
        poll.metrics.decode_failure_total(),
        config.min_observed,
        coverage_fatal,
    );
    Ok(E2eReport {
        config: config.clone(),
        relayed,
        retrieved,
        relay,
        poll: poll.metrics,
        violation,
        warnings,
        wall_ms: started.elapsed().as_secs_f64() * 1000.0,
    })
}
