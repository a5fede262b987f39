//! Deterministic discrete-event simulation of relay, store and poller.
//!
//! The clock is virtual and counts microseconds. Intervals and latency
//! samples are whole milliseconds; only the byte stream of a
//! `truncate_then_stream` write lands between millisecond marks.
//!
//! Request timeline (latency `L`, write duration `w = len / rate`):
//!
//! * `send`: the relay fires. The server opens the store; under
//!   `truncate_then_stream` this truncates it to zero length.
//! * `[send + L - w, send + L]`: the record bytes stream in, one event per
//!   byte, each at its writer's own offset. Under `atomic` the whole record
//!   is swapped in at `send + L` instead.
//! * `max(send + L, send + w)`: the response reaches the relay.
//!
//! The whole round trip counts as server-side handling, so the window
//! between open and write is as wide as the latency. Two overlapping
//! requests can therefore both open before either writes, and a shorter
//! record written last leaves the tail of the longer one behind.
//!
//! A poll reads the store at its send instant and its response arrives one
//! latency sample later. At equal timestamps store writes apply first, then
//! relay completions, relay sends and finally poll reads.

mod report;
mod store;

pub use report::{report, sweep, ReportFormat, SimRow, SweepError, SweepGrid, REPORT_COLUMNS};
pub use store::ByteStore;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

use crate::codec::{decode_record, encode_record};
use crate::relay::{ChannelMode, RelayMetrics, RequestOutcome, RequestRecord};
use crate::retrieval::{PollMetrics, PollObservation, PollTracker};
use crate::schedule::next_sync_tick;
use crate::sensor::{SampleSource, TraceError, TraceSpec};
use crate::transport::TransportError;

const US_PER_MS: u64 = 1000;
/// Upper bound on a single latency sample (one hour).
const MAX_LATENCY_MS: f64 = 3_600_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid sim config: {0}")]
    InvalidConfig(String),
}

/// Per-request round-trip latency in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatencyModel {
    Fixed(u64),
    /// Inclusive bounds.
    Uniform(u64, u64),
    /// `exp(N(mu, sigma))`, rounded to whole ms.
    LogNormal {
        mu: f64,
        sigma: f64,
    },
}

impl LatencyModel {
    fn validate(&self) -> Result<(), SimError> {
        match *self {
            LatencyModel::Fixed(_) => Ok(()),
            LatencyModel::Uniform(lo, hi) if lo <= hi => Ok(()),
            LatencyModel::Uniform(..) => Err(SimError::InvalidConfig("uniform latency needs lo <= hi".into())),
            LatencyModel::LogNormal { mu, sigma } if mu.is_finite() && sigma.is_finite() && sigma >= 0.0 => Ok(()),
            LatencyModel::LogNormal { .. } => Err(SimError::InvalidConfig(
                "lognormal latency needs finite mu and sigma >= 0".into(),
            )),
        }
    }

    fn sample_ms(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            LatencyModel::Fixed(l) => l,
            LatencyModel::Uniform(lo, hi) => rng.random_range(lo..=hi),
            LatencyModel::LogNormal { mu, sigma } => {
                let d = LogNormal::new(mu, sigma).expect("validated");
                d.sample(rng).round().clamp(0.0, MAX_LATENCY_MS) as u64
            }
        }
    }

    /// Largest value a sample can take, if bounded.
    pub fn max_ms(&self) -> Option<u64> {
        match *self {
            LatencyModel::Fixed(l) => Some(l),
            LatencyModel::Uniform(_, hi) => Some(hi),
            LatencyModel::LogNormal { sigma: 0.0, mu } => Some(mu.exp().round() as u64),
            LatencyModel::LogNormal { .. } => None,
        }
    }
}

impl fmt::Display for LatencyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatencyModel::Fixed(l) => write!(f, "fixed:{l}"),
            LatencyModel::Uniform(lo, hi) => write!(f, "uniform:{lo},{hi}"),
            LatencyModel::LogNormal { mu, sigma } => write!(f, "lognormal:{mu},{sigma}"),
        }
    }
}

impl FromStr for LatencyModel {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SimError::InvalidConfig(format!("bad latency `{s}`"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        let model = match (kind, parts.as_slice()) {
            ("fixed", [l]) => LatencyModel::Fixed(l.parse().map_err(|_| bad())?),
            ("uniform", [lo, hi]) => {
                LatencyModel::Uniform(lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?)
            }
            ("lognormal", [mu, sigma]) => LatencyModel::LogNormal {
                mu: mu.parse().map_err(|_| bad())?,
                sigma: sigma.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WriteModel {
    Atomic,
    TruncateThenStream { bytes_per_ms: f64 },
}

impl fmt::Display for WriteModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WriteModel::Atomic => f.write_str("atomic"),
            WriteModel::TruncateThenStream { bytes_per_ms } => write!(f, "torn:{bytes_per_ms}"),
        }
    }
}

impl FromStr for WriteModel {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "atomic" {
            return Ok(WriteModel::Atomic);
        }
        let rate = s
            .strip_prefix("torn:")
            .and_then(|r| r.parse::<f64>().ok())
            .ok_or_else(|| SimError::InvalidConfig(format!("bad write model `{s}`")))?;
        let m = WriteModel::TruncateThenStream { bytes_per_ms: rate };
        m.validate()?;
        Ok(m)
    }
}

impl WriteModel {
    fn validate(&self) -> Result<(), SimError> {
        match *self {
            WriteModel::TruncateThenStream { bytes_per_ms } if !(bytes_per_ms.is_finite() && bytes_per_ms > 0.0) => {
                Err(SimError::InvalidConfig("bytes_per_ms must be finite and > 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Time to stream `len` bytes, in µs.
    fn stream_us(&self, len: usize) -> u64 {
        match *self {
            WriteModel::Atomic => 0,
            WriteModel::TruncateThenStream { bytes_per_ms } => byte_offset_us(bytes_per_ms, len),
        }
    }
}

/// Microseconds from stream start until the first `n` bytes are written.
fn byte_offset_us(bytes_per_ms: f64, n: usize) -> u64 {
    (n as f64 * US_PER_MS as f64 / bytes_per_ms).ceil() as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub relay_interval_ms: u64,
    pub mode: ChannelMode,
    pub poll_interval_ms: u64,
    pub latency: LatencyModel,
    pub write_model: WriteModel,
    pub trace: TraceSpec,
    pub duration_ms: u64,
    pub seed: u64,
    /// Asynchronous in-flight cap; `None` is unbounded.
    pub max_inflight: Option<usize>,
    /// Relay gives up on a request after this long. The server-side write
    /// still happens.
    pub request_timeout_ms: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            relay_interval_ms: 350,
            mode: ChannelMode::Synchronous,
            poll_interval_ms: 100,
            latency: LatencyModel::Fixed(0),
            write_model: WriteModel::Atomic,
            trace: TraceSpec::random_walk(0.5, 0),
            duration_ms: 10_000,
            seed: 0,
            max_inflight: None,
            request_timeout_ms: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_owned()));
        if self.relay_interval_ms == 0 || self.poll_interval_ms == 0 || self.duration_ms == 0 {
            return bad("intervals and duration must be positive");
        }
        if self.max_inflight == Some(0) {
            return bad("max_inflight must be >= 1");
        }
        if self.request_timeout_ms == Some(0) {
            return bad("request timeout must be positive");
        }
        self.latency.validate()?;
        self.write_model.validate()?;
        self.trace
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimMetrics {
    pub relay: RelayMetrics,
    pub poll: PollMetrics,
    /// Non-empty reads that failed to decode or decoded to a triple that was
    /// never relayed.
    pub torn_read_count: u64,
    /// Pairs (earlier-sent, later-sent) whose commits landed in reverse order.
    pub out_of_order_commits: u64,
    pub versions_relayed: u64,
    pub versions_observed: u64,
    /// Relayed versions no poll was attributed to; see [`versions_missed`].
    pub versions_missed: u64,
    /// Ground truth: poll time minus last change of the store content.
    pub max_staleness_ms: Option<f64>,
}

/// Ground-truth event log, in processing order.
#[derive(Debug, Clone, PartialEq)]
pub enum LogEvent {
    Sent {
        version: u64,
        at_us: u64,
    },
    Committed {
        version: u64,
        at_us: u64,
    },
    Read {
        at_us: u64,
        version: Option<u64>,
        torn: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    // Declaration order is the tie-break at equal time.
    WriteByte { req: usize, offset: usize },
    Commit { req: usize },
    RelayDone { req: usize },
    RelayTick { tick: u64 },
    PollRead { tick: u64 },
    PollDone { tick: u64 },
}

struct Request {
    record: Vec<u8>,
    timed_out: bool,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    now: u64,
    end: u64,
    queue: BinaryHeap<Reverse<(u64, Event, u64)>>,
    next_id: u64,
    relay_rng: ChaCha8Rng,
    poll_rng: ChaCha8Rng,
    source: SampleSource,
    store: ByteStore,
    requests: Vec<Request>,
    inflight: u64,
    relay: RelayMetrics,
    tracker: PollTracker,
    sent_records: HashMap<Vec<u8>, u64>,
    committed: BTreeSet<usize>,
    observed: BTreeSet<u64>,
    last_change_us: Option<u64>,
    torn: u64,
    out_of_order: u64,
    max_staleness_us: Option<u64>,
    log: Vec<LogEvent>,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self, SimError> {
        let source = SampleSource::new(cfg.trace.clone()).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let mut relay_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        relay_rng.set_stream(1);
        let mut poll_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        poll_rng.set_stream(2);
        Ok(Sim {
            cfg,
            now: 0,
            end: cfg.duration_ms * US_PER_MS,
            queue: BinaryHeap::new(),
            next_id: 0,
            relay_rng,
            poll_rng,
            source,
            store: ByteStore::default(),
            requests: Vec::new(),
            inflight: 0,
            relay: RelayMetrics::default(),
            tracker: PollTracker::default(),
            sent_records: HashMap::new(),
            committed: BTreeSet::new(),
            observed: BTreeSet::new(),
            last_change_us: None,
            torn: 0,
            out_of_order: 0,
            max_staleness_us: None,
            log: Vec::new(),
        })
    }

    fn schedule(&mut self, at: u64, ev: Event) {
        self.queue.push(Reverse((at, ev, self.next_id)));
        self.next_id += 1;
    }

    fn relay_interval_us(&self) -> u64 {
        self.cfg.relay_interval_ms * US_PER_MS
    }

    fn poll_interval_us(&self) -> u64 {
        self.cfg.poll_interval_ms * US_PER_MS
    }

    fn run(mut self) -> (SimMetrics, Vec<LogEvent>) {
        self.schedule(0, Event::RelayTick { tick: 0 });
        self.schedule(0, Event::PollRead { tick: 0 });
        while let Some(Reverse((at, ev, _))) = self.queue.pop() {
            if at >= self.end {
                break;
            }
            self.now = at;
            match ev {
                Event::WriteByte { req, offset } => self.on_write_byte(req, offset),
                Event::Commit { req } => self.on_commit(req),
                Event::RelayDone { req } => self.on_relay_done(req),
                Event::RelayTick { tick } => self.on_relay_tick(tick),
                Event::PollRead { tick } => self.on_poll_read(tick),
                Event::PollDone { tick } => self.on_poll_done(tick),
            }
        }
        let metrics = SimMetrics {
            versions_relayed: self.requests.len() as u64,
            versions_observed: self.observed.len() as u64,
            versions_missed: 0,
            torn_read_count: self.torn,
            out_of_order_commits: self.out_of_order,
            max_staleness_ms: self.max_staleness_us.map(|us| us as f64 / US_PER_MS as f64),
            relay: self.relay,
            poll: self.tracker.metrics,
        };
        (metrics, self.log)
    }

    fn mark_change(&mut self, changed: bool) {
        if changed {
            self.last_change_us = Some(self.now);
        }
    }

    fn on_relay_tick(&mut self, tick: u64) {
        let interval = self.relay_interval_us();
        self.relay.ticks_fired += 1;
        let capped = self.cfg.mode == ChannelMode::Asynchronous
            && self.cfg.max_inflight.is_some_and(|cap| self.inflight >= cap as u64);
        if capped {
            self.relay.ticks_dropped += 1;
        } else if !self.send(tick) {
            return;
        }
        if self.cfg.mode == ChannelMode::Asynchronous || capped {
            self.schedule((tick + 1) * interval, Event::RelayTick { tick: tick + 1 });
        }
    }

    /// Starts request for `tick`. Returns false when the trace ran out.
    fn send(&mut self, tick: u64) -> bool {
        let t_ms = tick * self.cfg.relay_interval_ms;
        let sample = match self.source.next_sample(tick, t_ms) {
            Ok(s) => s,
            Err(TraceError::ReplayExhausted { .. }) => return false,
            Err(e) => unreachable!("trace validated up front: {e}"),
        };
        let record = encode_record(&sample).into_bytes();
        let req = self.requests.len();
        let version = req as u64;

        self.relay.on_start(self.inflight);
        self.inflight += 1;
        self.relay.requests.push(RequestRecord {
            seq: sample.seq,
            triple: sample.triple(),
            start_ms: self.now as f64 / US_PER_MS as f64,
            end_ms: None,
            outcome: None,
        });
        self.sent_records.insert(record.clone(), version);
        self.log.push(LogEvent::Sent {
            version,
            at_us: self.now,
        });

        let latency_us = self.cfg.latency.sample_ms(&mut self.relay_rng) * US_PER_MS;
        let stream_us = self.cfg.write_model.stream_us(record.len());
        let complete = self.now + latency_us.max(stream_us);
        match self.cfg.write_model {
            WriteModel::Atomic => self.schedule(complete, Event::Commit { req }),
            WriteModel::TruncateThenStream { bytes_per_ms } => {
                let changed = self.store.truncate();
                self.mark_change(changed);
                let stream_start = complete - stream_us;
                for offset in 0..record.len() {
                    let at = stream_start + byte_offset_us(bytes_per_ms, offset + 1);
                    self.schedule(at, Event::WriteByte { req, offset });
                }
            }
        }
        let timed_out = self
            .cfg
            .request_timeout_ms
            .is_some_and(|t| t * US_PER_MS < complete - self.now);
        let done = match self.cfg.request_timeout_ms {
            Some(t) if timed_out => self.now + t * US_PER_MS,
            _ => complete,
        };
        self.requests.push(Request { record, timed_out });
        self.schedule(done, Event::RelayDone { req });
        true
    }

    fn on_write_byte(&mut self, req: usize, offset: usize) {
        let record = &self.requests[req].record;
        let byte = record[offset];
        let last = offset + 1 == record.len();
        let changed = self.store.write_byte(offset, byte);
        self.mark_change(changed);
        if last {
            let record = self.requests[req].record.clone();
            self.store.claim(&record, req as u64);
            self.record_commit(req);
        }
    }

    fn on_commit(&mut self, req: usize) {
        let record = self.requests[req].record.clone();
        let changed = self.store.replace(&record, req as u64);
        self.mark_change(changed);
        self.record_commit(req);
    }

    fn record_commit(&mut self, req: usize) {
        self.out_of_order += self.committed.range(req + 1..).count() as u64;
        self.committed.insert(req);
        self.log.push(LogEvent::Committed {
            version: req as u64,
            at_us: self.now,
        });
    }

    fn on_relay_done(&mut self, req: usize) {
        self.inflight -= 1;
        let rec = &mut self.relay.requests[req];
        rec.end_ms = Some(self.now as f64 / US_PER_MS as f64);
        if self.requests[req].timed_out {
            self.relay.requests_failed += 1;
            rec.outcome = Some(RequestOutcome::Failed(TransportError::Timeout));
        } else {
            self.relay.requests_completed += 1;
            rec.outcome = Some(RequestOutcome::Completed);
        }
        if self.cfg.mode == ChannelMode::Synchronous {
            let tick = rec.seq;
            let next = next_sync_tick(self.relay_interval_us(), tick, self.now);
            let within = |k: u64| k * self.relay_interval_us() < self.end;
            let skipped = (tick + 1..next.tick).filter(|k| within(*k)).count() as u64;
            self.relay.ticks_skipped += skipped;
            self.relay.ticks_fired += skipped;
            self.schedule(next.at, Event::RelayTick { tick: next.tick });
        }
    }

    fn on_poll_read(&mut self, tick: u64) {
        let body = self.store.content().to_vec();
        let now_ms = self.now as f64 / US_PER_MS as f64;
        let obs = self.tracker.observe(&body, now_ms);

        let mut version = None;
        let mut torn = false;
        match obs {
            PollObservation::Empty => {}
            PollObservation::Failed(_) => torn = true,
            PollObservation::Sample(_) => {
                version = self.store.version().or_else(|| self.sent_records.get(&body).copied());
                torn = version.is_none();
            }
        }
        debug_assert!(torn || body.is_empty() || decode_record(&body).is_ok());
        if torn {
            self.torn += 1;
        }
        if let Some(v) = version {
            self.observed.insert(v);
        }
        if let Some(changed_at) = self.last_change_us {
            let staleness = self.now - changed_at;
            self.max_staleness_us = Some(self.max_staleness_us.map_or(staleness, |m| m.max(staleness)));
        }
        self.log.push(LogEvent::Read {
            at_us: self.now,
            version,
            torn,
        });

        let latency_us = self.cfg.latency.sample_ms(&mut self.poll_rng) * US_PER_MS;
        self.schedule(self.now + latency_us, Event::PollDone { tick });
    }

    fn on_poll_done(&mut self, tick: u64) {
        let next = next_sync_tick(self.poll_interval_us(), tick, self.now);
        self.schedule(next.at, Event::PollRead { tick: next.tick });
    }
}

pub fn run_sim(config: &SimConfig) -> Result<SimMetrics, SimError> {
    run_sim_logged(config).map(|(m, _)| m)
}

/// Like [`run_sim`], also returning the ground-truth event log.
pub fn run_sim_logged(config: &SimConfig) -> Result<(SimMetrics, Vec<LogEvent>), SimError> {
    config.validate()?;
    let (mut metrics, log) = Sim::new(config)?.run();
    metrics.versions_missed = versions_missed(&log);
    Ok((metrics, log))
}

/// Relayed versions that no poll ever attributed a read to, from the log.
pub fn versions_missed(log: &[LogEvent]) -> u64 {
    let sent: BTreeSet<u64> = log
        .iter()
        .filter_map(|e| match e {
            LogEvent::Sent { version, .. } => Some(*version),
            _ => None,
        })
        .collect();
    let read: BTreeSet<u64> = log
        .iter()
        .filter_map(|e| match e {
            LogEvent::Read { version: Some(v), .. } => Some(*v),
            _ => None,
        })
        .collect();
    sent.difference(&read).count() as u64
}
