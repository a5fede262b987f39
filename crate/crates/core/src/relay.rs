//! Data relay node: samples the source on a fixed cadence and pushes each
//! reading to the web host with a GET.
//!
//! In synchronous mode the loop awaits each request before the next tick
//! may fire, so at most one request is ever in flight. In asynchronous mode
//! every tick starts a request regardless of what is still outstanding;
//! `overlap_events` counts the starts that happened while another request
//! was in flight.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;
use tokio::task::JoinSet;
use tokio::time::Instant;

use crate::codec::{build_query, format_number, AccelSample, Triple};
use crate::schedule::next_sync_tick;
use crate::sensor::{SampleSource, TraceError, TraceSpec};
use crate::transport::{get_with_timeout, Transport, TransportError};

pub const DEFAULT_RELAY_INTERVAL_MS: u64 = 350;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelMode {
    Synchronous,
    Asynchronous,
}

impl fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelMode::Synchronous => "sync",
            ChannelMode::Asynchronous => "async",
        })
    }
}

impl FromStr for ChannelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sync" | "synchronous" => Ok(ChannelMode::Synchronous),
            "async" | "asynchronous" => Ok(ChannelMode::Asynchronous),
            _ => Err(format!("unknown mode `{s}` (expected sync or async)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RelayConfig {
    pub interval_ms: u64,
    pub mode: ChannelMode,
    /// Base URL of the web host, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    pub ingest_path: String,
    /// Cap on concurrent requests in asynchronous mode; `None` is unbounded.
    pub max_inflight: Option<usize>,
    pub request_timeout_ms: u64,
    pub ticks: u64,
    /// Exponential backoff after failures. Off by default.
    pub backoff: bool,
}

impl Default for RelayConfig {
    fn default() -> Self {
        RelayConfig {
            interval_ms: DEFAULT_RELAY_INTERVAL_MS,
            mode: ChannelMode::Synchronous,
            endpoint: "http://127.0.0.1:8080".to_owned(),
            ingest_path: crate::codec::DEFAULT_INGEST_PATH.to_owned(),
            max_inflight: None,
            request_timeout_ms: 5_000,
            ticks: 100,
            backoff: false,
        }
    }
}

impl RelayConfig {
    pub fn validate(&self) -> Result<(), RelayError> {
        if self.interval_ms == 0 {
            return Err(RelayError::InvalidConfig("interval_ms must be > 0".into()));
        }
        if self.max_inflight == Some(0) {
            return Err(RelayError::InvalidConfig("max_inflight must be >= 1".into()));
        }
        if self.request_timeout_ms == 0 {
            return Err(RelayError::InvalidConfig("request_timeout_ms must be > 0".into()));
        }
        if self.ingest_path.is_empty() {
            return Err(RelayError::InvalidConfig("ingest_path is empty".into()));
        }
        Ok(())
    }

    fn url_for(&self, s: &AccelSample) -> String {
        format!(
            "{}{}",
            self.endpoint.trim_end_matches('/'),
            build_query(s, &self.ingest_path)
        )
    }
}

#[derive(Debug, Error)]
pub enum RelayError {
    #[error("invalid relay config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RequestOutcome {
    Completed,
    Failed(TransportError),
}

/// One relayed request. Times are milliseconds since loop start.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub seq: u64,
    pub triple: Triple,
    pub start_ms: f64,
    pub end_ms: Option<f64>,
    pub outcome: Option<RequestOutcome>,
}

impl RequestRecord {
    pub fn latency_ms(&self) -> Option<f64> {
        self.end_ms.map(|e| e - self.start_ms)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelayMetrics {
    pub ticks_fired: u64,
    /// Synchronous mode: overdue ticks dropped while a request was running.
    pub ticks_skipped: u64,
    /// Asynchronous mode: ticks dropped at the in-flight cap or during backoff.
    pub ticks_dropped: u64,
    pub requests_started: u64,
    pub requests_completed: u64,
    pub requests_failed: u64,
    pub overlap_events: u64,
    pub max_observed_inflight: u64,
    pub requests: Vec<RequestRecord>,
}

impl RelayMetrics {
    pub fn latencies_ms(&self) -> Vec<f64> {
        self.requests.iter().filter_map(RequestRecord::latency_ms).collect()
    }

    /// Triples of successful requests, in send order.
    pub fn delivered(&self) -> Vec<Triple> {
        self.requests
            .iter()
            .filter(|r| r.outcome == Some(RequestOutcome::Completed))
            .map(|r| r.triple)
            .collect()
    }

    /// True when no two request lifetimes intersect.
    pub fn is_serialized(&self) -> bool {
        let mut spans: Vec<(f64, f64)> = self
            .requests
            .iter()
            .map(|r| (r.start_ms, r.end_ms.unwrap_or(f64::INFINITY)))
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        spans.windows(2).all(|w| w[0].1 <= w[1].0)
    }

    pub(crate) fn on_start(&mut self, inflight_before: u64) {
        self.requests_started += 1;
        if inflight_before > 0 {
            self.overlap_events += 1;
        }
        self.max_observed_inflight = self.max_observed_inflight.max(inflight_before + 1);
    }

    /// Per-request CSV followed by a `# summary` block of `key=value` lines.
    pub fn write_document<W: Write>(&self, out: W) -> io::Result<()> {
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(["seq", "start_ms", "end_ms", "latency_ms", "outcome", "x", "y", "z"])?;
        for r in &self.requests {
            let outcome = match &r.outcome {
                None => "inflight",
                Some(RequestOutcome::Completed) => "ok",
                Some(RequestOutcome::Failed(e)) => e.kind(),
            };
            let opt = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_default();
            csv.write_record([
                r.seq.to_string(),
                format!("{:.3}", r.start_ms),
                opt(r.end_ms),
                opt(r.latency_ms()),
                outcome.to_owned(),
                format_number(r.triple.x),
                format_number(r.triple.y),
                format_number(r.triple.z),
            ])?;
        }
        let mut out = csv.into_inner().map_err(|e| e.into_error())?;
        writeln!(out)?;
        writeln!(out, "# summary")?;
        for (k, v) in self.summary() {
            writeln!(out, "{k}={v}")?;
        }
        Ok(())
    }

    pub fn summary(&self) -> Vec<(&'static str, String)> {
        let lat = self.latencies_ms();
        let mean = if lat.is_empty() {
            0.0
        } else {
            lat.iter().sum::<f64>() / lat.len() as f64
        };
        let max = lat.iter().copied().fold(0.0, f64::max);
        vec![
            ("ticks_fired", self.ticks_fired.to_string()),
            ("ticks_skipped", self.ticks_skipped.to_string()),
            ("ticks_dropped", self.ticks_dropped.to_string()),
            ("requests_started", self.requests_started.to_string()),
            ("requests_completed", self.requests_completed.to_string()),
            ("requests_failed", self.requests_failed.to_string()),
            ("overlap_events", self.overlap_events.to_string()),
            ("max_observed_inflight", self.max_observed_inflight.to_string()),
            ("latency_mean_ms", format!("{mean:.3}")),
            ("latency_max_ms", format!("{max:.3}")),
        ]
    }
}

/// One display line per relayed sample; values are the exact wire texts.
pub fn echo_line(s: &AccelSample) -> String {
    format!(
        "#{} x={} y={} z={}",
        s.seq,
        format_number(s.x),
        format_number(s.y),
        format_number(s.z)
    )
}

pub fn echo_sample(out: Option<&mut (dyn Write + Send + '_)>, s: &AccelSample) {
    if let Some(out) = out {
        // Display is best-effort; a closed stdout must not stop the relay.
        let _ = writeln!(out, "{}", echo_line(s));
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

fn backoff_delay_ms(interval_ms: u64, consecutive_failures: u32) -> u64 {
    if consecutive_failures == 0 {
        0
    } else {
        interval_ms.saturating_mul(1 << (consecutive_failures - 1).min(5))
    }
}

/// Runs the relay loop for `config.ticks` grid ticks and returns the metrics.
///
/// Transport failures are counted and the loop carries on. A replay trace
/// that runs out ends the loop early.
pub async fn run_relay(
    config: &RelayConfig,
    source: TraceSpec,
    transport: Arc<dyn Transport>,
    echo: Option<&mut (dyn Write + Send + '_)>,
) -> Result<RelayMetrics, RelayError> {
    config.validate()?;
    let mut source = SampleSource::new(source)?;
    match config.mode {
        ChannelMode::Synchronous => run_sync(config, &mut source, transport, echo).await,
        ChannelMode::Asynchronous => run_async(config, &mut source, transport, echo).await,
    }
}

async fn run_sync(
    config: &RelayConfig,
    source: &mut SampleSource,
    transport: Arc<dyn Transport>,
    mut echo: Option<&mut (dyn Write + Send + '_)>,
) -> Result<RelayMetrics, RelayError> {
    let mut m = RelayMetrics::default();
    let interval = config.interval_ms;
    let timeout = Duration::from_millis(config.request_timeout_ms);
    let start = Instant::now();
    let (mut tick, mut fire_ms) = (0u64, 0u64);
    let mut failures = 0u32;

    while tick < config.ticks {
        tokio::time::sleep_until(start + Duration::from_millis(fire_ms)).await;
        m.ticks_fired += 1;
        let sample = match source.next_sample(tick, tick * interval) {
            Ok(s) => s,
            Err(TraceError::ReplayExhausted { .. }) => break,
            Err(e) => return Err(e.into()),
        };
        echo_sample(echo.as_deref_mut(), &sample);

        m.on_start(0);
        let start_ms = elapsed_ms(start);
        let result = get_with_timeout(transport.as_ref(), &config.url_for(&sample), timeout).await;
        let end_ms = elapsed_ms(start);
        let outcome = match result {
            Ok(_) => {
                m.requests_completed += 1;
                failures = 0;
                RequestOutcome::Completed
            }
            Err(e) => {
                m.requests_failed += 1;
                failures += 1;
                RequestOutcome::Failed(e)
            }
        };
        m.requests.push(RequestRecord {
            seq: sample.seq,
            triple: sample.triple(),
            start_ms,
            end_ms: Some(end_ms),
            outcome: Some(outcome),
        });

        let mut done = start.elapsed().as_millis() as u64;
        if config.backoff {
            done += backoff_delay_ms(interval, failures);
        }
        let next = next_sync_tick(interval, tick, done);
        let skipped = next.skipped.min(config.ticks.saturating_sub(tick + 1));
        m.ticks_skipped += skipped;
        m.ticks_fired += skipped;
        tick = next.tick;
        fire_ms = next.at;
    }
    Ok(m)
}

struct AsyncShared {
    metrics: RelayMetrics,
    inflight: u64,
    failures: u32,
    /// Backoff: no new starts before this many ms since loop start.
    resume_at_ms: f64,
}

async fn run_async(
    config: &RelayConfig,
    source: &mut SampleSource,
    transport: Arc<dyn Transport>,
    mut echo: Option<&mut (dyn Write + Send + '_)>,
) -> Result<RelayMetrics, RelayError> {
    let shared = Arc::new(Mutex::new(AsyncShared {
        metrics: RelayMetrics::default(),
        inflight: 0,
        failures: 0,
        resume_at_ms: 0.0,
    }));
    let interval = config.interval_ms;
    let timeout = Duration::from_millis(config.request_timeout_ms);
    let start = Instant::now();
    let mut tasks = JoinSet::new();

    for tick in 0..config.ticks {
        tokio::time::sleep_until(start + Duration::from_millis(tick * interval)).await;
        let sample = match source.next_sample(tick, tick * interval) {
            Ok(s) => s,
            Err(TraceError::ReplayExhausted { .. }) => break,
            Err(e) => return Err(e.into()),
        };
        let index = {
            let mut g = shared.lock().unwrap();
            g.metrics.ticks_fired += 1;
            let capped = config.max_inflight.is_some_and(|cap| g.inflight >= cap as u64);
            let backing_off = config.backoff && elapsed_ms(start) < g.resume_at_ms;
            if capped || backing_off {
                g.metrics.ticks_dropped += 1;
                continue;
            }
            let before = g.inflight;
            g.metrics.on_start(before);
            g.inflight += 1;
            g.metrics.requests.push(RequestRecord {
                seq: sample.seq,
                triple: sample.triple(),
                start_ms: elapsed_ms(start),
                end_ms: None,
                outcome: None,
            });
            g.metrics.requests.len() - 1
        };
        echo_sample(echo.as_deref_mut(), &sample);

        let url = config.url_for(&sample);
        let transport = transport.clone();
        let shared = shared.clone();
        let backoff = config.backoff;
        tasks.spawn(async move {
            let result = get_with_timeout(transport.as_ref(), &url, timeout).await;
            let end_ms = elapsed_ms(start);
            let mut g = shared.lock().unwrap();
            g.inflight -= 1;
            let outcome = match result {
                Ok(_) => {
                    g.metrics.requests_completed += 1;
                    g.failures = 0;
                    RequestOutcome::Completed
                }
                Err(e) => {
                    g.metrics.requests_failed += 1;
                    g.failures += 1;
                    if backoff {
                        g.resume_at_ms = end_ms + backoff_delay_ms(interval, g.failures) as f64;
                    }
                    RequestOutcome::Failed(e)
                }
            };
            let rec = &mut g.metrics.requests[index];
            rec.end_ms = Some(end_ms);
            rec.outcome = Some(outcome);
        });
    }
    while tasks.join_next().await.is_some() {}

    let g = shared.lock().unwrap();
    Ok(g.metrics.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::TransportError;
    use async_trait::async_trait;
    use bytes::Bytes;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Answers after a fixed delay; counts concurrent calls independently
    /// of the relay's own bookkeeping.
    struct DelayTransport {
        latency: Duration,
        fail: bool,
        live: AtomicUsize,
        peak: AtomicUsize,
        urls: Mutex<Vec<String>>,
    }

    impl DelayTransport {
        fn new(latency_ms: u64) -> Arc<Self> {
            Arc::new(DelayTransport {
                latency: Duration::from_millis(latency_ms),
                fail: false,
                live: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
                urls: Mutex::new(Vec::new()),
            })
        }

        fn failing() -> Arc<Self> {
            let mut t = Arc::try_unwrap(Self::new(0)).ok().unwrap();
            t.fail = true;
            Arc::new(t)
        }
    }

    #[async_trait]
    impl Transport for DelayTransport {
        async fn get(&self, url: &str) -> Result<Bytes, TransportError> {
            let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            self.urls.lock().unwrap().push(url.to_owned());
            tokio::time::sleep(self.latency).await;
            self.live.fetch_sub(1, Ordering::SeqCst);
            if self.fail {
                Err(TransportError::Unreachable("refused".into()))
            } else {
                Ok(Bytes::new())
            }
        }
    }

    fn cfg(mode: ChannelMode, ticks: u64) -> RelayConfig {
        RelayConfig {
            mode,
            ticks,
            request_timeout_ms: 60_000,
            ..RelayConfig::default()
        }
    }

    fn consistent(m: &RelayMetrics) {
        assert!(m.requests_completed + m.requests_failed <= m.requests_started);
        assert!(m.requests_started <= m.ticks_fired);
        assert_eq!(m.requests.len() as u64, m.requests_started);
    }

    #[tokio::test(start_paused = true)]
    async fn sync_never_overlaps_under_any_latency() {
        for latency in [0, 100, 349, 350, 500, 1200] {
            let t = DelayTransport::new(latency);
            let m = run_relay(
                &cfg(ChannelMode::Synchronous, 1000),
                TraceSpec::step(0.01),
                t.clone(),
                None,
            )
            .await
            .unwrap();
            assert_eq!(m.overlap_events, 0, "latency {latency}");
            assert_eq!(m.max_observed_inflight, 1);
            assert_eq!(t.peak.load(Ordering::SeqCst), 1);
            assert!(m.is_serialized());
            assert_eq!(m.ticks_fired, 1000);
            consistent(&m);
        }
    }

    #[tokio::test(start_paused = true)]
    async fn sync_rate_follows_slower_of_interval_and_latency() {
        for latency in [100u64, 500, 800] {
            let t = DelayTransport::new(latency);
            let m = run_relay(&cfg(ChannelMode::Synchronous, 1000), TraceSpec::step(0.01), t, None)
                .await
                .unwrap();
            assert!(m.requests_started >= 200);
            let first = m.requests.first().unwrap().start_ms;
            let last = m.requests.last().unwrap().start_ms;
            let rate = (m.requests_started - 1) as f64 / (last - first);
            let expected = 1.0 / 350f64.max(latency as f64);
            assert!(
                (rate - expected).abs() / expected < 0.10,
                "latency {latency}: {rate} vs {expected}"
            );
        }
    }

    #[tokio::test(start_paused = true)]
    async fn async_zero_latency_never_overlaps() {
        let t = DelayTransport::new(0);
        let m = run_relay(&cfg(ChannelMode::Asynchronous, 1000), TraceSpec::step(0.01), t, None)
            .await
            .unwrap();
        assert_eq!(m.overlap_events, 0);
        assert_eq!(m.requests_started, 1000);
        assert_eq!(m.requests_completed, 1000);
    }

    /// In-flight intervals on the ideal schedule: request k lives on
    /// `[k*I, k*I + L)`. Counts starts that land inside an earlier interval.
    fn overlap_oracle(interval: u64, latency: u64, ticks: u64) -> (u64, u64) {
        let mut overlaps = 0;
        let mut peak = 0;
        for k in 0..ticks {
            let t = k * interval;
            let live = (0..k).filter(|j| j * interval + latency > t).count() as u64;
            if live > 0 {
                overlaps += 1;
            }
            peak = peak.max(live + 1);
        }
        (overlaps, peak)
    }

    #[tokio::test(start_paused = true)]
    async fn async_overlap_matches_schedule_oracle() {
        for latency in [200u64, 500, 1000] {
            let t = DelayTransport::new(latency);
            let m = run_relay(
                &cfg(ChannelMode::Asynchronous, 1000),
                TraceSpec::step(0.01),
                t.clone(),
                None,
            )
            .await
            .unwrap();
            let (overlaps, peak) = overlap_oracle(350, latency, 1000);
            assert_eq!(m.overlap_events, overlaps, "latency {latency}");
            assert_eq!(m.max_observed_inflight, peak);
            assert_eq!(t.peak.load(Ordering::SeqCst) as u64, peak);
            consistent(&m);
        }
        let (overlaps, _) = overlap_oracle(350, 500, 1000);
        assert_eq!(overlaps, 999);
    }

    #[tokio::test(start_paused = true)]
    async fn async_cap_drops_ticks() {
        let t = DelayTransport::new(1000);
        let config = RelayConfig {
            max_inflight: Some(1),
            ..cfg(ChannelMode::Asynchronous, 100)
        };
        let m = run_relay(&config, TraceSpec::step(0.01), t.clone(), None)
            .await
            .unwrap();
        assert_eq!(t.peak.load(Ordering::SeqCst), 1);
        assert_eq!(m.overlap_events, 0);
        assert!(m.ticks_dropped > 0);
        assert_eq!(m.ticks_dropped + m.requests_started, m.ticks_fired);
    }

    #[tokio::test(start_paused = true)]
    async fn failures_are_counted_and_loop_continues() {
        let t = DelayTransport::failing();
        let m = run_relay(
            &cfg(ChannelMode::Synchronous, 20),
            TraceSpec::step(0.01),
            t.clone(),
            None,
        )
        .await
        .unwrap();
        assert_eq!(m.requests_failed, 20);
        assert_eq!(m.requests_completed, 0);

        let backoff = RelayConfig {
            backoff: true,
            ..cfg(ChannelMode::Synchronous, 20)
        };
        let b = run_relay(&backoff, TraceSpec::step(0.01), DelayTransport::failing(), None)
            .await
            .unwrap();
        assert!(b.requests_started < 20);
        assert!(b.ticks_skipped > 0);
    }

    #[tokio::test(start_paused = true)]
    async fn timeout_counts_as_failure() {
        let t = DelayTransport::new(2000);
        let config = RelayConfig {
            request_timeout_ms: 100,
            ..cfg(ChannelMode::Synchronous, 5)
        };
        let m = run_relay(&config, TraceSpec::step(0.01), t, None).await.unwrap();
        assert_eq!(m.requests_failed, 5);
        assert!(m
            .requests
            .iter()
            .all(|r| r.outcome == Some(RequestOutcome::Failed(TransportError::Timeout))));
    }

    #[tokio::test(start_paused = true)]
    async fn requests_carry_encoded_samples() {
        let t = DelayTransport::new(0);
        let config = RelayConfig {
            endpoint: "http://h:1/".into(),
            ..cfg(ChannelMode::Synchronous, 2)
        };
        run_relay(&config, TraceSpec::constant(1.5, -2.25, 9.81), t.clone(), None)
            .await
            .unwrap();
        let urls = t.urls.lock().unwrap().clone();
        assert_eq!(
            urls[0],
            "http://h:1/main.php?Editbox1=1.5&Editbox2=-2.25&Editbox3=9.81&Button1=Submit"
        );
        assert_eq!(urls.len(), 2);
    }

    #[tokio::test(start_paused = true)]
    async fn echo_lines_match_codec_text() {
        let t = DelayTransport::new(0);
        let mut out: Vec<u8> = Vec::new();
        let config = cfg(ChannelMode::Synchronous, 3);
        run_relay(&config, TraceSpec::constant(0.0, 0.0, 9.81), t.clone(), Some(&mut out))
            .await
            .unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "#0 x=0 y=0 z=9.81");

        let quiet = run_relay(&config, TraceSpec::constant(0.0, 0.0, 9.81), t, None)
            .await
            .unwrap();
        assert_eq!(quiet.requests_started, 3);
    }

    #[test]
    fn echo_line_uses_format_number() {
        let s = AccelSample::new(0.1 + 0.2, -1e-7, 9.81, 4, 0).unwrap();
        let line = echo_line(&s);
        for v in [s.x, s.y, s.z] {
            assert!(line.contains(&format!("={}", format_number(v))), "{line}");
        }
    }

    #[test]
    fn metrics_document_has_rows_and_summary() {
        let mut m = RelayMetrics::default();
        m.on_start(0);
        m.requests.push(RequestRecord {
            seq: 0,
            triple: Triple::new(1.0, 2.0, 3.0),
            start_ms: 0.0,
            end_ms: Some(1.5),
            outcome: Some(RequestOutcome::Completed),
        });
        let mut out = Vec::new();
        m.write_document(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("seq,start_ms,end_ms,latency_ms,outcome,x,y,z\n0,0.000,1.500,1.500,ok,1,2,3\n"));
        assert!(text.contains("# summary\nticks_fired=0\n"));
        assert!(text.contains("requests_started=1\n"));
    }

    #[test]
    fn config_validation() {
        assert!(RelayConfig {
            interval_ms: 0,
            ..RelayConfig::default()
        }
        .validate()
        .is_err());
        assert!(RelayConfig {
            max_inflight: Some(0),
            ..RelayConfig::default()
        }
        .validate()
        .is_err());
        assert!(RelayConfig::default().validate().is_ok());
        assert_eq!("async".parse::<ChannelMode>(), Ok(ChannelMode::Asynchronous));
        assert!("both".parse::<ChannelMode>().is_err());
    }
}
