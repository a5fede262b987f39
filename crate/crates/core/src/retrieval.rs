//! Data retrieval node: polls the stored record on a fixed cadence, splits
//! it on the delimiter and converts the fields to numbers.
//!
//! The wire has no sequence number, so freshness is judged by comparing the
//! raw bytes with the previous successful poll.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;
use tokio::time::Instant;

use crate::codec::{decode_record, format_number, DecodeError, Triple};
use crate::schedule::next_sync_tick;
use crate::transport::{get_with_timeout, Transport};

pub const DEFAULT_POLL_INTERVAL_MS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PollLimit {
    Polls(u64),
    DurationMs(u64),
}

#[derive(Debug, Clone)]
pub struct PollConfig {
    /// Should stay below the relay interval or versions can be missed.
    pub interval_ms: u64,
    pub source_url: String,
    pub limit: PollLimit,
    pub request_timeout_ms: u64,
}

impl Default for PollConfig {
    fn default() -> Self {
        PollConfig {
            interval_ms: DEFAULT_POLL_INTERVAL_MS,
            source_url: "http://127.0.0.1:8080/maina.dat".to_owned(),
            limit: PollLimit::Polls(100),
            request_timeout_ms: 5_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum PollError {
    #[error("invalid poll config: {0}")]
    InvalidConfig(String),
}

impl PollConfig {
    pub fn validate(&self) -> Result<(), PollError> {
        if self.interval_ms == 0 {
            return Err(PollError::InvalidConfig("interval_ms must be > 0".into()));
        }
        if self.request_timeout_ms == 0 {
            return Err(PollError::InvalidConfig("request_timeout_ms must be > 0".into()));
        }
        Ok(())
    }

    /// Number of grid ticks the limit allows.
    fn tick_budget(&self) -> u64 {
        match self.limit {
            PollLimit::Polls(n) => n,
            PollLimit::DurationMs(d) => d.div_ceil(self.interval_ms),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievedSample {
    pub triple: Triple,
    /// Milliseconds since the poll loop started.
    pub received_at_ms: u64,
    /// Raw bytes differ from the previous successful poll (true on the first).
    pub changed: bool,
}

/// Fixed-bucket histogram over milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Inclusive upper bounds; one extra overflow bucket follows.
    pub bounds_ms: Vec<f64>,
    pub counts: Vec<u64>,
    pub count: u64,
    pub sum_ms: f64,
    pub max_ms: f64,
}

const STALENESS_BOUNDS_MS: [f64; 13] = [
    1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 350.0, 500.0, 1000.0, 2000.0, 5000.0,
];

impl Default for Histogram {
    fn default() -> Self {
        Histogram::with_bounds(STALENESS_BOUNDS_MS.to_vec())
    }
}

impl Histogram {
    pub fn with_bounds(bounds_ms: Vec<f64>) -> Self {
        let n = bounds_ms.len() + 1;
        Histogram {
            bounds_ms,
            counts: vec![0; n],
            count: 0,
            sum_ms: 0.0,
            max_ms: 0.0,
        }
    }

    pub fn record(&mut self, ms: f64) {
        let idx = self
            .bounds_ms
            .iter()
            .position(|b| ms <= *b)
            .unwrap_or(self.bounds_ms.len());
        self.counts[idx] += 1;
        self.count += 1;
        self.sum_ms += ms;
        self.max_ms = self.max_ms.max(ms);
    }

    pub fn mean_ms(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum_ms / self.count as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PollMetrics {
    pub polls_attempted: u64,
    /// Polls whose body decoded (`distinct_versions_observed + unchanged_polls`).
    pub polls_succeeded: u64,
    /// Keyed by [`DecodeError::kind`].
    pub decode_failures: BTreeMap<String, u64>,
    pub source_unreachable: u64,
    pub distinct_versions_observed: u64,
    pub unchanged_polls: u64,
    pub empty_body_polls: u64,
    /// Per successful poll: time since the last observed change.
    pub staleness: Histogram,
}

impl PollMetrics {
    pub fn decode_failure_total(&self) -> u64 {
        self.decode_failures.values().sum()
    }

    /// Polls that got a body back from the source.
    pub fn polls_completed(&self) -> u64 {
        self.polls_attempted - self.source_unreachable
    }

    pub fn summary(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("polls_attempted".to_owned(), self.polls_attempted.to_string()),
            ("polls_succeeded".to_owned(), self.polls_succeeded.to_string()),
            ("source_unreachable".to_owned(), self.source_unreachable.to_string()),
            (
                "distinct_versions_observed".to_owned(),
                self.distinct_versions_observed.to_string(),
            ),
            ("unchanged_polls".to_owned(), self.unchanged_polls.to_string()),
            ("empty_body_polls".to_owned(), self.empty_body_polls.to_string()),
            ("decode_failures".to_owned(), self.decode_failure_total().to_string()),
        ];
        for (k, v) in &self.decode_failures {
            out.push((format!("decode_failures.{k}"), v.to_string()));
        }
        out.push((
            "staleness_mean_ms".to_owned(),
            format!("{:.3}", self.staleness.mean_ms()),
        ));
        out.push(("staleness_max_ms".to_owned(), format!("{:.3}", self.staleness.max_ms)));
        out
    }

    pub fn write_summary<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (k, v) in self.summary() {
            writeln!(out, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Loop-local change detector and metrics accumulator, shared by the real
/// poller and the simulator.
#[derive(Debug, Default)]
pub struct PollTracker {
    pub metrics: PollMetrics,
    previous: Option<Vec<u8>>,
    last_change_ms: Option<f64>,
}

/// What a single completed poll amounted to.
#[derive(Debug, Clone, PartialEq)]
pub enum PollObservation {
    Empty,
    Failed(DecodeError),
    Sample(RetrievedSample),
}

impl PollTracker {
    pub fn unreachable(&mut self) {
        self.metrics.polls_attempted += 1;
        self.metrics.source_unreachable += 1;
    }

    pub fn observe(&mut self, body: &[u8], now_ms: f64) -> PollObservation {
        let m = &mut self.metrics;
        m.polls_attempted += 1;
        if body.is_empty() {
            m.empty_body_polls += 1;
            return PollObservation::Empty;
        }
        let triple = match decode_record(body) {
            Ok(t) => t,
            Err(e) => {
                *m.decode_failures.entry(e.kind().to_owned()).or_default() += 1;
                return PollObservation::Failed(e);
            }
        };
        m.polls_succeeded += 1;
        let changed = self.previous.as_deref() != Some(body);
        if changed {
            m.distinct_versions_observed += 1;
            self.previous = Some(body.to_vec());
            self.last_change_ms = Some(now_ms);
        } else {
            m.unchanged_polls += 1;
        }
        if let Some(at) = self.last_change_ms {
            m.staleness.record(now_ms - at);
        }
        PollObservation::Sample(RetrievedSample {
            triple,
            received_at_ms: now_ms.max(0.0) as u64,
            changed,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct PollReport {
    pub metrics: PollMetrics,
    pub samples: Vec<RetrievedSample>,
}

impl PollReport {
    /// Triples of polls that saw a new record, in order.
    pub fn distinct_sequence(&self) -> Vec<Triple> {
        self.samples.iter().filter(|s| s.changed).map(|s| s.triple).collect()
    }
}

/// Polls `config.source_url` until the limit is reached. One fetch at a
/// time; a slow response pushes the next tick back.
pub async fn run_poll(
    config: &PollConfig,
    transport: Arc<dyn Transport>,
    mut on_sample: impl FnMut(&RetrievedSample),
) -> Result<PollReport, PollError> {
    config.validate()?;
    let budget = config.tick_budget();
    let interval = config.interval_ms;
    let timeout = Duration::from_millis(config.request_timeout_ms);
    let start = Instant::now();
    let mut tracker = PollTracker::default();
    let mut samples = Vec::new();
    let (mut tick, mut fire_ms) = (0u64, 0u64);

    while tick < budget {
        tokio::time::sleep_until(start + Duration::from_millis(fire_ms)).await;
        let result = get_with_timeout(transport.as_ref(), &config.source_url, timeout).await;
        let now_ms = start.elapsed().as_secs_f64() * 1000.0;
        match result {
            Ok(body) => {
                if let PollObservation::Sample(s) = tracker.observe(&body, now_ms) {
                    on_sample(&s);
                    samples.push(s);
                }
            }
            Err(_) => tracker.unreachable(),
        }
        let next = next_sync_tick(interval, tick, start.elapsed().as_millis() as u64);
        tick = next.tick;
        fire_ms = next.at;
    }
    Ok(PollReport {
        metrics: tracker.metrics,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamFormat {
    Csv,
    Lines,
}

impl std::str::FromStr for StreamFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(StreamFormat::Csv),
            "lines" => Ok(StreamFormat::Lines),
            _ => Err(format!("unknown format `{s}` (expected csv or lines)")),
        }
    }
}

pub const CSV_HEADER: [&str; 5] = ["received_at_ms", "x", "y", "z", "changed"];

/// `t=<ms> x=.. y=.. z=.. changed=..`, the same value layout as the relay echo.
pub fn sample_line(s: &RetrievedSample) -> String {
    format!(
        "t={} x={} y={} z={} changed={}",
        s.received_at_ms,
        format_number(s.triple.x),
        format_number(s.triple.y),
        format_number(s.triple.z),
        s.changed
    )
}

fn csv_row(s: &RetrievedSample) -> [String; 5] {
    [
        s.received_at_ms.to_string(),
        format_number(s.triple.x),
        format_number(s.triple.y),
        format_number(s.triple.z),
        s.changed.to_string(),
    ]
}

/// Incremental emitter; writes the CSV header on creation.
pub struct StreamWriter<W: Write> {
    inner: Inner<W>,
}

enum Inner<W: Write> {
    Csv(Box<csv::Writer<W>>),
    Lines(W),
}

impl<W: Write> StreamWriter<W> {
    pub fn new(out: W, format: StreamFormat) -> io::Result<Self> {
        let inner = match format {
            StreamFormat::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(CSV_HEADER)?;
                Inner::Csv(Box::new(w))
            }
            StreamFormat::Lines => Inner::Lines(out),
        };
        Ok(StreamWriter { inner })
    }

    pub fn write(&mut self, s: &RetrievedSample) -> io::Result<()> {
        match &mut self.inner {
            Inner::Csv(w) => w.write_record(csv_row(s)).map_err(io::Error::from),
            Inner::Lines(w) => writeln!(w, "{}", sample_line(s)),
        }
    }

    pub fn finish(self) -> io::Result<()> {
        match self.inner {
            Inner::Csv(mut w) => w.flush(),
            Inner::Lines(mut w) => w.flush(),
        }
    }
}

pub fn emit_stream<W: Write>(samples: &[RetrievedSample], format: StreamFormat, out: W) -> io::Result<()> {
    let mut w = StreamWriter::new(out, format)?;
    for s in samples {
        w.write(s)?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::TransportError;
    use async_trait::async_trait;
    use bytes::Bytes;
    use std::sync::Mutex;

    /// Serves whatever body the test sets.
    struct FixedBody(Mutex<Result<Vec<u8>, TransportError>>);

    #[async_trait]
    impl Transport for FixedBody {
        async fn get(&self, _url: &str) -> Result<Bytes, TransportError> {
            self.0.lock().unwrap().clone().map(Bytes::from)
        }
    }

    fn fixed(body: &[u8]) -> Arc<FixedBody> {
        Arc::new(FixedBody(Mutex::new(Ok(body.to_vec()))))
    }

    fn polls(n: u64) -> PollConfig {
        PollConfig {
            limit: PollLimit::Polls(n),
            ..PollConfig::default()
        }
    }

    #[tokio::test(start_paused = true)]
    async fn first_poll_is_a_change() {
        let r = run_poll(&polls(1), fixed(b"1<br>2<br>3"), |_| {}).await.unwrap();
        assert_eq!(r.samples.len(), 1);
        assert_eq!(r.samples[0].triple, Triple::new(1.0, 2.0, 3.0));
        assert!(r.samples[0].changed);
        assert_eq!(r.metrics.distinct_versions_observed, 1);
    }

    #[tokio::test(start_paused = true)]
    async fn unchanged_store_is_detected() {
        let r = run_poll(&polls(2), fixed(b"1<br>2<br>3"), |_| {}).await.unwrap();
        assert!(!r.samples[1].changed);
        assert_eq!(r.metrics.unchanged_polls, 1);
        assert_eq!(r.samples[1].received_at_ms, 100);
    }

    #[tokio::test(start_paused = true)]
    async fn failures_are_classified_and_loop_continues() {
        let t = fixed(b"");
        let mut tracker = PollTracker::default();
        tracker.observe(b"", 0.0);
        tracker.observe(b"1<br>2", 1.0);
        tracker.observe(b"1<br>x<br>3", 2.0);
        tracker.observe(b"1<br>2<br>3", 3.0);
        tracker.observe(b"1<br>2<br>3", 4.0);
        tracker.unreachable();
        let m = &tracker.metrics;
        assert_eq!(m.polls_attempted, 6);
        assert_eq!(m.empty_body_polls, 1);
        assert_eq!(m.decode_failures["wrong_field_count"], 1);
        assert_eq!(m.decode_failures["not_numeric"], 1);
        assert_eq!(m.distinct_versions_observed, 1);
        assert_eq!(m.unchanged_polls, 1);
        assert_eq!(
            m.distinct_versions_observed + m.unchanged_polls + m.empty_body_polls + m.decode_failure_total(),
            m.polls_completed()
        );
        assert!(m.polls_succeeded + m.decode_failure_total() + m.source_unreachable <= m.polls_attempted);

        let r = run_poll(&polls(5), t.clone(), |_| {}).await.unwrap();
        assert_eq!(r.metrics.empty_body_polls, 5);
        *t.0.lock().unwrap() = Err(TransportError::Unreachable("down".into()));
        let r = run_poll(&polls(5), t, |_| {}).await.unwrap();
        assert_eq!(r.metrics.source_unreachable, 5);
        assert_eq!(r.metrics.polls_attempted, 5);
    }

    #[tokio::test(start_paused = true)]
    async fn duration_limit_sets_tick_budget() {
        let cfg = PollConfig {
            limit: PollLimit::DurationMs(1000),
            ..PollConfig::default()
        };
        let r = run_poll(&cfg, fixed(b"1<br>2<br>3"), |_| {}).await.unwrap();
        assert_eq!(r.metrics.polls_attempted, 10);
    }

    #[test]
    fn staleness_tracks_time_since_change() {
        let mut t = PollTracker::default();
        t.observe(b"1<br>2<br>3", 0.0);
        t.observe(b"1<br>2<br>3", 100.0);
        t.observe(b"1<br>2<br>3", 200.0);
        t.observe(b"4<br>2<br>3", 300.0);
        let h = &t.metrics.staleness;
        assert_eq!(h.count, 4);
        assert_eq!(h.max_ms, 200.0);
        assert_eq!(h.sum_ms, 300.0);
    }

    fn sample(ms: u64, x: f64, y: f64, z: f64, changed: bool) -> RetrievedSample {
        RetrievedSample {
            triple: Triple::new(x, y, z),
            received_at_ms: ms,
            changed,
        }
    }

    #[test]
    fn emit_csv_header_only_for_empty_stream() {
        let mut out = Vec::new();
        emit_stream(&[], StreamFormat::Csv, &mut out).unwrap();
        assert_eq!(out, b"received_at_ms,x,y,z,changed\n");
    }

    #[test]
    fn emit_csv_one_row() {
        let mut out = Vec::new();
        emit_stream(&[sample(7, 1.0, 2.0, 3.0, true)], StreamFormat::Csv, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "received_at_ms,x,y,z,changed\n7,1,2,3,true\n"
        );
    }

    #[test]
    fn emit_lines() {
        let mut out = Vec::new();
        emit_stream(&[sample(7, 0.0, 0.0, 9.81, false)], StreamFormat::Lines, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t=7 x=0 y=0 z=9.81 changed=false\n");
    }

    #[test]
    fn csv_round_trip_through_reader() {
        let stream: Vec<_> = (0..50)
            .map(|i| {
                sample(
                    i * 20,
                    i as f64 * 0.1,
                    -(i as f64) / 3.0,
                    9.81 + 1e-9 * i as f64,
                    i % 2 == 0,
                )
            })
            .collect();
        let mut out = Vec::new();
        emit_stream(&stream, StreamFormat::Csv, &mut out).unwrap();
        let mut rdr = csv::Reader::from_reader(&out[..]);
        let back: Vec<RetrievedSample> = rdr
            .records()
            .map(|r| {
                let r = r.unwrap();
                RetrievedSample {
                    received_at_ms: r[0].parse().unwrap(),
                    triple: Triple::new(r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap()),
                    changed: r[4].parse().unwrap(),
                }
            })
            .collect();
        assert_eq!(back, stream);
    }

    struct FailingWriter;

    impl Write for FailingWriter {
        fn write(&mut self, _: &[u8]) -> io::Result<usize> {
            Err(io::Error::other("disk full"))
        }
        fn flush(&mut self) -> io::Result<()> {
            Err(io::Error::other("disk full"))
        }
    }

    #[test]
    fn emit_reports_write_failure() {
        let s = [sample(0, 1.0, 2.0, 3.0, true)];
        assert!(emit_stream(&s, StreamFormat::Lines, FailingWriter).is_err());
        assert!(emit_stream(&s, StreamFormat::Csv, FailingWriter).is_err());
    }
}
