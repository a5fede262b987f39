//! Synthetic accelerometer source.
//!
//! Streams are a deterministic function of `(spec, seed, tick)`. Random
//! traces draw from `ChaCha8Rng::seed_from_u64(seed)` with normals from
//! `rand_distr::Normal`, one draw per axis in x, y, z order per tick.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::codec::{decode_record, AccelSample, Triple, DEFAULT_SENSOR_RANGE};

/// Standard gravity, used as the resting z reading.
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("replay trace exhausted at tick {tick} (length {len})")]
    ReplayExhausted { tick: u64, len: usize },
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("cannot read replay file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("replay file {path} line {line}: {reason}")]
    BadReplayLine { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisWave {
    /// m/s²
    pub amplitude: f64,
    /// Hz
    pub frequency: f64,
    /// rad
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceKind {
    Constant(Triple),
    Sinusoid {
        axes: [AxisWave; 3],
        gravity: f64,
    },
    RandomWalk {
        start: Triple,
        step_stddev: f64,
    },
    /// `x = (tick mod period) * increment`, `y = -x`, `z = gravity`, where
    /// `period` keeps `x` inside the range. Consecutive ticks always differ.
    Step {
        increment: f64,
    },
    Replay {
        path: PathBuf,
        wrap: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpec {
    pub kind: TraceKind,
    pub seed: u64,
    /// Per-axis clamp bound, m/s².
    pub range: f64,
}

impl TraceSpec {
    pub fn new(kind: TraceKind, seed: u64) -> Self {
        TraceSpec {
            kind,
            seed,
            range: DEFAULT_SENSOR_RANGE,
        }
    }

    pub fn constant(x: f64, y: f64, z: f64) -> Self {
        Self::new(TraceKind::Constant(Triple::new(x, y, z)), 0)
    }

    pub fn step(increment: f64) -> Self {
        Self::new(TraceKind::Step { increment }, 0)
    }

    pub fn random_walk(step_stddev: f64, seed: u64) -> Self {
        Self::new(
            TraceKind::RandomWalk {
                start: Triple::new(0.0, 0.0, GRAVITY),
                step_stddev,
            },
            seed,
        )
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |msg: &str| Err(TraceError::Invalid(msg.to_owned()));
        if !(self.range.is_finite() && self.range > 0.0) {
            return bad("range must be finite and positive");
        }
        match &self.kind {
            TraceKind::Constant(t) => {
                if ![t.x, t.y, t.z].iter().all(|v| v.is_finite()) {
                    return bad("constant components must be finite");
                }
            }
            TraceKind::Sinusoid { axes, gravity } => {
                if !gravity.is_finite() {
                    return bad("gravity offset must be finite");
                }
                for w in axes {
                    if ![w.amplitude, w.frequency, w.phase].iter().all(|v| v.is_finite()) {
                        return bad("sinusoid parameters must be finite");
                    }
                    if w.amplitude < 0.0 {
                        return bad("amplitude must be >= 0");
                    }
                }
            }
            TraceKind::RandomWalk { start, step_stddev } => {
                if ![start.x, start.y, start.z].iter().all(|v| v.is_finite()) {
                    return bad("walk start must be finite");
                }
                if !(step_stddev.is_finite() && *step_stddev >= 0.0) {
                    return bad("step stddev must be finite and >= 0");
                }
            }
            TraceKind::Step { increment } => {
                if !(increment.is_finite() && *increment > 0.0 && *increment <= self.range) {
                    return bad("step increment must be in (0, range]");
                }
            }
            TraceKind::Replay { .. } => {}
        }
        Ok(())
    }
}

/// Parses the CLI trace syntax:
/// `constant[:x,y,z]`, `sinusoid[:amp,freq_hz]`, `walk[:stddev]`,
/// `step[:increment]`, `replay:PATH`.
impl FromStr for TraceSpec {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let nums = |a: &str| -> Result<Vec<f64>, TraceError> {
            a.split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| TraceError::Invalid(format!("bad number `{p}` in `{s}`")))
                })
                .collect()
        };
        let kind = match (name, args) {
            ("constant", None) => TraceKind::Constant(Triple::new(0.0, 0.0, GRAVITY)),
            ("constant", Some(a)) => match nums(a)?.as_slice() {
                [x, y, z] => TraceKind::Constant(Triple::new(*x, *y, *z)),
                _ => return Err(TraceError::Invalid("constant takes x,y,z".into())),
            },
            ("sinusoid", a) => {
                let (amp, freq) = match a.map(nums).transpose()?.as_deref() {
                    None => (1.0, 0.5),
                    Some([amp, freq]) => (*amp, *freq),
                    Some(_) => return Err(TraceError::Invalid("sinusoid takes amp,freq".into())),
                };
                sinusoid(amp, freq)
            }
            ("walk", a) => {
                let stddev = match a.map(nums).transpose()?.as_deref() {
                    None => 0.5,
                    Some([sd]) => *sd,
                    Some(_) => return Err(TraceError::Invalid("walk takes stddev".into())),
                };
                TraceKind::RandomWalk {
                    start: Triple::new(0.0, 0.0, GRAVITY),
                    step_stddev: stddev,
                }
            }
            ("step", a) => {
                let increment = match a.map(nums).transpose()?.as_deref() {
                    None => 0.01,
                    Some([inc]) => *inc,
                    Some(_) => return Err(TraceError::Invalid("step takes increment".into())),
                };
                TraceKind::Step { increment }
            }
            ("replay", Some(path)) if !path.is_empty() => TraceKind::Replay {
                path: PathBuf::from(path),
                wrap: true,
            },
            _ => return Err(TraceError::Invalid(format!("unknown trace `{s}`"))),
        };
        let spec = TraceSpec::new(kind, 0);
        spec.validate()?;
        Ok(spec)
    }
}

/// Three axes at the same amplitude and frequency, phases 120° apart.
fn sinusoid(amplitude: f64, frequency: f64) -> TraceKind {
    let third = 2.0 * std::f64::consts::PI / 3.0;
    let wave = |k: f64| AxisWave {
        amplitude,
        frequency,
        phase: k * third,
    };
    TraceKind::Sinusoid {
        axes: [wave(0.0), wave(1.0), wave(2.0)],
        gravity: GRAVITY,
    }
}

/// Reads a replay file: one encoded record per line, blank lines skipped.
pub fn load_replay(path: &Path) -> Result<Vec<Triple>, TraceError> {
    let text = fs::read(path).map_err(|source| TraceError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.split(|b| *b == b'\n').enumerate() {
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let t = decode_record(line).map_err(|e| TraceError::BadReplayLine {
            path: path.to_owned(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(t);
    }
    if out.is_empty() {
        return Err(TraceError::Invalid(format!("replay file {} is empty", path.display())));
    }
    Ok(out)
}

struct WalkState {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
    /// Tick of `pos`; `None` before tick 0 is generated.
    tick: Option<u64>,
    pos: Triple,
}

enum Generator {
    Pure,
    Walk(Box<WalkState>),
    Replay { records: Vec<Triple>, wrap: bool },
}

/// A single-owner generator over one [`TraceSpec`].
pub struct SampleSource {
    spec: TraceSpec,
    gen: Generator,
}

impl SampleSource {
    pub fn new(spec: TraceSpec) -> Result<Self, TraceError> {
        spec.validate()?;
        let gen = match &spec.kind {
            TraceKind::RandomWalk { start, step_stddev } => Generator::Walk(Box::new(WalkState {
                rng: ChaCha8Rng::seed_from_u64(spec.seed),
                normal: Normal::new(0.0, *step_stddev).map_err(|e| TraceError::Invalid(e.to_string()))?,
                tick: None,
                pos: *start,
            })),
            TraceKind::Replay { path, wrap } => Generator::Replay {
                records: load_replay(path)?,
                wrap: *wrap,
            },
            _ => Generator::Pure,
        };
        Ok(SampleSource { spec, gen })
    }

    pub fn spec(&self) -> &TraceSpec {
        &self.spec
    }

    /// Sample for `tick`, with `seq == tick` and `t_ms` echoed.
    ///
    /// Ticks may be skipped; a random walk still advances through every
    /// intermediate tick so the value depends only on the tick number.
    pub fn next_sample(&mut self, tick: u64, t_ms: u64) -> Result<AccelSample, TraceError> {
        let range = self.spec.range;
        let raw = match (&self.spec.kind, &mut self.gen) {
            (TraceKind::Constant(t), _) => *t,
            (TraceKind::Sinusoid { axes, gravity }, _) => {
                let secs = t_ms as f64 / 1000.0;
                let wave =
                    |w: &AxisWave| w.amplitude * (2.0 * std::f64::consts::PI * w.frequency * secs + w.phase).sin();
                Triple::new(wave(&axes[0]), wave(&axes[1]), wave(&axes[2]) + gravity)
            }
            (TraceKind::Step { increment }, _) => {
                let period = ((range / increment).floor() as u64).max(1) + 1;
                let x = (tick % period) as f64 * increment;
                // `0.0 - x` rather than `-x`: the wire cannot carry -0.
                Triple::new(x, 0.0 - x, GRAVITY)
            }
            (TraceKind::RandomWalk { start, .. }, Generator::Walk(w)) => {
                if w.tick.is_some_and(|t| t > tick) {
                    w.rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
                    w.tick = None;
                    w.pos = *start;
                }
                while w.tick != Some(tick) {
                    match w.tick {
                        None => w.tick = Some(0),
                        Some(t) => {
                            let dx = w.normal.sample(&mut w.rng);
                            let dy = w.normal.sample(&mut w.rng);
                            let dz = w.normal.sample(&mut w.rng);
                            w.pos = Triple::new(
                                clamp(w.pos.x + dx, range),
                                clamp(w.pos.y + dy, range),
                                clamp(w.pos.z + dz, range),
                            );
                            w.tick = Some(t + 1);
                        }
                    }
                }
                w.pos
            }
            (TraceKind::Replay { .. }, Generator::Replay { records, wrap }) => {
                let len = records.len();
                let idx = if *wrap {
                    (tick % len as u64) as usize
                } else if tick < len as u64 {
                    tick as usize
                } else {
                    return Err(TraceError::ReplayExhausted { tick, len });
                };
                records[idx]
            }
            _ => unreachable!("generator state matches trace kind"),
        };
        Ok(AccelSample {
            x: clamp(raw.x, range),
            y: clamp(raw.y, range),
            z: clamp(raw.z, range),
            seq: tick,
            t_ms,
        })
    }
}

fn clamp(v: f64, range: f64) -> f64 {
    v.clamp(-range, range)
}
