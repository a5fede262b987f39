//! Wire formats: the GET query that carries one sample and the
//! `<br>`-delimited record persisted by the web host.
//!
//! Both formats are bit-exact. Numbers are written as the shortest decimal
//! text that parses back to the identical `f64`, so a sample survives
//! `encode -> decode` without any loss.

use std::fmt;

use thiserror::Error;
use url::form_urlencoded;

/// Record field separator, bytes `3C 62 72 3E`.
pub const DELIMITER: &[u8] = b"<br>";

/// Default ingest path (the PHP script of the original deployment).
pub const DEFAULT_INGEST_PATH: &str = "/main.php";

/// Default fetch path (the static DAT file).
pub const DEFAULT_FETCH_PATH: &str = "/maina.dat";

/// Query parameter names, in wire order.
pub const PARAM_X: &str = "Editbox1";
pub const PARAM_Y: &str = "Editbox2";
pub const PARAM_Z: &str = "Editbox3";
pub const PARAM_SUBMIT: &str = "Button1";

/// Value sent for the submit marker. Ingest only checks for presence.
pub const SUBMIT_VALUE: &str = "Submit";

/// Default per-axis bound in m/s² (about 16 g).
pub const DEFAULT_SENSOR_RANGE: f64 = 160.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SampleError {
    #[error("{axis} component is not finite")]
    NotFinite { axis: char },
    #[error("{axis} component {value} exceeds sensor range ±{range}")]
    OutOfRange { axis: char, value: String, range: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("empty record")]
    EmptyInput,
    #[error("expected 3 fields, found {0}")]
    WrongFieldCount(usize),
    #[error("field {0} is not a finite decimal")]
    NotNumeric(usize),
}

impl DecodeError {
    /// Stable short name, used as a metrics key.
    pub fn kind(&self) -> &'static str {
        match self {
            DecodeError::EmptyInput => "empty_input",
            DecodeError::WrongFieldCount(_) => "wrong_field_count",
            DecodeError::NotNumeric(_) => "not_numeric",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("missing submit marker `{PARAM_SUBMIT}`")]
    MissingSubmitMarker,
    #[error("missing parameter `{0}`")]
    MissingField(&'static str),
    #[error("parameter `{0}` is not a finite decimal")]
    NotNumeric(&'static str),
}

/// One timestamped acceleration reading (m/s², gravity included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelSample {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Source-local ordinal. Not carried on the wire.
    pub seq: u64,
    /// Milliseconds since source start. Not carried on the wire.
    pub t_ms: u64,
}

impl AccelSample {
    /// Builds a sample checked against [`DEFAULT_SENSOR_RANGE`].
    pub fn new(x: f64, y: f64, z: f64, seq: u64, t_ms: u64) -> Result<Self, SampleError> {
        let s = AccelSample { x, y, z, seq, t_ms };
        s.validate(DEFAULT_SENSOR_RANGE)?;
        Ok(s)
    }

    pub fn validate(&self, range: f64) -> Result<(), SampleError> {
        for (axis, v) in [('x', self.x), ('y', self.y), ('z', self.z)] {
            if !v.is_finite() {
                return Err(SampleError::NotFinite { axis });
            }
            if v.abs() > range {
                return Err(SampleError::OutOfRange {
                    axis,
                    value: v.to_string(),
                    range: range.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn triple(&self) -> Triple {
        Triple::new(self.x, self.y, self.z)
    }
}

/// A decoded `(x, y, z)` reading without source metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Triple {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Triple { x, y, z }
    }

    /// Bit-level equality; distinguishes `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Triple) -> bool {
        self.x.to_bits() == other.x.to_bits()
            && self.y.to_bits() == other.y.to_bits()
            && self.z.to_bits() == other.z.to_bits()
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {})",
            format_number(self.x),
            format_number(self.y),
            format_number(self.z)
        )
    }
}

/// The persisted record bytes: `x<br>y<br>z`, no terminator.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StoredRecord(Vec<u8>);

impl StoredRecord {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn decode(&self) -> Result<Triple, DecodeError> {
        decode_record(&self.0)
    }
}

impl AsRef<[u8]> for StoredRecord {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// Shortest decimal text that re-parses to exactly `v`.
///
/// Plain notation for magnitudes in `[1e-6, 1e15)`, exponent notation
/// (`1e-7`, `1.5e20`) outside it. Both signed zeros render as `0`.
/// `v` must be finite.
pub fn format_number(v: f64) -> String {
    debug_assert!(v.is_finite(), "format_number called with {v}");
    if v == 0.0 {
        return "0".to_owned();
    }
    let mag = v.abs();
    if (1e-6..1e15).contains(&mag) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Strict decimal parse: `-?digits(.digits)?([eE][+-]?digits)?`, finite.
///
/// Rejects everything `str::parse::<f64>` is lenient about: `inf`, `NaN`,
/// leading `+`, bare `.5` or `5.`, and surrounding whitespace.
pub fn parse_number(text: &str) -> Option<f64> {
    if !is_decimal_syntax(text.as_bytes()) {
        return None;
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_decimal_syntax(b: &[u8]) -> bool {
    let mut i = 0;
    if b.first() == Some(&b'-') {
        i += 1;
    }
    let digits = |i: &mut usize| {
        let start = *i;
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
        *i > start
    };
    if !digits(&mut i) {
        return false;
    }
    if b.get(i) == Some(&b'.') {
        i += 1;
        if !digits(&mut i) {
            return false;
        }
    }
    if matches!(b.get(i), Some(b'e' | b'E')) {
        i += 1;
        if matches!(b.get(i), Some(b'+' | b'-')) {
            i += 1;
        }
        if !digits(&mut i) {
            return false;
        }
    }
    i == b.len()
}

pub fn encode_record(s: &AccelSample) -> StoredRecord {
    encode_triple(&s.triple())
}

pub fn encode_triple(t: &Triple) -> StoredRecord {
    let text = [format_number(t.x), format_number(t.y), format_number(t.z)];
    let mut raw = Vec::with_capacity(text.iter().map(String::len).sum::<usize>() + 8);
    for (i, field) in text.iter().enumerate() {
        if i > 0 {
            raw.extend_from_slice(DELIMITER);
        }
        raw.extend_from_slice(field.as_bytes());
    }
    StoredRecord(raw)
}

/// Splits on the literal delimiter and converts the three fields.
///
/// This is the torn-read detection surface: any byte sequence is accepted
/// as input.
pub fn decode_record(raw: &[u8]) -> Result<Triple, DecodeError> {
    if raw.is_empty() {
        return Err(DecodeError::EmptyInput);
    }
    let fields = split_delimited(raw);
    if fields.len() != 3 {
        return Err(DecodeError::WrongFieldCount(fields.len()));
    }
    let mut out = [0.0; 3];
    for (i, field) in fields.iter().enumerate() {
        out[i] = std::str::from_utf8(field)
            .ok()
            .and_then(parse_number)
            .ok_or(DecodeError::NotNumeric(i))?;
    }
    Ok(Triple::new(out[0], out[1], out[2]))
}

fn split_delimited(raw: &[u8]) -> Vec<&[u8]> {
    let mut fields = Vec::with_capacity(3);
    let mut rest = raw;
    while let Some(pos) = rest.windows(DELIMITER.len()).position(|w| w == DELIMITER) {
        fields.push(&rest[..pos]);
        rest = &rest[pos + DELIMITER.len()..];
    }
    fields.push(rest);
    fields
}

/// `ingest_path?Editbox1=x&Editbox2=y&Editbox3=z&Button1=Submit`.
pub fn build_query(s: &AccelSample, ingest_path: &str) -> String {
    let mut out = String::with_capacity(ingest_path.len() + 80);
    out.push_str(ingest_path);
    out.push('?');
    let pairs = [
        (PARAM_X, format_number(s.x)),
        (PARAM_Y, format_number(s.y)),
        (PARAM_Z, format_number(s.z)),
        (PARAM_SUBMIT, SUBMIT_VALUE.to_owned()),
    ];
    for (i, (name, value)) in pairs.iter().enumerate() {
        if i > 0 {
            out.push('&');
        }
        out.push_str(name);
        out.push('=');
        out.extend(form_urlencoded::byte_serialize(value.as_bytes()));
    }
    out
}

/// Parses an ingest query (the part after `?`).
///
/// `Button1` is checked for presence only; its value is ignored. When a
/// parameter repeats, the last occurrence wins.
pub fn parse_query(q: &str) -> Result<Triple, QueryError> {
    let mut submit = false;
    let mut fields: [Option<String>; 3] = [None, None, None];
    for (name, value) in form_urlencoded::parse(q.as_bytes()) {
        match name.as_ref() {
            PARAM_SUBMIT => submit = true,
            PARAM_X => fields[0] = Some(value.into_owned()),
            PARAM_Y => fields[1] = Some(value.into_owned()),
            PARAM_Z => fields[2] = Some(value.into_owned()),
            _ => {}
        }
    }
    if !submit {
        return Err(QueryError::MissingSubmitMarker);
    }
    let names = [PARAM_X, PARAM_Y, PARAM_Z];
    let mut out = [0.0; 3];
    for i in 0..3 {
        let text = fields[i].as_deref().ok_or(QueryError::MissingField(names[i]))?;
        out[i] = parse_number(text).ok_or(QueryError::NotNumeric(names[i]))?;
    }
    Ok(Triple::new(out[0], out[1], out[2]))
}

/// Query part of a request target, or `""` when there is none.
pub fn query_part(target: &str) -> &str {
    target.split_once('?').map(|(_, q)| q).unwrap_or("")
}
