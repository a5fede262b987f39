//! Web host node: a single-slot last-value store behind two GET endpoints.
//!
//! Every ingest replaces the whole record in one step. In memory the
//! snapshot pointer is swapped under a lock; on disk the record is written
//! to a temp file in the same directory and renamed over the target. A
//! fetch therefore only ever sees a committed record.

use std::future::Future;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{RawQuery, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use bytes::Bytes;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tracing::{info, warn};

use crate::codec::{self, decode_record, encode_triple, QueryError};

pub const HEALTH_PATH: &str = "/healthz";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persistence {
    FileBacked(PathBuf),
    MemoryOnly,
}

impl Persistence {
    pub fn mode_name(&self) -> &'static str {
        match self {
            Persistence::FileBacked(_) => "file_backed",
            Persistence::MemoryOnly => "memory_only",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub ingest_path: String,
    pub fetch_path: String,
    pub persistence: Persistence,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            ingest_path: codec::DEFAULT_INGEST_PATH.to_owned(),
            fetch_path: codec::DEFAULT_FETCH_PATH.to_owned(),
            persistence: Persistence::FileBacked(PathBuf::from("maina.dat")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid service config: {0}")]
    InvalidConfig(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("server error: {0}")]
    Serve(#[from] io::Error),
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        for p in [&self.ingest_path, &self.fetch_path] {
            if p.is_empty() || !p.starts_with('/') {
                return Err(ServiceError::InvalidConfig(format!(
                    "path `{p}` must be non-empty and start with `/`"
                )));
            }
            if p == HEALTH_PATH {
                return Err(ServiceError::InvalidConfig(format!("path `{p}` is reserved")));
            }
        }
        if self.ingest_path == self.fetch_path {
            return Err(ServiceError::InvalidConfig(
                "ingest and fetch paths must differ".to_owned(),
            ));
        }
        if let Persistence::FileBacked(p) = &self.persistence {
            if p.as_os_str().is_empty() {
                return Err(ServiceError::InvalidConfig("store file path is empty".to_owned()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Snapshot {
    record: Bytes,
    write_count: u64,
    last_write_ms: Option<u64>,
}

/// Result of one ingest request.
#[derive(Debug)]
pub enum IngestOutcome {
    Stored,
    /// No `Button1`: nothing happens, success is reported.
    Ignored,
    Rejected(QueryError),
    /// The store could not be committed; it is unchanged.
    WriteFailed(io::Error),
}

impl IngestOutcome {
    pub fn status(&self) -> StatusCode {
        match self {
            IngestOutcome::Stored | IngestOutcome::Ignored => StatusCode::OK,
            IngestOutcome::Rejected(_) => StatusCode::BAD_REQUEST,
            IngestOutcome::WriteFailed(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub write_count: u64,
    pub last_write_ms: Option<u64>,
    pub persistence: String,
    pub record_len: usize,
}

pub struct Store {
    persistence: Persistence,
    current: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
}

impl Store {
    pub fn memory() -> Self {
        Store {
            persistence: Persistence::MemoryOnly,
            current: RwLock::new(Arc::new(Snapshot::default())),
            writer: Mutex::new(()),
        }
    }

    /// Opens a store, loading the last committed record from disk when
    /// file-backed. A file that does not decode is ignored.
    pub fn open(persistence: Persistence) -> io::Result<Self> {
        let mut snap = Snapshot::default();
        if let Persistence::FileBacked(path) = &persistence {
            match std::fs::read(path) {
                Ok(raw) if raw.is_empty() => {}
                Ok(raw) => match decode_record(&raw) {
                    Ok(_) => snap.record = Bytes::from(raw),
                    Err(e) => warn!(path = %path.display(), error = %e, "ignoring undecodable store file"),
                },
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(e),
            }
        }
        Ok(Store {
            persistence,
            current: RwLock::new(Arc::new(snap)),
            writer: Mutex::new(()),
        })
    }

    pub fn persistence(&self) -> &Persistence {
        &self.persistence
    }

    pub fn ingest(&self, query: &str) -> IngestOutcome {
        let triple = match codec::parse_query(query) {
            Ok(t) => t,
            Err(QueryError::MissingSubmitMarker) => return IngestOutcome::Ignored,
            Err(e) => return IngestOutcome::Rejected(e),
        };
        let record = Bytes::from(encode_triple(&triple).into_bytes());

        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        if let Persistence::FileBacked(path) = &self.persistence {
            if let Err(e) = write_atomic(path, &record) {
                return IngestOutcome::WriteFailed(e);
            }
        }
        let prev = self.snapshot();
        let next = Snapshot {
            record,
            write_count: prev.write_count + 1,
            last_write_ms: Some(unix_ms()),
        };
        *self.current.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(next);
        IngestOutcome::Stored
    }

    /// Current record bytes, verbatim.
    pub fn fetch(&self) -> Bytes {
        self.snapshot().record.clone()
    }

    pub fn write_count(&self) -> u64 {
        self.snapshot().write_count
    }

    pub fn health(&self) -> Health {
        let s = self.snapshot();
        Health {
            write_count: s.write_count,
            last_write_ms: s.last_write_ms,
            persistence: self.persistence.mode_name().to_owned(),
            record_len: s.record.len(),
        }
    }

    fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

/// Writes `content` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, content: &[u8]) -> io::Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(content)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

async fn ingest_handler(State(store): State<Arc<Store>>, RawQuery(q): RawQuery) -> Response {
    let q = q.unwrap_or_default();
    let outcome = match tokio::task::spawn_blocking(move || store.ingest(&q)).await {
        Ok(o) => o,
        Err(e) => IngestOutcome::WriteFailed(io::Error::other(e)),
    };
    let status = outcome.status();
    match outcome {
        IngestOutcome::Stored | IngestOutcome::Ignored => status.into_response(),
        IngestOutcome::Rejected(e) => (status, e.to_string()).into_response(),
        IngestOutcome::WriteFailed(e) => {
            warn!(error = %e, "store commit failed");
            (status, "can't open file").into_response()
        }
    }
}

async fn fetch_handler(State(store): State<Arc<Store>>) -> Response {
    ([(header::CONTENT_TYPE, "application/octet-stream")], store.fetch()).into_response()
}

async fn health_handler(State(store): State<Arc<Store>>) -> Json<Health> {
    Json(store.health())
}

pub fn router(store: Arc<Store>, ingest_path: &str, fetch_path: &str) -> Router {
    Router::new()
        .route(ingest_path, get(ingest_handler))
        .route(fetch_path, get(fetch_handler))
        .route(HEALTH_PATH, get(health_handler))
        .with_state(store)
}

/// A bound, not yet running service.
pub struct Service {
    listener: TcpListener,
    store: Arc<Store>,
    router: Router,
}

impl Service {
    pub async fn bind(config: &ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let store = Arc::new(Store::open(config.persistence.clone())?);
        let listener = TcpListener::bind(config.bind)
            .await
            .map_err(|source| ServiceError::Bind {
                addr: config.bind,
                source,
            })?;
        let router = router(store.clone(), &config.ingest_path, &config.fetch_path);
        Ok(Service {
            listener,
            store,
            router,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn store(&self) -> Arc<Store> {
        self.store.clone()
    }

    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServiceError> {
        if let Ok(addr) = self.listener.local_addr() {
            info!(%addr, persistence = self.store.persistence().mode_name(), "web host listening");
        }
        axum::serve(self.listener, self.router)
            .with_graceful_shutdown(shutdown)
            .await?;
        Ok(())
    }
}
