//! GET transport used by the relay and retrieval loops.

use std::time::Duration;

use async_trait::async_trait;
use bytes::Bytes;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("unexpected HTTP status {0}")]
    Status(u16),
    #[error("request timed out")]
    Timeout,
}

impl TransportError {
    pub fn kind(&self) -> &'static str {
        match self {
            TransportError::Unreachable(_) => "unreachable",
            TransportError::Status(_) => "status",
            TransportError::Timeout => "timeout",
        }
    }
}

/// Issues one GET and returns the body of a 2xx response.
#[async_trait]
pub trait Transport: Send + Sync {
    async fn get(&self, url: &str) -> Result<Bytes, TransportError>;
}

/// Runs `get` under a deadline.
pub async fn get_with_timeout(
    transport: &dyn Transport,
    url: &str,
    timeout: Duration,
) -> Result<Bytes, TransportError> {
    match tokio::time::timeout(timeout, transport.get(url)).await {
        Ok(r) => r,
        Err(_) => Err(TransportError::Timeout),
    }
}

/// Plain HTTP/1.1 client. Proxy environment variables are not consulted.
#[derive(Clone, Default)]
pub struct HttpTransport {
    client: reqwest::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        HttpTransport {
            client: reqwest::Client::new(),
        }
    }
}

#[async_trait]
impl Transport for HttpTransport {
    async fn get(&self, url: &str) -> Result<Bytes, TransportError> {
        let resp = self
            .client
            .get(url)
            .send()
            .await
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError::Status(status.as_u16()));
        }
        resp.bytes()
            .await
            .map_err(|e| TransportError::Unreachable(e.to_string()))
    }
}
