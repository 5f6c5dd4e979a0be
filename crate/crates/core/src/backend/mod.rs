//! Model backends reached over a wire protocol: a teacher that proposes
//! boxes for class prompts and a segmenter that turns boxes into masks.
//!
//! Three transports share the same JSON messages: HTTP, a child process
//! speaking one JSON document per line, and an in-memory oracle that
//! answers from fixture labels.

mod http;
mod mock;
mod subprocess;
pub mod wire;

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{self, WireSchema};

pub use http::HttpBackend;
pub use mock::{MockOracle, RecordedRequest};
pub use subprocess::SubprocessBackend;
pub use wire::{DetectRequest, DetectResponse, ImagePayload, SegmentRequest, SegmentResponse, WireDetection, WireMask};

#[derive(Debug, Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, refused connections, 5xx and 429 replies.
    #[error("transient: {0}")]
    Transient(String),
    #[error("{0}")]
    Permanent(String),
    #[error("protocol: {reason}; payload: {excerpt}")]
    Protocol { reason: String, excerpt: String },
    #[error("oracle has no labels for image `{0}`")]
    OracleMiss(String),
    #[error("backend config: {0}")]
    Config(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted {
        attempts: u32,
        #[source]
        last: Box<BackendError>,
    },
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }

    pub(crate) fn protocol(reason: impl Into<String>, payload: &str) -> Self {
        BackendError::Protocol {
            reason: reason.into(),
            excerpt: excerpt(payload),
        }
    }
}

const EXCERPT_CHARS: usize = 200;

pub(crate) fn excerpt(payload: &str) -> String {
    let mut s: String = payload.chars().take(EXCERPT_CHARS).collect();
    if payload.chars().count() > EXCERPT_CHARS {
        s.push('…');
    }
    s
}

/// Parses a response body, checks it against `schema`, then deserializes it.
pub fn parse_checked<T: DeserializeOwned>(schema_kind: WireSchema, body: &str) -> Result<T, BackendError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| BackendError::protocol(format!("invalid JSON: {e}"), body))?;
    schema::validate(schema_kind, &value).map_err(|e| BackendError::protocol(e.to_string(), body))?;
    serde_json::from_value(value).map_err(|e| BackendError::protocol(e.to_string(), body))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    MockOracle,
    RemoteHttp,
    Subprocess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    /// Base URL for `remote-http`; fixture dataset path for `mock-oracle`.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Program and arguments for `subprocess`.
    #[serde(default)]
    pub command: Vec<String>,
    #[serde(default = "defaults::timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "defaults::max_concurrent")]
    pub max_concurrent: usize,
    #[serde(default = "defaults::retries")]
    pub retries: u32,
    #[serde(default = "defaults::backoff_base_ms")]
    pub backoff_base_ms: u64,
    /// Send image bytes instead of paths.
    #[serde(default)]
    pub inline_images: bool,
}

mod defaults {
    pub fn timeout_ms() -> u64 {
        30_000
    }
    pub fn max_concurrent() -> usize {
        4
    }
    pub fn retries() -> u32 {
        2
    }
    pub fn backoff_base_ms() -> u64 {
        500
    }
}

impl BackendSpec {
    pub fn new(kind: BackendKind) -> Self {
        Self {
            kind,
            endpoint: None,
            command: Vec::new(),
            timeout_ms: defaults::timeout_ms(),
            max_concurrent: defaults::max_concurrent(),
            retries: defaults::retries(),
            backoff_base_ms: defaults::backoff_base_ms(),
            inline_images: false,
        }
    }

    pub fn mock_oracle(fixtures: impl Into<String>) -> Self {
        Self {
            endpoint: Some(fixtures.into()),
            ..Self::new(BackendKind::MockOracle)
        }
    }

    pub fn remote_http(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: Some(endpoint.into()),
            ..Self::new(BackendKind::RemoteHttp)
        }
    }

    pub fn subprocess(command: Vec<String>) -> Self {
        Self {
            command,
            ..Self::new(BackendKind::Subprocess)
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: &str| Err(BackendError::Config(m.to_string()));
        if self.timeout_ms == 0 {
            return bad("timeout_ms must be positive");
        }
        if self.max_concurrent == 0 {
            return bad("max_concurrent must be at least 1");
        }
        match self.kind {
            BackendKind::RemoteHttp => match &self.endpoint {
                Some(e) if e.starts_with("http://") || e.starts_with("https://") => Ok(()),
                Some(e) => Err(BackendError::Config(format!("endpoint `{e}` is not an http(s) URL"))),
                None => bad("remote-http needs an endpoint"),
            },
            BackendKind::Subprocess if self.command.is_empty() => bad("subprocess needs a command"),
            BackendKind::MockOracle if self.endpoint.is_none() => {
                bad("mock-oracle needs the fixture dataset path as its endpoint")
            }
            _ => Ok(()),
        }
    }
}

pub trait Teacher: Send + Sync {
    fn detect(&self, req: &DetectRequest) -> Result<DetectResponse, BackendError>;
}

pub trait Segmenter: Send + Sync {
    fn segment(&self, req: &SegmentRequest) -> Result<SegmentResponse, BackendError>;
}

/// Runs `op`, retrying transient failures `retries` times with delays of
/// `base`, `2*base`, `4*base`, ...
pub fn with_retries<T>(
    retries: u32,
    base: Duration,
    mut op: impl FnMut() -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    let mut attempt = 0u32;
    loop {
        match op() {
            Err(e) if e.is_transient() => {
                if attempt == retries {
                    return Err(BackendError::Exhausted {
                        attempts: attempt + 1,
                        last: Box::new(e),
                    });
                }
                std::thread::sleep(base.saturating_mul(1 << attempt.min(20)));
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// A backend usable both as teacher and segmenter.
pub trait ModelBackend: Teacher + Segmenter {}
impl<T: Teacher + Segmenter> ModelBackend for T {}

pub fn open_backend(spec: &BackendSpec) -> Result<Box<dyn ModelBackend>, BackendError> {
    spec.validate()?;
    match spec.kind {
        BackendKind::RemoteHttp => Ok(Box::new(HttpBackend::new(
            spec.endpoint.as_deref().unwrap_or_default(),
            spec.timeout(),
        ))),
        BackendKind::Subprocess => Ok(Box::new(SubprocessBackend::spawn(&spec.command)?)),
        BackendKind::MockOracle => Ok(Box::new(MockOracle::from_path(std::path::Path::new(
            spec.endpoint.as_deref().unwrap_or_default(),
        ))?)),
    }
}
