//! Batched client for HTTP embedding APIs.
//!
//! Request body: `{"model": <string>, "input": [<string>, ...]}`.
//! Response body: `{"data": [{"index": <int>, "embedding": [<float>, ...]}, ...]}`.
//! Texts are sent verbatim. Transient failures (transport errors, 408, 429
//! and 5xx) are retried with exponential backoff up to `max_retries` times.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use super::{EmbeddingError, EmbeddingProvider, ProviderDescriptor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model: String,
    pub input: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDatum {
    pub index: usize,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub data: Vec<EmbeddingDatum>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("status {status}: {message}")]
    Status { status: u16, message: String },
}

impl TransportError {
    fn is_transient(&self) -> bool {
        match self {
            TransportError::Transient(_) => true,
            TransportError::Status { status, .. } => {
                *status == 408 || *status == 429 || (500..600).contains(status)
            }
        }
    }
}

/// One request/response exchange with the embedding service.
pub trait Transport: Send + Sync {
    fn send(&self, request: &EmbedRequest) -> Result<EmbedResponse, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub dim: usize,
    /// Header carrying the credential, e.g. `Authorization` or `api-key`.
    pub auth_header: String,
    /// Prepended to the token, e.g. `Bearer `.
    pub auth_prefix: String,
    pub max_batch_size: usize,
    pub timeout: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub parallelism: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, dim: usize) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            dim,
            auth_header: "Authorization".into(),
            auth_prefix: "Bearer ".into(),
            max_batch_size: 100,
            timeout: Duration::from_secs(60),
            max_retries: 5,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            parallelism: 4,
        }
    }
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    auth: Option<(String, String)>,
}

impl HttpTransport {
    pub fn new(config: &RemoteConfig, token: Option<&str>) -> Result<Self, EmbeddingError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| EmbeddingError::Provider {
                message: format!("cannot build HTTP client: {e}"),
                indices: Vec::new(),
            })?;
        Ok(HttpTransport {
            client,
            endpoint: config.endpoint.clone(),
            auth: token.map(|t| {
                (
                    config.auth_header.clone(),
                    format!("{}{t}", config.auth_prefix),
                )
            }),
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &EmbedRequest) -> Result<EmbedResponse, TransportError> {
        let mut req = self.client.post(&self.endpoint).json(request);
        if let Some((name, value)) = &self.auth {
            req = req.header(name.as_str(), value.as_str());
        }
        let resp = req
            .send()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let message = resp.text().unwrap_or_default();
            return Err(TransportError::Status {
                status: status.as_u16(),
                message,
            });
        }
        let body = resp
            .bytes()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        serde_json::from_slice(&body).map_err(|e| TransportError::Status {
            status: status.as_u16(),
            message: format!("malformed response body: {e}"),
        })
    }
}

type ChunkResult = Result<Vec<Vec<f64>>, EmbeddingError>;

pub struct RemoteEmbedder<T: Transport> {
    config: RemoteConfig,
    transport: T,
    desc: ProviderDescriptor,
    requests: AtomicU64,
}

impl<T: Transport> RemoteEmbedder<T> {
    pub fn new(config: RemoteConfig, transport: T) -> Self {
        let desc = ProviderDescriptor {
            provider_id: format!("remote:{}", config.model),
            dim: config.dim,
            normalize_on_ingest: true,
        };
        RemoteEmbedder {
            config,
            transport,
            desc,
            requests: AtomicU64::new(0),
        }
    }

    /// Requests issued so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt);
        self.config
            .initial_backoff
            .saturating_mul(factor)
            .min(self.config.max_backoff)
    }

    /// Sends one batch; `offset` is the position of its first text.
    fn embed_chunk(&self, texts: &[&str], offset: usize) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let indices = || (offset..offset + texts.len()).collect::<Vec<_>>();
        let request = EmbedRequest {
            model: self.config.model.clone(),
            input: texts.iter().map(|t| t.to_string()).collect(),
        };
        let mut attempt = 0;
        let response = loop {
            self.requests.fetch_add(1, Ordering::Relaxed);
            match self.transport.send(&request) {
                Ok(r) => break r,
                Err(e) if e.is_transient() && attempt < self.config.max_retries => {
                    let wait = self.backoff(attempt);
                    warn!(
                        "embedding request failed (attempt {}/{}): {e}; retrying in {wait:?}",
                        attempt + 1,
                        self.config.max_retries + 1
                    );
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(TransportError::Status { status, message })
                    if status < 500 && status != 408 && status != 429 =>
                {
                    return Err(EmbeddingError::Api {
                        status,
                        message,
                        indices: indices(),
                    });
                }
                Err(e) => {
                    return Err(EmbeddingError::Provider {
                        message: format!("giving up after {} attempts: {e}", attempt + 1),
                        indices: indices(),
                    });
                }
            }
        };

        if response.data.len() != texts.len() {
            return Err(EmbeddingError::Protocol {
                message: format!(
                    "{} embeddings returned for {} inputs",
                    response.data.len(),
                    texts.len()
                ),
                indices: indices(),
            });
        }
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for d in response.data {
            match slots.get_mut(d.index) {
                Some(slot @ None) => *slot = Some(d.embedding),
                _ => {
                    return Err(EmbeddingError::Protocol {
                        message: format!("invalid or repeated index {}", d.index),
                        indices: indices(),
                    })
                }
            }
        }
        let out: Vec<Vec<f64>> = slots
            .into_iter()
            .map(|s| s.expect("all indices seen"))
            .collect();
        if let Some(bad) = out.iter().find(|v| v.len() != self.config.dim) {
            return Err(EmbeddingError::Protocol {
                message: format!(
                    "embedding of dim {} where {} expected",
                    bad.len(),
                    self.config.dim
                ),
                indices: indices(),
            });
        }
        Ok(out)
    }
}

impl<T: Transport> EmbeddingProvider for RemoteEmbedder<T> {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.desc
    }

    /// Splits into `ceil(n / max_batch_size)` requests and runs them on up to
    /// `parallelism` threads; output order follows input order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let batch = self.config.max_batch_size.max(1);
        let chunks: Vec<(usize, &[&str])> = texts
            .chunks(batch)
            .enumerate()
            .map(|(i, c)| (i * batch, c))
            .collect();
        let results: Mutex<Vec<Option<ChunkResult>>> =
            Mutex::new((0..chunks.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = self.config.parallelism.clamp(1, chunks.len().max(1));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&(offset, chunk)) = chunks.get(i) else {
                        break;
                    };
                    let r = self.embed_chunk(chunk, offset);
                    let failed = r.is_err();
                    results.lock().expect("results lock")[i] = Some(r);
                    if failed {
                        // Stop handing out further batches.
                        next.store(chunks.len(), Ordering::Relaxed);
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for r in results
            .into_inner()
            .expect("results lock")
            .into_iter()
            .flatten()
        {
            out.extend(r?);
        }
        if out.len() != texts.len() {
            return Err(EmbeddingError::Provider {
                message: "batch aborted after an earlier failure".into(),
                indices: (out.len()..texts.len()).collect(),
            });
        }
        Ok(out)
    }
}
