//! Client side of the embedding-provider contract: `POST {"texts": [...]}`
//! answered by `{"embeddings": [[...], ...]}`, one row per text in order.

use std::time::Duration;

use oodkit::datamodel::{EmbeddingRow, EmbeddingSet};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    /// Full URL the texts are posted to.
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Extra attempts after the first one fails at the transport level.
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Expected embedding dimension; checked on every response when set.
    #[serde(default)]
    pub dim: Option<usize>,
    /// Delay before the first retry; doubles on each further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_ms() -> u64 {
    2000
}

fn default_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    100
}

impl ProviderConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            dim: None,
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.timeout_ms == 0 {
            return Err(ServiceError::Config("timeout must be positive".into()));
        }
        if self.dim == Some(0) {
            return Err(ServiceError::Config("expected dimension must be positive".into()));
        }
        if !(self.url.starts_with("http://") || self.url.starts_with("https://")) {
            return Err(ServiceError::Config(format!("`{}` is not an http(s) URL", self.url)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ProviderClient {
    config: ProviderConfig,
    http: reqwest::Client,
}

impl ProviderClient {
    pub fn new(config: ProviderConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(Self { config, http })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// Embeds `texts`; row `i` of the result has id `i`.
    pub async fn fetch(&self, texts: &[String]) -> Result<EmbeddingSet<f64>, ServiceError> {
        let body = ProviderRequest { texts: texts.to_vec() };
        let mut attempt = 0;
        let response = loop {
            attempt += 1;
            match self.http.post(&self.config.url).json(&body).send().await {
                Ok(r) => break r,
                Err(e) if attempt <= self.config.retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                    log::warn!("provider attempt {attempt} failed ({e}); retrying in {delay} ms");
                    tokio::time::sleep(Duration::from_millis(delay)).await;
                }
                Err(e) => {
                    return Err(ServiceError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    })
                }
            }
        };
        let status = response.status();
        if !status.is_success() {
            let body = response.text().await.unwrap_or_default();
            return Err(ServiceError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let bytes = response
            .bytes()
            .await
            .map_err(|e| ServiceError::Transport {
                attempts: attempt,
                message: e.to_string(),
            })?;
        let parsed: ProviderResponse =
            serde_json::from_slice(&bytes).map_err(|e| ServiceError::Decode(e.to_string()))?;
        self.validate_response(texts.len(), parsed)
    }

    fn validate_response(&self, expected: usize, parsed: ProviderResponse) -> Result<EmbeddingSet<f64>, ServiceError> {
        if parsed.embeddings.len() != expected {
            return Err(ServiceError::CountMismatch {
                expected,
                got: parsed.embeddings.len(),
            });
        }
        let dim = match (self.config.dim, parsed.embeddings.first()) {
            (Some(d), _) => d,
            (None, Some(row)) => row.len(),
            (None, None) => 1,
        };
        if let Some(row) = parsed.embeddings.iter().find(|r| r.len() != dim) {
            return Err(ServiceError::DimMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        let rows = parsed
            .embeddings
            .into_iter()
            .enumerate()
            .map(|(i, vector)| EmbeddingRow { id: i.to_string(), vector })
            .collect();
        Ok(EmbeddingSet::new(dim, rows)?)
    }
}

/// One-shot form of [`ProviderClient::fetch`].
pub async fn fetch_embeddings(provider: &ProviderConfig, texts: &[String]) -> Result<EmbeddingSet<f64>, ServiceError> {
    ProviderClient::new(provider.clone())?.fetch(texts).await
}
