//! Online OOD scoring over HTTP, plus a client for external embedding
//! providers.
//!
//! Endpoints: `POST /v1/score`, `GET /v1/health`, `GET /v1/info`.

mod error;
mod provider;
mod server;

pub use error::ServiceError;
pub use provider::{fetch_embeddings, ProviderClient, ProviderConfig, ProviderRequest, ProviderResponse};
pub use server::{router, serve, AppState, Counters, ScoreRequest, ScoreResponse};

use sha2::{Digest, Sha256};

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
