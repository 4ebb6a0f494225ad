use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid provider config: {0}")]
    Config(String),
    #[error("embedding provider unreachable after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("embedding provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("embedding provider sent an unreadable body: {0}")]
    Decode(String),
    #[error("embedding provider returned {got} embeddings for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("embedding provider returned dimension {got}, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] oodkit::OodError),
}
