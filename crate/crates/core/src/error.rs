use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("topology has no nodes")]
    Empty,
    #[error("self-loop at node {0}")]
    SelfLoop(String),
    #[error("duplicate link {from}->{to}")]
    DuplicateLink { from: String, to: String },
    #[error("link {from}->{to} has zero capacity")]
    ZeroCapacity { from: String, to: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("topology is not strongly connected")]
    Disconnected,
    #[error("invalid transmission range {0}")]
    InvalidRange(f64),
    #[error("coordinate topology needs either `range` or `auto_connect`")]
    MissingRange,
    #[error("coordinate topology sets both `range` and `auto_connect`")]
    AmbiguousRange,
    #[error("k-hop interference needs k >= 1")]
    ZeroHop,
    #[error("brute-force oracle limited to {limit} elements, got {got}")]
    OracleTooLarge { limit: usize, got: usize },
    #[error("failed to parse topology: {0}")]
    Parse(String),
    #[error("failed to read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("failed to read {path}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to write {path}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv export failed")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}
