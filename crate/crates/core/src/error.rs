use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("layer {upstream} output {produced:?} is incompatible with layer {downstream} ({reason})")]
    IncompatibleLayers {
        upstream: String,
        downstream: String,
        produced: Vec<usize>,
        reason: String,
    },

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("length mismatch in {context}: expected {expected}, got {actual}")]
    LengthMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid component {0}")]
    InvalidComponent(String),

    #[error("trace does not belong to this network: {0}")]
    TraceMismatch(String),

    #[error("non-finite relevance at layer {layer}")]
    NonFiniteRelevance { layer: usize },

    #[error("non-finite loss at batch {batch} (epoch {epoch})")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("missing relevance score for component {0}")]
    MissingScore(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("aggregation weights sum to {0}, expected 1")]
    WeightSum(f64),

    #[error("infeasible partition: {0}")]
    Partition(String),

    #[error("reference sample {index}: {source}")]
    ReferenceSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("round {round}, client {client}: {source}")]
    Client {
        round: usize,
        client: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
