use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer} ({kind}): expected {expected:?}, got {got:?}")]
    LayerShape {
        layer: usize,
        kind: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("backward called before forward")]
    NotForwarded,

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("embedding training diverged in round {round} at epoch {epoch}: loss = {loss}")]
    EmbeddingDiverged {
        round: usize,
        epoch: usize,
        loss: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("requested {requested} queries from a dataset of {available}")]
    TooManyQueries { requested: usize, available: usize },

    #[error("response buffer has no records for the current round")]
    EmptyBuffer,

    #[error("unknown query ids: {0:?}")]
    UnknownQuery(Vec<String>),

    #[error("duplicate query ids: {0:?}")]
    DuplicateQuery(Vec<String>),

    #[error("missing responses for query ids: {0:?}")]
    MissingQuery(Vec<String>),

    #[error("response {value} for query {id} is outside the action set")]
    InvalidResponse { id: String, value: f64 },

    #[error("no queries are pending")]
    NoPendingQueries,

    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("singular system in {0}")]
    Singular(&'static str),

    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("unsupported network document version {0}")]
    Version(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
