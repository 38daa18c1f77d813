use thiserror::Error;

/// Errors surfaced by the library. Shape mismatches and out-of-range ids are
/// programmer errors and panic instead (with both shapes in the message).
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus: vocabulary needs at least one token")]
    EmptyCorpus,

    #[error("unknown user id `{0}`; known users: {1:?}")]
    UnknownUser(String, Vec<String>),

    #[error("unknown model kind `{0}` (expected one of S2S, ST-S2S, ST-E-S2S, PT-S2S, HRED, ST-HRED, PT-HRED)")]
    UnknownModelKind(String),

    #[error("turn {turn}: gate label count {labels} does not match response length {words}")]
    LabelLengthMismatch {
        turn: usize,
        labels: usize,
        words: usize,
    },

    #[error("loss function is not deterministic: two evaluations returned {0} and {1}")]
    NonDeterministicLoss(f64, f64),

    #[error("optimizer state was built for {expected} parameters but the store has {actual}")]
    OptimizerStateMismatch { expected: usize, actual: usize },

    #[error("template selection needs at least one candidate")]
    EmptyCandidates,

    #[error("empty batch: reinforce update needs at least one trajectory")]
    EmptyBatch,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
