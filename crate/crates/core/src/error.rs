use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("line {line}, col {col}: unknown symbol `{symbol}`")]
    UnknownSymbol {
        line: usize,
        col: usize,
        symbol: String,
    },

    #[error("line {line}, col {col}: malformed span: {message}")]
    MalformedSpan {
        line: usize,
        col: usize,
        message: String,
    },

    #[error("line {line}: empty utterance line")]
    EmptyLine { line: usize },

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("unknown token id {0}")]
    UnknownToken(u32),

    #[error("mask length {mask} does not match sequence length {seq}")]
    MaskLengthMismatch { mask: usize, seq: usize },

    #[error("static + dynamic components do not reproduce the first sublayer output at token {token}, channel {channel}")]
    ConsistencyFailure { token: usize, channel: usize },

    #[error("loss became non-finite during evaluation")]
    NonFiniteLoss,

    #[error("non-finite activation in {context}")]
    NonFiniteActivation { context: String },

    #[error("loss diverged at step {step}: {loss}")]
    DivergedLoss { step: usize, loss: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            expected: expected.into(),
            got: got.into(),
        }
    }

    /// Stable machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::UnknownSymbol { .. } => "unknown_symbol",
            Error::MalformedSpan { .. } => "malformed_span",
            Error::EmptyLine { .. } => "empty_line",
            Error::InvalidLabel(_) => "invalid_label",
            Error::UnknownToken(_) => "unknown_token",
            Error::MaskLengthMismatch { .. } => "mask_length_mismatch",
            Error::ConsistencyFailure { .. } => "consistency_failure",
            Error::NonFiniteLoss => "non_finite_loss",
            Error::NonFiniteActivation { .. } => "non_finite_activation",
            Error::DivergedLoss { .. } => "diverged_loss",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
