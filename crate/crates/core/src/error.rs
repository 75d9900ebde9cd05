use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}{}", fmt_at(*at))]
    Dimension {
        left: usize,
        right: usize,
        at: Option<(usize, usize)>,
    },

    #[error("degenerate vector (zero norm or non-finite values){}", fmt_at(*at))]
    DegenerateVector { at: Option<(usize, usize)> },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid question: {0}")]
    InvalidQuestion(String),

    #[error("invalid prompt set: {0}")]
    InvalidPrompts(String),

    #[error("no usable \"a photo of\" prompt in LLM output")]
    PromptParse,

    #[error("LLM request failed: {0}")]
    Llm(String),

    #[error("embedding backend error: {0}")]
    Backend(String),

    #[error("backend contract violation: {0}")]
    ContractViolation(String),

    #[error("frame {index}: {message}")]
    Frame { index: usize, message: String },

    #[error("frame {index} is {got:?} but the merge group expects {expected:?}")]
    MergeDimension {
        index: usize,
        expected: (u32, u32),
        got: (u32, u32),
    },

    #[error("`{tool}` not found on PATH; {hint}")]
    ToolNotFound { tool: String, hint: &'static str },

    #[error("decoder failed: {0}")]
    Decoder(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn fmt_at(at: Option<(usize, usize)>) -> String {
    match at {
        Some((i, j)) => format!(" at ({i}, {j})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Attach a matrix position to a math error.
    pub(crate) fn at(self, i: usize, j: usize) -> Self {
        match self {
            Error::Dimension { left, right, .. } => Error::Dimension {
                left,
                right,
                at: Some((i, j)),
            },
            Error::DegenerateVector { .. } => Error::DegenerateVector { at: Some((i, j)) },
            other => other,
        }
    }
}
