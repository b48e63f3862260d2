//! Error type shared by every module, with the CLI-visible error categories.

use std::path::PathBuf;

/// Crate-wide error. Every failure surfaced by the CLI maps onto one of the
/// machine-parseable categories returned by [`Error::category`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration value or combination; the message names the
    /// violated constraint.
    #[error("config: {0}")]
    Config(String),

    /// Malformed input file (IDX, CIFAR, PGM, checkpoint); carries the byte
    /// offset where parsing failed.
    #[error("format at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// Tensor shape mismatch; the message names both shapes.
    #[error("dimension: {0}")]
    Dimension(String),

    /// Pruning schedule asked for more channels than are available.
    #[error("schedule: {0}")]
    Schedule(String),

    /// Non-finite value produced by an operation (NaN/Inf guard).
    #[error("numeric: non-finite value in {op}: {msg}")]
    Numeric { op: String, msg: String },

    /// Operation precondition violated by the caller.
    #[error("contract: {0}")]
    Contract(String),

    /// Underlying I/O failure.
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn schedule(msg: impl Into<String>) -> Self {
        Error::Schedule(msg.into())
    }

    pub fn numeric(op: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Numeric {
            op: op.into(),
            msg: msg.into(),
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// CLI error category. One word, stable, machine-parseable.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Io { .. } => "config",
            Error::Format { .. } => "format",
            Error::Dimension(_) => "dimension",
            Error::Schedule(_) => "schedule",
            Error::Numeric { .. } => "numeric",
        }
    }

    /// Process exit code for the CLI: one distinct code per category.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "format" => 3,
            "dimension" => 4,
            "schedule" => 5,
            "numeric" => 6,
            _ => 1,
        }
    }

    /// Prefix the message with a layer or site name for diagnostics.
    pub fn in_layer(self, layer: &str) -> Self {
        match self {
            Error::Numeric { op, msg } => Error::Numeric {
                op: format!("{layer}/{op}"),
                msg,
            },
            Error::Dimension(m) => Error::Dimension(format!("{layer}: {m}")),
            Error::Config(m) => Error::Config(format!("{layer}: {m}")),
            Error::Contract(m) => Error::Contract(format!("{layer}: {m}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
