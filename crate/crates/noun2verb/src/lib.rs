//! Probabilistic speaker-listener models of noun-to-verb conversion.
//!
//! A denominal utterance `U = (D, C)` pairs a noun used as a verb with its
//! single-word object context ("porch the newspaper"). An interpretation
//! `I = (V, R)` pairs a paraphrase verb with one of eight semantic relation
//! types; a categorical latent frame variable `E` captures residual scene
//! structure. Three model classes of increasing richness — discriminative,
//! partial generative, and full generative — define listener and speaker
//! conditionals over these variables and are trained with a semi-supervised
//! variational objective.
//!
//! The crate also covers the surrounding pipeline: vocabulary and embedding
//! ingestion ([`lexicon`]), dataset files and cross-validation ([`data`]),
//! template-based paraphrase harvesting ([`harvest`]), training loops
//! ([`train`]), the comprehension/production tasks ([`infer`]), ranking and
//! divergence metrics ([`eval`]), and change-point detection over historical
//! part-of-speech counts ([`diachronic`]).

pub mod data;
pub mod diachronic;
pub mod eval;
pub mod harvest;
pub mod infer;
pub mod lexicon;
pub mod loss;
pub mod model;
pub mod relations;
pub mod synthetic;
pub mod train;

pub use relations::RelationType;

/// Errors across the dataset, model and pipeline layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A malformed input file; carries the line number when known.
    #[error("format error{}: {msg}", fmt_location(.path, .line))]
    Format {
        path: Option<String>,
        line: Option<usize>,
        msg: String,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
    #[error(transparent)]
    Autodiff(#[from] autodiff::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn fmt_location(path: &Option<String>, line: &Option<usize>) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!(" at {p}:{l}"),
        (Some(p), None) => format!(" at {p}"),
        (None, Some(l)) => format!(" at line {l}"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format {
            path: None,
            line: None,
            msg: msg.into(),
        }
    }

    pub fn format_at(path: &std::path::Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            path: Some(path.display().to_string()),
            line: Some(line),
            msg: msg.into(),
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
