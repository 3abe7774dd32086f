use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: `{field}` {reason}")]
    Config { field: &'static str, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("ambiguous cavity: {count} candidate background components tie")]
    AmbiguousCavity { count: usize },

    #[error("degenerate boundary: {points} points, at least {required} required")]
    DegenerateBoundary { points: usize, required: usize },

    #[error("segment {segment} is missing{}", frame.map(|f| format!(" at frame {f}")).unwrap_or_default())]
    MissingSegment { segment: u8, frame: Option<usize> },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("labeled pool is empty; pseudo labeling needs at least one seed echo")]
    EmptyLabeledPool,

    #[error("stratification impossible: class {class} has {count} members, need at least {k}")]
    Stratification { class: bool, count: usize, k: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("no accept list appeared at {}", path.display())]
    ReviewTimeout { path: PathBuf },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("frame {index}: {source}")]
    Frame { index: usize, #[source] source: Box<Error> },

    #[error("round {round}: {source}")]
    Round { round: usize, #[source] source: Box<Error> },

    #[error("fold {fold}: {source}")]
    Fold { fold: usize, #[source] source: Box<Error> },

    #[error("echo {id}: {source}")]
    Echo { id: String, #[source] source: Box<Error> },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, #[source] source: std::io::Error },

    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, #[source] source: image::ImageError },
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config { field, reason: reason.into() }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format { what, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn in_frame(self, index: usize) -> Self {
        Error::Frame { index, source: Box::new(self) }
    }

    /// Innermost error, with frame/round/fold/echo context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Frame { source, .. }
            | Error::Round { source, .. }
            | Error::Fold { source, .. }
            | Error::Echo { source, .. } => source.root(),
            other => other,
        }
    }
}
