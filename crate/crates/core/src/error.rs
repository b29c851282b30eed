use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the splitting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed line: {0}")]
    MalformedLine(String),
    #[error("expected {expected} elements per tuple, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("term {term:?} does not occur in the sentence")]
    TermNotInSentence { term: String },
    #[error("unknown polarity {0:?}")]
    UnknownPolarity(String),
    #[error("aspect category {0:?} is not in the declared category set")]
    UnknownCategory(String),
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("few-shot prompting requires at least one demonstration")]
    MissingDemos,
    #[error("teacher unavailable: {0}")]
    TeacherUnavailable(String),
    #[error("no split candidates to filter")]
    NoCandidates,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("loss diverged (non-finite) at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("no preference pairs to train on")]
    EmptyPairs,
    #[error("ABSA backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("prediction and gold id sets differ: {0}")]
    IdMismatch(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("missing upstream artifact {}", .0.display())]
    MissingUpstream(PathBuf),
    #[error("stage {stage} failed: {source}")]
    StageFailed {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedLine(_) => "MalformedLine",
            Error::ArityMismatch { .. } => "ArityMismatch",
            Error::TermNotInSentence { .. } => "TermNotInSentence",
            Error::UnknownPolarity(_) => "UnknownPolarity",
            Error::UnknownCategory(_) => "UnknownCategory",
            Error::AtLine { source, .. } => source.code(),
            Error::EmptyDataset => "EmptyDataset",
            Error::MissingDemos => "MissingDemos",
            Error::TeacherUnavailable(_) => "TeacherUnavailable",
            Error::NoCandidates => "NoCandidates",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::DivergedLoss { .. } => "DivergedLoss",
            Error::EmptyPairs => "EmptyPairs",
            Error::BackendUnavailable(_) => "BackendUnavailable",
            Error::IdMismatch(_) => "IdMismatch",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::MissingUpstream(_) => "MissingUpstream",
            Error::StageFailed { .. } => "StageFailed",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// The innermost error, looking through line and stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtLine { source, .. } | Error::StageFailed { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
