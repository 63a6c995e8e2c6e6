use std::ops::Range;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Structural problems found while parsing a rollout against the output template.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("missing tag {tag}")]
    MissingTag { tag: &'static str },
    #[error("tag {tag} appears more than once (second occurrence at byte {at})")]
    DuplicateTag { tag: &'static str, at: usize },
    #[error("malformed span list {text:?} at bytes {region:?}")]
    MalformedSpanList { text: String, region: Range<usize> },
    #[error("answer {letter:?} at bytes {region:?} is not one of the options")]
    UnknownAnswerLetter { letter: String, region: Range<usize> },
    #[error("malformed <time> mark {text:?} at bytes {region:?}")]
    MalformedTimeMark { text: String, region: Range<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("policy client timed out: {0}")]
    Timeout(String),
    #[error("policy client protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("tokens do not reconstruct the response text (diverged at byte {at})")]
    ConcatenationMismatch { at: usize },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
