use std::io;

use thiserror::Error;

/// Errors produced by the mbrkit library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate seg_id `{0}`")]
    DuplicateSegment(String),

    #[error("segment `{seg_id}`: duplicate sample_index {index}")]
    DuplicateSampleIndex { seg_id: String, index: usize },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("io error at byte offset {offset}: {source}")]
    Write {
        offset: u64,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown utility `{name}`{}; known utilities: {}", suggestion_suffix(.suggestion), .known.join(", "))]
    UnknownUtility {
        name: String,
        suggestion: Option<String>,
        known: Vec<String>,
    },

    #[error("utility `{utility}` is {actual} but {required} is required")]
    UtilityKindMismatch {
        utility: String,
        actual: &'static str,
        required: &'static str,
    },

    #[error("scorer protocol error: {message} (raw line: {raw:?})")]
    Protocol { message: String, raw: String },

    #[error("scorer returned no score for ids: {}", .0.join(", "))]
    MissingIds(Vec<String>),

    #[error("scorer transport error: {0}")]
    Transport(String),

    #[error("segment `{seg_id}`: scoring failed for {batch}: {source}")]
    Scoring {
        seg_id: String,
        batch: String,
        #[source]
        source: Box<Error>,
    },

    #[error("missing candidates for seg_id `{0}`")]
    MissingCandidates(String),

    #[error("seg_id sets differ: {0}")]
    SegmentMismatch(String),

    #[error("{0}")]
    Empty(String),
}

fn suggestion_suffix(s: &Option<String>) -> String {
    match s {
        Some(s) => format!(" (did you mean `{s}`?)"),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
