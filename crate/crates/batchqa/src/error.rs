use thiserror::Error;

/// Errors surfaced by corpus loading, grouping, scoring and the runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("dangling reference: {0}")]
    DanglingReference(String),

    #[error("transcript {transcript_id}: utterance indices are not contiguous 1..M ({detail})")]
    NonContiguousIndices {
        transcript_id: String,
        detail: String,
    },

    #[error("corpus contains no transcripts")]
    EmptyCorpus,

    #[error("transcript {transcript_id}: {available} referenced questions available, {needed} needed")]
    InsufficientQuestions {
        transcript_id: String,
        available: usize,
        needed: usize,
    },

    #[error("group/transcript mismatch: {0}")]
    MismatchedTranscript(String),

    #[error("prompt exceeds max length guard: {actual} chars > {limit}")]
    PromptTooLong { actual: usize, limit: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("alignment error: {0}")]
    AlignmentError(String),

    #[error("authentication failed: {0}")]
    Auth(String),

    #[error("transport failure after {attempts} attempts: {reason}")]
    Transport { attempts: u32, reason: String },

    #[error("bad request: {0}")]
    BadRequest(String),

    #[error("corrupt archive: {0}")]
    CorruptArchive(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
