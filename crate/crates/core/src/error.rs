use std::path::PathBuf;

/// Errors raised anywhere in the pipeline. [`Error::kind`] gives a stable
/// machine-readable identifier for each variant.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported language `{0}`")]
    UnsupportedLanguage(String),
    #[error("input text is empty")]
    EmptyText,
    #[error("phonemizer backend `{backend}` failed on word `{word}`: {reason}")]
    BackendFailure {
        backend: String,
        word: String,
        reason: String,
    },
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("context extractor unavailable: {0}")]
    ExtractorUnavailable(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("word count mismatch: {features} feature rows for {words} words")]
    WordCountMismatch { features: usize, words: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("infeasible alignment: {frames} frames for {phonemes} phonemes")]
    Infeasible { phonemes: usize, frames: usize },
    #[error("infeasible alignment for batch item {item}: {frames} frames for {phonemes} phonemes")]
    InfeasibleItem {
        item: usize,
        phonemes: usize,
        frames: usize,
    },
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("batch layout error: {0}")]
    Layout(String),
    #[error("{what} id {id} out of range (< {limit})")]
    OutOfRange {
        what: &'static str,
        id: usize,
        limit: usize,
    },
    #[error("context features must be {} when use_context is {use_context}", if *.use_context { "present" } else { "absent" })]
    ContextPresence { use_context: bool },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}:{line}: {message}", .path.display())]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("sample rate mismatch: expected {expected} Hz, got {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("audio error: {0}")]
    Audio(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset has no utterances for language(s): {0}")]
    DatasetCoverage(String),
    #[error("incompatible configuration: {0}")]
    ConfigIncompatible(String),
    #[error("no few-shot data for target speaker(s): {0}")]
    MissingSpeakerData(String),
    #[error("unknown speaker `{0}`")]
    UnknownSpeaker(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("non-finite {term} loss at iteration {iteration}")]
    NonFiniteLoss { term: String, iteration: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tensor(#[from] mmtts_tensor::TensorError),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnsupportedLanguage(_) => "unsupported-language",
            Error::EmptyText => "empty-text",
            Error::BackendFailure { .. } => "backend-failure",
            Error::EmptyCorpus => "empty-corpus",
            Error::ExtractorUnavailable(_) => "extractor-unavailable",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::WordCountMismatch { .. } => "word-count-mismatch",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::Infeasible { .. } | Error::InfeasibleItem { .. } => "infeasible",
            Error::SizeLimit(_) => "size-limit",
            Error::Layout(_) => "layout",
            Error::OutOfRange { .. } => "out-of-range",
            Error::ContextPresence { .. } => "context-presence-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::MissingFile(_) => "missing-file",
            Error::Schema { .. } => "schema",
            Error::SampleRateMismatch { .. } => "sample-rate-mismatch",
            Error::Audio(_) => "audio",
            Error::EmptyDataset => "empty-dataset",
            Error::DatasetCoverage(_) => "dataset-coverage",
            Error::ConfigIncompatible(_) => "config-incompatible",
            Error::MissingSpeakerData(_) => "missing-speaker-data",
            Error::UnknownSpeaker(_) => "unknown-speaker",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Tensor(_) => "tensor",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
