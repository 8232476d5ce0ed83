//! Corpus ingestion: manifests, audio, spectrograms, batching and the
//! synthetic desk corpus.

mod batch;
mod cache;
mod manifest;
mod spectrogram;
mod synthetic;
pub mod wav;

pub use batch::{make_batches, pad_stack, padding_mask, BatchPlan};
pub use cache::{SpectrogramCache, CACHE_VERSION};
pub use manifest::{load_manifest, write_manifest, Manifest, ManifestRecord, SpeakerMap, Utterance};
pub use spectrogram::{
    compute_spectrograms, hann_window, mel_filterbank, reflect_index, AudioConfig, SpectrogramExtractor,
    SpectrogramPair, MEL_FLOOR,
};
pub use synthetic::{
    generate_fewshot_corpus, generate_synthetic_corpus, FewShotOptions, SyntheticOptions, MAX_CLIP_SEC, MIN_CLIP_SEC,
};
