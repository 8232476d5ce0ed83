#![allow(dead_code)]

use std::path::Path;

use mmtts::data::{generate_synthetic_corpus, load_manifest, Manifest, SyntheticOptions};
use mmtts::frontend::PhonemeVocabulary;
use mmtts::model::ModelConfig;
use mmtts::pipeline::{FrontendConfig, TextFrontend};
use mmtts::train::{build_vocabulary, load_dataset, Dataset, RunSetup, TrainConfig};

pub struct Corpus {
    pub manifest: Manifest,
    pub vocab: PhonemeVocabulary,
    pub dataset: Dataset,
    pub setup: RunSetup,
}

/// One speaker per language, one utterance each, truncated to `keep`.
pub fn desk_corpus(dir: &Path, keep: usize) -> Corpus {
    let opts = SyntheticOptions {
        speakers_per_language: 1,
        utterances_per_speaker: 1,
        ..Default::default()
    };
    let path = generate_synthetic_corpus(dir, 11, &opts).unwrap();
    let mut manifest = load_manifest(&path).unwrap();
    manifest.utterances.truncate(keep);
    let fcfg = FrontendConfig::default();
    let mut fe = TextFrontend::new(&fcfg, None).unwrap();
    let vocab = build_vocabulary(&manifest, &fe).unwrap();
    let model = ModelConfig {
        n_speakers: manifest.speakers.len(),
        ..ModelConfig::desk()
    };
    let dataset = load_dataset(&manifest, &mut fe, &vocab, &model, None).unwrap();
    let setup = RunSetup {
        model,
        train: TrainConfig::desk(),
        frontend: fcfg,
        context: None,
    };
    Corpus {
        manifest,
        vocab,
        dataset,
        setup,
    }
}
