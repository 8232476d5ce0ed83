//! Text analysis shared by training and synthesis: phonemize, encode ids and
//! (for context-fused models) attach phoneme-level context rows.

use std::path::PathBuf;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::context::{create_extractor, extract_word_features, replicate_to_phonemes, ContextExtractor, ContextExtractorSpec};
use crate::frontend::{
    phonemize, resolve_backend, BuiltinBackend, EspeakBackend, FrontendOptions, LanguageTag, PhonemeSequence,
    PhonemeVocabulary, PhonemizerBackend,
};
use crate::data::SpeakerMap;
use crate::model::{Model, Synthesis, SynthesisNoise, TextItem};
use crate::train::{load_params, Checkpoint};
use crate::{Error, Result};
use mmtts_tensor::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Builtin,
    Espeak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendConfig {
    pub backend: BackendKind,
    pub espeak_program: PathBuf,
    pub keep_punctuation: bool,
    pub word_boundaries: bool,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Builtin,
            espeak_program: PathBuf::from("espeak-ng"),
            keep_punctuation: false,
            word_boundaries: false,
        }
    }
}

impl FrontendConfig {
    pub fn options(&self) -> FrontendOptions {
        FrontendOptions {
            keep_punctuation: self.keep_punctuation,
            word_boundaries: self.word_boundaries,
        }
    }

    pub fn backend(&self) -> Box<dyn PhonemizerBackend> {
        match self.backend {
            BackendKind::Builtin => Box::new(BuiltinBackend),
            BackendKind::Espeak => Box::new(EspeakBackend::new(&self.espeak_program)),
        }
    }
}

/// Phonemized and (optionally) encoded text.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzedText {
    pub tag: LanguageTag,
    pub sequence: PhonemeSequence,
    pub unknown: usize,
    /// `P x context_dim`, present when the frontend carries an extractor.
    pub context: Option<Array2<f32>>,
}

impl AnalyzedText {
    pub fn ids(&self) -> Vec<usize> {
        self.sequence.ids_usize()
    }
}

pub struct TextFrontend {
    backend: Box<dyn PhonemizerBackend>,
    options: FrontendOptions,
    extractor: Option<(Box<dyn ContextExtractor>, usize)>,
}

impl std::fmt::Debug for TextFrontend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TextFrontend")
            .field("backend", &self.backend.name())
            .field("options", &self.options)
            .field("context_dim", &self.extractor.as_ref().map(|e| e.1))
            .finish()
    }
}

impl TextFrontend {
    /// `context` is `Some` exactly when the model fuses context features.
    pub fn new(cfg: &FrontendConfig, context: Option<&ContextExtractorSpec>) -> Result<Self> {
        let extractor = match context {
            Some(spec) => {
                spec.validate()?;
                Some((create_extractor(spec)?, spec.dim))
            }
            None => None,
        };
        Ok(Self {
            backend: cfg.backend(),
            options: cfg.options(),
            extractor,
        })
    }

    pub fn with_backend(backend: Box<dyn PhonemizerBackend>, options: FrontendOptions) -> Self {
        Self {
            backend,
            options,
            extractor: None,
        }
    }

    pub fn uses_context(&self) -> bool {
        self.extractor.is_some()
    }

    /// Phonemes only, no ids.
    pub fn phonemize(&self, text: &str, lang_code: &str) -> Result<(LanguageTag, PhonemeSequence)> {
        let tag = resolve_backend(lang_code)?;
        if tag.is_aliased() {
            log::info!("{} text is phonemized with the {} phonemizer", tag.code, tag.backend_code);
        }
        let seq = phonemize(text, tag, self.backend.as_ref(), self.options)?;
        Ok((tag, seq))
    }

    /// Phonemizes, encodes with `vocab` and extracts context if configured.
    pub fn analyze(&mut self, text: &str, lang_code: &str, vocab: &PhonemeVocabulary) -> Result<AnalyzedText> {
        let (tag, seq) = self.phonemize(text, lang_code)?;
        let (sequence, unknown) = vocab.encode(&seq);
        if unknown > 0 {
            log::warn!("{unknown} phoneme(s) of {text:?} are not in the vocabulary");
        }
        let context = match self.extractor.as_mut() {
            Some((extractor, dim)) => {
                let words = extract_word_features(text, tag, extractor.as_mut(), *dim)?;
                Some(replicate_to_phonemes(&words, &sequence)?.matrix)
            }
            None => None,
        };
        Ok(AnalyzedText {
            tag,
            sequence,
            unknown,
            context,
        })
    }
}

/// Text-to-waveform inference from a checkpoint.
pub struct Synthesizer {
    pub model: Model,
    pub store: ParamStore<f32>,
    pub vocabulary: PhonemeVocabulary,
    pub speakers: SpeakerMap,
    frontend: TextFrontend,
}

impl Synthesizer {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut store = ParamStore::new();
        let model = Model::new(&mut store, &ck.model, ck.vocabulary.id_count(), ck.train.seed)?;
        load_params(&mut store, &ck.params)?;
        let frontend = TextFrontend::new(&ck.frontend, ck.context.as_ref())?;
        Ok(Self {
            model,
            store,
            vocabulary: ck.vocabulary.clone(),
            speakers: ck.speakers.clone(),
            frontend,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.model.cfg.sample_rate
    }

    /// `speaker` is a label from the training manifests.
    pub fn synthesize(&mut self, text: &str, lang_code: &str, speaker: &str, noise: SynthesisNoise) -> Result<Synthesis> {
        let speaker = self.speakers.id(speaker).ok_or_else(|| Error::UnknownSpeaker(speaker.to_string()))?;
        let analyzed = self.frontend.analyze(text, lang_code, &self.vocabulary)?;
        let ids = analyzed.ids();
        let item = TextItem {
            ids: &ids,
            context: analyzed.context.as_ref(),
            language: analyzed.tag.code.id(),
            speaker,
        };
        self.model.synthesize(&self.store, item, noise)
    }
}
