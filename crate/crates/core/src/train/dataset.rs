use std::collections::BTreeSet;

use ndarray::Array2;

use crate::data::wav::parse_wav;
use crate::data::{Manifest, SpectrogramCache, SpectrogramExtractor, Utterance};
use crate::frontend::{Language, PhonemeSequence, PhonemeVocabulary};
use crate::model::ModelConfig;
use crate::pipeline::TextFrontend;
use crate::{Error, Result};

/// One utterance ready for the trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub id: String,
    pub ids: Vec<usize>,
    pub context: Option<Array2<f32>>,
    pub language: usize,
    pub speaker: usize,
    /// `F x bins` linear magnitude spectrogram.
    pub linear: Array2<f32>,
    pub audio: Vec<f32>,
}

impl TrainItem {
    pub fn phonemes(&self) -> usize {
        self.ids.len()
    }

    pub fn frames(&self) -> usize {
        self.linear.nrows()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub items: Vec<TrainItem>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn frame_lengths(&self) -> Vec<usize> {
        self.items.iter().map(TrainItem::frames).collect()
    }

    pub fn speakers(&self) -> BTreeSet<usize> {
        self.items.iter().map(|i| i.speaker).collect()
    }
}

/// Phonemizes every utterance of `manifest`.
pub fn phonemize_manifest(manifest: &Manifest, frontend: &TextFrontend) -> Result<Vec<PhonemeSequence>> {
    manifest
        .utterances
        .iter()
        .map(|u| frontend.phonemize(&u.text, u.language.code()).map(|(_, s)| s))
        .collect()
}

/// Vocabulary over every symbol the corpus produces.
pub fn build_vocabulary(manifest: &Manifest, frontend: &TextFrontend) -> Result<PhonemeVocabulary> {
    PhonemeVocabulary::build(&phonemize_manifest(manifest, frontend)?)
}

fn linear_for(u: &Utterance, extractor: &SpectrogramExtractor, cache: Option<&SpectrogramCache>) -> Result<(Vec<f32>, Array2<f32>)> {
    let bytes = std::fs::read(&u.audio_path).map_err(|_| Error::MissingFile(u.audio_path.clone()))?;
    let wav = parse_wav(&bytes)?;
    let sr = extractor.config().sample_rate;
    if wav.sample_rate != sr {
        return Err(Error::SampleRateMismatch {
            expected: sr,
            found: wav.sample_rate,
        });
    }
    let key = cache.map(|c| c.key(&bytes));
    if let (Some(c), Some(k)) = (cache, key.as_deref()) {
        if let Some(spec) = c.get(k)? {
            return Ok((wav.samples, spec));
        }
    }
    let spec = extractor.linear(&wav.samples)?;
    if let (Some(c), Some(k)) = (cache, key.as_deref()) {
        c.put(k, &spec)?;
    }
    Ok((wav.samples, spec))
}

/// Loads audio, spectrograms and text features for every utterance.
///
/// Utterances with fewer frames than phonemes cannot be aligned and are
/// skipped with a warning. Every language present in the manifest must keep
/// at least one utterance.
pub fn load_dataset(
    manifest: &Manifest,
    frontend: &mut TextFrontend,
    vocab: &PhonemeVocabulary,
    cfg: &ModelConfig,
    cache: Option<&SpectrogramCache>,
) -> Result<Dataset> {
    if manifest.utterances.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let extractor = SpectrogramExtractor::new(&cfg.audio())?;
    let mut items = Vec::with_capacity(manifest.utterances.len());
    for u in &manifest.utterances {
        let (audio, linear) = linear_for(u, &extractor, cache)?;
        let text = frontend.analyze(&u.text, u.language.code(), vocab)?;
        let ids = text.ids();
        if linear.nrows() < ids.len() {
            log::warn!(
                "skipping {}: {} frames cannot cover {} phonemes",
                u.id,
                linear.nrows(),
                ids.len()
            );
            continue;
        }
        items.push(TrainItem {
            id: u.id.clone(),
            ids,
            context: text.context,
            language: u.language.id(),
            speaker: u.speaker_id,
            linear,
            audio,
        });
    }
    let wanted: BTreeSet<Language> = manifest.languages();
    let kept: BTreeSet<usize> = items.iter().map(|i| i.language).collect();
    let missing: Vec<&str> = wanted.iter().filter(|l| !kept.contains(&l.id())).map(|l| l.code()).collect();
    if !missing.is_empty() {
        return Err(Error::DatasetCoverage(missing.join(", ")));
    }
    Ok(Dataset { items })
}
