use std::collections::BTreeSet;

use super::checkpoint::Checkpoint;
use super::trainer::{missing_targets, RunSetup, Trainer};
use crate::data::Manifest;
use crate::{Error, Result};

/// A trainer restored from a base checkpoint with its speaker table grown
/// to cover the few-shot speakers, plus the manifest remapped onto it.
pub struct FinetunePlan {
    pub trainer: Trainer,
    pub manifest: Manifest,
    /// Labels appended to the speaker map, in id order.
    pub added: Vec<String>,
}

/// Starts fine-tuning from `base`.
///
/// `setup.model` must match the checkpoint architecture; only the training
/// settings of `setup` are adopted. Every label in `targets` needs at least
/// one utterance in `fewshot`. When `setup.train.replay` is on, `replay`
/// supplies base-corpus utterances that are mixed in.
pub fn prepare_finetune(
    base: Checkpoint,
    setup: &RunSetup,
    fewshot: Manifest,
    targets: &[String],
    replay: Option<Manifest>,
) -> Result<FinetunePlan> {
    base.check_compatible(&setup.model)?;
    if base.context.as_ref().map(|c| c.dim) != setup.context.as_ref().map(|c| c.dim) {
        return Err(Error::ConfigIncompatible("context extractor differs from the checkpoint".into()));
    }
    setup.train.validate()?;
    let missing = missing_targets(&fewshot, targets);
    if !missing.is_empty() {
        return Err(Error::MissingSpeakerData(missing.join(", ")));
    }
    let mut trainer = Trainer::from_checkpoint(base)?;
    trainer.setup.train = setup.train.clone();
    trainer.iteration = 0;
    trainer.reset_optimizers();

    let labels: BTreeSet<String> = fewshot
        .utterances
        .iter()
        .map(|u| u.speaker.clone())
        .chain(targets.iter().cloned())
        .collect();
    let before = trainer.speakers.len();
    let labels: Vec<String> = labels.into_iter().collect();
    trainer.add_speakers(&labels)?;
    let added = trainer.speakers.labels()[before..].to_vec();

    let mut manifest = fewshot.with_speaker_map(trainer.speakers.clone())?;
    match (setup.train.replay, replay) {
        (true, Some(r)) => {
            let r = r.with_speaker_map(trainer.speakers.clone())?;
            manifest.utterances.extend(r.utterances);
        }
        (true, None) => return Err(Error::Config("train.replay is on but no replay manifest was given".into())),
        (false, _) => {}
    }
    Ok(FinetunePlan {
        trainer,
        manifest,
        added,
    })
}
