use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use mmtts_tensor::optim::{clip_grad_norm, AdamW, AdamWConfig, Moments};
use mmtts_tensor::{Graph, ParamId, ParamStore};
use ndarray::Array2;

use super::checkpoint::{Checkpoint, OptimizerState};
use super::config::TrainConfig;
use super::dataset::Dataset;
use super::losses::{forward_losses, LossReport, Padding, StepNoise};
use crate::context::ContextExtractorSpec;
use crate::data::{make_batches, Manifest, SpeakerMap};
use crate::frontend::PhonemeVocabulary;
use crate::model::{Model, ModelConfig, DISCRIMINATOR_PREFIX, GENERATOR_PREFIX};
use crate::pipeline::FrontendConfig;
use crate::{Error, Result};

/// Everything that defines a run besides the data.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub frontend: FrontendConfig,
    /// Extractor settings; required iff `model.use_context`.
    pub context: Option<ContextExtractorSpec>,
}

impl RunSetup {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        match (&self.context, self.model.use_context) {
            (Some(spec), true) => {
                spec.validate()?;
                if spec.dim != self.model.context_dim {
                    return Err(Error::Config(format!(
                        "context.dim {} differs from model.context_dim {}",
                        spec.dim, self.model.context_dim
                    )));
                }
                Ok(())
            }
            (None, false) => Ok(()),
            (_, use_context) => Err(Error::ContextPresence { use_context }),
        }
    }
}

pub struct Trainer {
    pub model: Model,
    pub store: ParamStore<f32>,
    pub setup: RunSetup,
    pub vocabulary: PhonemeVocabulary,
    pub speakers: SpeakerMap,
    pub iteration: u64,
    gen_opt: AdamW<f32>,
    disc_opt: AdamW<f32>,
    gen_ids: BTreeSet<ParamId>,
    disc_ids: BTreeSet<ParamId>,
}

/// Where and how often [`Trainer::run`] writes its outputs.
#[derive(Debug, Clone, Default)]
pub struct RunOutputs {
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

fn adam_config(t: &TrainConfig) -> AdamWConfig {
    AdamWConfig {
        beta1: t.betas.0,
        beta2: t.betas.1,
        eps: t.eps,
        weight_decay: t.weight_decay,
    }
}

fn prefixed(store: &ParamStore<f32>, prefix: &str) -> BTreeSet<ParamId> {
    let dotted = format!("{prefix}.");
    store.ids().filter(|&id| store.name(id).starts_with(&dotted)).collect()
}

impl Trainer {
    /// Fresh parameters initialized from `setup.train.seed`.
    pub fn new(setup: RunSetup, vocabulary: PhonemeVocabulary, speakers: SpeakerMap) -> Result<Self> {
        setup.validate()?;
        if speakers.len() != setup.model.n_speakers {
            return Err(Error::Config(format!(
                "model.n_speakers is {} but the corpus has {} speakers",
                setup.model.n_speakers,
                speakers.len()
            )));
        }
        let mut store = ParamStore::new();
        let model = Model::new(&mut store, &setup.model, vocabulary.id_count(), setup.train.seed)?;
        let adam = adam_config(&setup.train);
        Ok(Self {
            gen_ids: prefixed(&store, GENERATOR_PREFIX),
            disc_ids: prefixed(&store, DISCRIMINATOR_PREFIX),
            model,
            store,
            setup,
            vocabulary,
            speakers,
            iteration: 0,
            gen_opt: AdamW::new(adam),
            disc_opt: AdamW::new(adam),
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let setup = RunSetup {
            model: ck.model.clone(),
            train: ck.train.clone(),
            frontend: ck.frontend.clone(),
            context: ck.context.clone(),
        };
        let mut t = Self::new(setup, ck.vocabulary.clone(), ck.speakers.clone())?;
        load_params(&mut t.store, &ck.params)?;
        t.iteration = ck.iteration;
        t.gen_opt.restore(ck.generator_opt.step, moments_by_id(&t.store, &ck.generator_opt)?);
        t.disc_opt.restore(ck.discriminator_opt.step, moments_by_id(&t.store, &ck.discriminator_opt)?);
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let export = |opt: &AdamW<f32>| OptimizerState {
            step: opt.step_count(),
            moments: opt
                .moments()
                .map(|(id, m)| (self.store.name(id).to_string(), (m.m.clone(), m.v.clone())))
                .collect(),
        };
        Checkpoint {
            model: self.model.cfg.clone(),
            train: self.setup.train.clone(),
            frontend: self.setup.frontend.clone(),
            context: self.setup.context.clone(),
            vocabulary: self.vocabulary.clone(),
            speakers: self.speakers.clone(),
            iteration: self.iteration,
            params: self.store.clone(),
            generator_opt: export(&self.gen_opt),
            discriminator_opt: export(&self.disc_opt),
        }
    }

    /// Dataset indices used by micro-batch `k` (counted across iterations).
    pub fn batch_indices(&self, dataset: &Dataset, k: u64) -> Result<Vec<usize>> {
        let lengths = dataset.frame_lengths();
        let bs = self.setup.train.batch_size;
        let per_epoch = lengths.len().div_ceil(bs) as u64;
        let batches = make_batches(&lengths, bs, self.setup.train.seed, k / per_epoch)?;
        Ok(batches[(k % per_epoch) as usize].indices.clone())
    }

    /// One optimizer step: generator update, then discriminator update,
    /// both from gradients of the same forward pass.
    pub fn step(&mut self, dataset: &Dataset, started: Instant) -> Result<LossReport> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let acc = self.setup.train.grad_accumulation;
        let scale = 1.0 / acc as f32;
        let mut gen_grads: BTreeMap<ParamId, Array2<f32>> = BTreeMap::new();
        let mut disc_grads: BTreeMap<ParamId, Array2<f32>> = BTreeMap::new();
        let mut reports = Vec::with_capacity(acc);
        for j in 0..acc {
            let k = self.iteration * acc as u64 + j as u64;
            let idx = self.batch_indices(dataset, k)?;
            let items: Vec<_> = idx.iter().map(|&i| &dataset.items[i]).collect();
            let mut noise = StepNoise::new(self.setup.train.seed, k);
            let mut g = Graph::new(&self.store);
            let vars = forward_losses(&mut g, &self.model, &items, &self.setup.train.weights, &mut noise, Padding::default())?;
            reports.push(vars.report(&g, self.iteration + 1, 0.0)?);
            for (target, loss, ids) in [
                (&mut gen_grads, vars.generator, &self.gen_ids),
                (&mut disc_grads, vars.adversarial_d, &self.disc_ids),
            ] {
                for (id, grad) in g.backward(loss).into_param_grads() {
                    if !ids.contains(&id) {
                        continue;
                    }
                    let grad = grad * scale;
                    match target.get_mut(&id) {
                        Some(sum) => *sum += &grad,
                        None => {
                            target.insert(id, grad);
                        }
                    }
                }
            }
        }
        let lr = self.setup.train.lr_at(self.iteration);
        for (opt, grads) in [(&mut self.gen_opt, gen_grads), (&mut self.disc_opt, disc_grads)] {
            let mut grads: Vec<(ParamId, Array2<f32>)> = grads.into_iter().collect();
            if grads.iter().any(|(_, g)| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteLoss {
                    term: "gradient".into(),
                    iteration: self.iteration + 1,
                });
            }
            if let Some(c) = self.setup.train.grad_clip {
                clip_grad_norm(&mut grads, c);
            }
            opt.step(&mut self.store, &grads, lr);
        }
        self.iteration += 1;
        let n = reports.len() as f64;
        let mean = |f: fn(&LossReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Ok(LossReport {
            iteration: self.iteration,
            total: mean(|r| r.total),
            mel: mean(|r| r.mel),
            kl: mean(|r| r.kl),
            duration: mean(|r| r.duration),
            adversarial_g: mean(|r| r.adversarial_g),
            adversarial_d: mean(|r| r.adversarial_d),
            feature_matching: mean(|r| r.feature_matching),
            wall_time: started.elapsed().as_secs_f64(),
        })
    }

    /// Trains until `iteration == until`, appending one JSON line per step
    /// to the log and checkpointing every `checkpoint_interval` steps and at
    /// the end. On a non-finite loss the last good state is saved before
    /// the error is returned.
    pub fn run(&mut self, dataset: &Dataset, until: u64, outputs: &RunOutputs) -> Result<Vec<LossReport>> {
        let started = Instant::now();
        let mut log = match &outputs.log {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                Some(std::fs::OpenOptions::new().create(true).append(true).open(p)?)
            }
            None => None,
        };
        let mut reports = Vec::new();
        while self.iteration < until {
            let report = match self.step(dataset, started) {
                Ok(r) => r,
                Err(e @ Error::NonFiniteLoss { .. }) => {
                    if let Some(path) = &outputs.checkpoint {
                        log::error!("{e}; saving last good state to {}", path.display());
                        self.checkpoint().save(path)?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            if let Some(f) = log.as_mut() {
                writeln!(f, "{}", serde_json::to_string(&report)?)?;
            }
            log::info!(
                "iter {} total {:.4} mel {:.4} kl {:.4} dur {:.4}",
                report.iteration,
                report.total,
                report.mel,
                report.kl,
                report.duration
            );
            reports.push(report);
            let every = self.setup.train.checkpoint_interval;
            if let Some(path) = &outputs.checkpoint {
                if (every > 0 && self.iteration % every == 0) || self.iteration == until {
                    self.checkpoint().save(path)?;
                }
            }
        }
        Ok(reports)
    }

    /// Speaker-table growth for fine-tuning. Optimizer state is reset since
    /// the table changes shape.
    pub fn add_speakers(&mut self, labels: &[String]) -> Result<()> {
        let added = self.speakers.extend(labels.iter().map(String::as_str));
        if added.is_empty() {
            return Ok(());
        }
        let n = self.model.extend_speakers(&mut self.store, added.len())?;
        self.setup.model.n_speakers = n;
        self.reset_optimizers();
        Ok(())
    }

    pub fn reset_optimizers(&mut self) {
        let adam = adam_config(&self.setup.train);
        self.gen_opt = AdamW::new(adam);
        self.disc_opt = AdamW::new(adam);
    }
}

/// Copies checkpoint parameters into a freshly built store, requiring the
/// same names and shapes.
pub fn load_params(store: &mut ParamStore<f32>, saved: &ParamStore<f32>) -> Result<()> {
    let want: BTreeSet<String> = store.ids().map(|id| store.name(id).to_string()).collect();
    let have: BTreeSet<String> = saved.ids().map(|id| saved.name(id).to_string()).collect();
    if let Some(missing) = want.difference(&have).next() {
        return Err(Error::Checkpoint(format!("missing parameter {missing}")));
    }
    if let Some(extra) = have.difference(&want).next() {
        return Err(Error::Checkpoint(format!("unexpected parameter {extra}")));
    }
    for (name, value) in saved.iter_sorted() {
        store.set(name, value.clone())?;
    }
    Ok(())
}

fn moments_by_id(store: &ParamStore<f32>, state: &OptimizerState) -> Result<Vec<(ParamId, Moments<f32>)>> {
    state
        .moments
        .iter()
        .map(|(name, (m, v))| {
            let id = store
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("optimizer state for unknown parameter {name}")))?;
            if store.value(id).dim() != m.dim() || m.dim() != v.dim() {
                return Err(Error::Checkpoint(format!("optimizer state shape mismatch for {name}")));
            }
            Ok((
                id,
                Moments {
                    m: m.clone(),
                    v: v.clone(),
                },
            ))
        })
        .collect()
}

/// Targets that the few-shot manifest has no utterances for.
pub fn missing_targets(manifest: &Manifest, targets: &[String]) -> Vec<String> {
    let counts = manifest.speaker_counts();
    targets
        .iter()
        .filter(|t| counts.get(t.as_str()).copied().unwrap_or(0) == 0)
        .cloned()
        .collect()
}
