//! Training loop, losses, checkpoints and fine-tuning.

mod checkpoint;
mod config;
mod dataset;
mod finetune;
mod losses;
mod trainer;

pub use checkpoint::{Checkpoint, OptimizerState, FORMAT_VERSION, MAGIC};
pub use config::{LossWeights, TrainConfig};
pub use dataset::{build_vocabulary, load_dataset, phonemize_manifest, Dataset, TrainItem};
pub use finetune::{prepare_finetune, FinetunePlan};
pub use losses::{forward_losses, kl_divergence, mel_l1, KlTerms, LossReport, LossVars, Padding, StepNoise};
pub use trainer::{load_params, missing_targets, RunOutputs, RunSetup, Trainer};
