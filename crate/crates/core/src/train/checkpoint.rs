//! Single-file checkpoints.
//!
//! Layout: 8-byte magic, little-endian `u64` header length, a JSON header,
//! then every tensor as raw little-endian `f32` in header order. Tensors
//! are sorted by name and the header has no maps, so saving the same state
//! twice gives identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use mmtts_tensor::ParamStore;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::context::ContextExtractorSpec;
use crate::data::SpeakerMap;
use crate::frontend::PhonemeVocabulary;
use crate::model::ModelConfig;
use crate::pipeline::FrontendConfig;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MMTTSCK1";
pub const FORMAT_VERSION: u32 = 1;

/// Adam moments keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub moments: BTreeMap<String, (Array2<f32>, Array2<f32>)>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub frontend: FrontendConfig,
    pub context: Option<ContextExtractorSpec>,
    pub vocabulary: PhonemeVocabulary,
    pub speakers: SpeakerMap,
    pub iteration: u64,
    pub params: ParamStore<f32>,
    pub generator_opt: OptimizerState,
    pub discriminator_opt: OptimizerState,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    train: TrainConfig,
    frontend: FrontendConfig,
    context: Option<ContextExtractorSpec>,
    vocabulary_tsv: String,
    vocabulary_hash: String,
    speakers: SpeakerMap,
    iteration: u64,
    generator_step: u64,
    discriminator_step: u64,
    tensors: Vec<TensorEntry>,
}

const PARAM: &str = "param/";
const GEN_M: &str = "opt.gen.m/";
const GEN_V: &str = "opt.gen.v/";
const DISC_M: &str = "opt.disc.m/";
const DISC_V: &str = "opt.disc.v/";

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    fn tensors(&self) -> Vec<(String, &Array2<f32>)> {
        let mut out: Vec<(String, &Array2<f32>)> = self.params.iter_sorted().map(|(n, v)| (format!("{PARAM}{n}"), v)).collect();
        for (opt, m_prefix, v_prefix) in [
            (&self.generator_opt, GEN_M, GEN_V),
            (&self.discriminator_opt, DISC_M, DISC_V),
        ] {
            for (name, (m, v)) in &opt.moments {
                out.push((format!("{m_prefix}{name}"), m));
                out.push((format!("{v_prefix}{name}"), v));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self.tensors();
        let header = Header {
            format_version: FORMAT_VERSION,
            model: self.model.clone(),
            train: self.train.clone(),
            frontend: self.frontend.clone(),
            context: self.context.clone(),
            vocabulary_tsv: self.vocabulary.to_tsv(),
            vocabulary_hash: self.vocabulary.hash(),
            speakers: self.speakers.clone(),
            iteration: self.iteration,
            generator_step: self.generator_opt.step,
            discriminator_step: self.discriminator_opt.step,
            tensors: tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    rows: t.nrows(),
                    cols: t.ncols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let body: usize = tensors.iter().map(|(_, t)| t.len() * 4).sum();
        let mut out = Vec::with_capacity(16 + json.len() + body);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &tensors {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let json = bytes.get(16..16 + len).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| bad(format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", header.format_version)));
        }
        let vocabulary = PhonemeVocabulary::from_tsv(&header.vocabulary_tsv)?;
        if vocabulary.hash() != header.vocabulary_hash {
            return Err(bad("vocabulary hash does not match its table"));
        }
        let mut offset = 16 + len;
        let mut params = ParamStore::new();
        let mut gen = OptimizerState {
            step: header.generator_step,
            ..Default::default()
        };
        let mut disc = OptimizerState {
            step: header.discriminator_step,
            ..Default::default()
        };
        let mut pending: BTreeMap<String, Array2<f32>> = BTreeMap::new();
        for entry in &header.tensors {
            let n = entry.rows * entry.cols;
            let raw = bytes.get(offset..offset + 4 * n).ok_or_else(|| bad(format!("truncated tensor {}", entry.name)))?;
            offset += 4 * n;
            let values = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            let arr = Array2::from_shape_vec((entry.rows, entry.cols), values).map_err(|e| bad(e.to_string()))?;
            if let Some(name) = entry.name.strip_prefix(PARAM) {
                params.insert(name, arr);
            } else {
                pending.insert(entry.name.clone(), arr);
            }
        }
        if offset != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - offset)));
        }
        for (state, m_prefix, v_prefix) in [(&mut gen, GEN_M, GEN_V), (&mut disc, DISC_M, DISC_V)] {
            let names: Vec<String> = pending.keys().filter_map(|k| k.strip_prefix(m_prefix)).map(str::to_string).collect();
            for name in names {
                let m = pending.remove(&format!("{m_prefix}{name}")).unwrap();
                let v = pending
                    .remove(&format!("{v_prefix}{name}"))
                    .ok_or_else(|| bad(format!("missing second moment for {name}")))?;
                state.moments.insert(name, (m, v));
            }
        }
        if let Some(k) = pending.keys().next() {
            return Err(bad(format!("unrecognized tensor {k}")));
        }
        Ok(Self {
            model: header.model,
            train: header.train,
            frontend: header.frontend,
            context: header.context,
            vocabulary,
            speakers: header.speakers,
            iteration: header.iteration,
            params,
            generator_opt: gen,
            discriminator_opt: disc,
        })
    }

    /// Writes to a temporary sibling, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        std::fs::write(&tmp, self.to_bytes()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Architecture fields that must agree for weights to be reusable.
    /// Speaker count and inference noise settings may differ.
    pub fn check_compatible(&self, cfg: &ModelConfig) -> Result<()> {
        let normalize = |c: &ModelConfig| ModelConfig {
            n_speakers: 0,
            noise_scale: 0.0,
            noise_scale_w: 0.0,
            length_scale: 1.0,
            segment_frames: 1,
            ..c.clone()
        };
        if normalize(&self.model) != normalize(cfg) {
            let a = serde_json::to_value(normalize(&self.model))?;
            let b = serde_json::to_value(normalize(cfg))?;
            let differing: Vec<String> = match (a, b) {
                (serde_json::Value::Object(a), serde_json::Value::Object(b)) => {
                    a.iter().filter(|(k, v)| b.get(*k) != Some(v)).map(|(k, _)| k.clone()).collect()
                }
                _ => Vec::new(),
            };
            return Err(Error::ConfigIncompatible(format!(
                "checkpoint model differs in: {}",
                differing.join(", ")
            )));
        }
        Ok(())
    }
}
