//! Run configuration.
//!
//! Values are layered: preset defaults, then the TOML file, then
//! `MMTTS__SECTION__KEY` environment variables, then command-line
//! overrides. The merged table must deserialize into [`RunConfig`] with no
//! leftover keys.

use std::path::{Path, PathBuf};

use mmtts::context::ContextExtractorSpec;
use mmtts::model::ModelConfig;
use mmtts::pipeline::FrontendConfig;
use mmtts::train::{RunSetup, TrainConfig};
use mmtts::{Error, Result};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

pub const ENV_PREFIX: &str = "MMTTS__";

/// Which defaults the layers are applied on top of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Full,
    Desk,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Training (or few-shot) corpus manifest.
    pub manifest: Option<PathBuf>,
    /// Spectrogram cache root. No caching when unset.
    pub cache_dir: Option<PathBuf>,
    /// Base-corpus manifest mixed into fine-tuning when `train.replay` is on.
    pub replay_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub frontend: FrontendConfig,
    /// Only read when `model.use_context` is set.
    pub context: ContextExtractorSpec,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (model, train) = match preset {
            Preset::Full => (ModelConfig::default(), TrainConfig::default()),
            Preset::Desk => (ModelConfig::desk(), TrainConfig::desk()),
        };
        let context = ContextExtractorSpec {
            dim: model.context_dim,
            ..ContextExtractorSpec::default()
        };
        Self {
            preset,
            model,
            train,
            data: DataConfig::default(),
            frontend: FrontendConfig::default(),
            context,
        }
    }

    /// Configuration stored in a checkpoint, used as the base layer when a
    /// command gets no config file.
    pub fn from_parts(model: ModelConfig, train: TrainConfig, frontend: FrontendConfig, context: Option<ContextExtractorSpec>) -> Self {
        let context = context.unwrap_or(ContextExtractorSpec {
            dim: model.context_dim,
            ..ContextExtractorSpec::default()
        });
        Self {
            preset: Preset::Full,
            model,
            train,
            data: DataConfig::default(),
            frontend,
            context,
        }
    }

    /// Reads `file` and the process environment, then applies `set`
    /// (`section.key=value` entries, last wins).
    pub fn load(file: Option<&Path>, base: Option<&RunConfig>, set: &[String]) -> Result<Self> {
        let text = match file {
            Some(path) => Some(std::fs::read_to_string(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
                _ => Error::Io(e),
            })?),
            None => None,
        };
        let mut env: Vec<(String, String)> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        env.sort();
        Self::resolve(base, text.as_deref(), &env, set)
    }

    /// Pure layering step behind [`RunConfig::load`].
    ///
    /// The base layer is `base` unless it is `None` or an upper layer sets
    /// `preset`, in which case it is that preset's defaults.
    pub fn resolve(base: Option<&RunConfig>, file: Option<&str>, env: &[(String, String)], set: &[String]) -> Result<Self> {
        let mut layered = match file {
            Some(text) => toml::from_str::<Table>(text).map_err(|e| Error::Config(format!("config file: {e}")))?,
            None => Table::new(),
        };
        for (key, raw) in env {
            let Some(rest) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let path: Vec<String> = rest.split("__").map(str::to_ascii_lowercase).collect();
            insert_path(&mut layered, &path, parse_value(raw), key)?;
        }
        for entry in set {
            let (key, raw) = entry
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{entry}` is not KEY=VALUE")))?;
            let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
            insert_path(&mut layered, &path, parse_value(raw.trim()), key)?;
        }
        let base = match (layered.get("preset"), base) {
            (None, Some(b)) => b.clone(),
            (preset, _) => {
                let p = match preset {
                    Some(v) => v
                        .clone()
                        .try_into::<Preset>()
                        .map_err(|_| Error::Config(format!("unknown preset {v}")))?,
                    None => Preset::default(),
                };
                Self::preset(p)
            }
        };
        let mut merged = Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, layered);
        let cfg: RunConfig = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.model.use_context {
            self.context.validate()?;
        }
        self.setup().validate()
    }

    pub fn setup(&self) -> RunSetup {
        RunSetup {
            model: self.model.clone(),
            train: self.train.clone(),
            frontend: self.frontend.clone(),
            context: self.model.use_context.then(|| self.context.clone()),
        }
    }
}

/// TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn insert_path(table: &mut Table, path: &[String], value: Value, origin: &str) -> Result<()> {
    let (last, parents) = path.split_last().ok_or_else(|| Error::Config(format!("empty key in `{origin}`")))?;
    if path.iter().any(String::is_empty) {
        return Err(Error::Config(format!("empty key segment in `{origin}`")));
    }
    let mut cur = table;
    for p in parents {
        let next = cur.entry(p.clone()).or_insert_with(|| Value::Table(Table::new()));
        cur = match next {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("`{origin}`: `{p}` is not a section"))),
        };
    }
    cur.insert(last.clone(), value);
    Ok(())
}

fn merge(base: &mut Table, overlay: Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_are_the_full_preset() {
        let cfg = RunConfig::resolve(None, None, &[], &[]).unwrap();
        assert_eq!(cfg, RunConfig::preset(Preset::Full));
        assert_eq!(cfg.train.learning_rate, 2e-4);
        assert_eq!(cfg.train.batch_size, 16);
    }

    #[test]
    fn file_then_env_then_flags() {
        let file = "preset = \"desk\"\n[train]\nbatch_size = 3\nlearning_rate = 1e-3\nseed = 1\n";
        let cfg = RunConfig::resolve(None, Some(file), &[], &[]).unwrap();
        assert_eq!(cfg.model, ModelConfig::desk());
        assert_eq!((cfg.train.batch_size, cfg.train.learning_rate, cfg.train.seed), (3, 1e-3, 1));

        let e = env(&[("MMTTS__TRAIN__BATCH_SIZE", "5"), ("MMTTS__TRAIN__SEED", "2")]);
        let cfg = RunConfig::resolve(None, Some(file), &e, &[]).unwrap();
        assert_eq!((cfg.train.batch_size, cfg.train.seed), (5, 2));

        let cfg = RunConfig::resolve(None, Some(file), &e, &["train.seed=9".into()]).unwrap();
        assert_eq!((cfg.train.batch_size, cfg.train.seed), (5, 9));
        assert_eq!(cfg.train.learning_rate, 1e-3);
    }

    #[test]
    fn nested_and_string_values() {
        let e = env(&[("MMTTS__TRAIN__WEIGHTS__MEL", "10"), ("MMTTS__DATA__MANIFEST", "corpus/m.jsonl")]);
        let cfg = RunConfig::resolve(None, None, &e, &["frontend.backend=espeak".into()]).unwrap();
        assert_eq!(cfg.train.weights.mel, 10.0);
        assert_eq!(cfg.data.manifest, Some(PathBuf::from("corpus/m.jsonl")));
        assert_eq!(cfg.frontend.backend, mmtts::pipeline::BackendKind::Espeak);
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_layer() {
        for (file, env_pairs, set) in [
            ("[train]\nbatchsize = 3\n", vec![], vec![]),
            ("[trian]\nbatch_size = 3\n", vec![], vec![]),
            ("", vec![("MMTTS__MODEL__HIDDEN", "3")], vec![]),
            ("", vec![], vec!["data.manifests=x".to_string()]),
        ] {
            let err = RunConfig::resolve(None, Some(file), &env(&env_pairs), &set).unwrap_err();
            assert_eq!(err.kind(), "config", "{err}");
        }
    }

    #[test]
    fn invalid_values_fail_validation() {
        let err = RunConfig::resolve(None, None, &[], &["train.batch_size=0".into()]).unwrap_err();
        assert_eq!(err.kind(), "config");
        let err = RunConfig::resolve(None, None, &[], &["train.batch_size=\"four\"".into()]).unwrap_err();
        assert_eq!(err.kind(), "config");
        let err = RunConfig::resolve(None, None, &[], &["model.use_context=true".into(), "context.dim=5".into()]).unwrap_err();
        assert_eq!(err.kind(), "config", "{err}");
        let err = RunConfig::resolve(None, None, &[], &["preset=huge".into()]).unwrap_err();
        assert_eq!(err.kind(), "config");
    }

    #[test]
    fn explicit_base_is_kept_unless_a_preset_is_named() {
        let mut base = RunConfig::preset(Preset::Desk);
        base.train.seed = 77;
        let cfg = RunConfig::resolve(Some(&base), None, &[], &["train.batch_size=2".into()]).unwrap();
        assert_eq!((cfg.train.seed, cfg.train.batch_size), (77, 2));
        let cfg = RunConfig::resolve(Some(&base), None, &[], &["preset=full".into()]).unwrap();
        assert_eq!(cfg, RunConfig::preset(Preset::Full));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::preset(Preset::Desk);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::resolve(None, Some(&text), &[], &[]).unwrap(), cfg);
    }
}
