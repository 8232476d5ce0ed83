//! The shipped config files resolve to the intended runs.

use std::path::PathBuf;

use mmtts::context::ExtractorKind;
use mmtts_cli::{Preset, RunConfig};

fn config(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn resolve(name: &str, base: Option<&RunConfig>) -> RunConfig {
    RunConfig::resolve(base, Some(&config(name)), &[], &[]).unwrap()
}

#[test]
fn desk_file_spells_out_the_desk_preset() {
    assert_eq!(resolve("desk.cfg", None), RunConfig::preset(Preset::Desk));
}

#[test]
fn track1_trains_without_context() {
    let cfg = resolve("track1.cfg", None);
    assert_eq!(cfg.preset, Preset::Full);
    assert!(!cfg.model.use_context);
    assert_eq!(cfg.train.learning_rate, 2e-4);
    assert_eq!(cfg.train.batch_size, 16);
    assert_eq!(cfg.train.max_iterations, 136_000);
    assert!(cfg.setup().context.is_none());
}

#[test]
fn track2_differs_from_track1_only_in_context() {
    let t1 = resolve("track1.cfg", None);
    let t2 = resolve("track2.cfg", None);
    assert!(t2.model.use_context);
    assert_eq!(t2.model.context_dim, 768);
    assert_eq!((t2.context.kind, t2.context.dim), (ExtractorKind::Stub, 768));
    assert_eq!(t2.setup().context.unwrap().dim, 768);
    let mut t2_model = t2.model.clone();
    t2_model.use_context = false;
    t2_model.context_dim = t1.model.context_dim;
    assert_eq!(t2_model, t1.model);
    assert_eq!(t2.train, t1.train);
}

#[test]
fn finetune_file_keeps_the_base_model() {
    let mut base = RunConfig::preset(Preset::Desk);
    base.model.n_speakers = 14;
    let cfg = resolve("finetune.cfg", Some(&base));
    assert_eq!(cfg.model, base.model);
    assert_eq!(cfg.frontend, base.frontend);
    assert_eq!(cfg.train.learning_rate, 2e-4);
    assert_eq!(cfg.train.batch_size, 16);
    assert_eq!(cfg.train.max_iterations, 50_000);
    assert_eq!(cfg.train.seed, base.train.seed);
}

#[test]
fn command_line_overrides_win_over_the_file() {
    let env = vec![("MMTTS__TRAIN__BATCH_SIZE".to_string(), "8".to_string())];
    let set = vec!["train.batch_size=2".to_string()];
    let cfg = RunConfig::resolve(None, Some(&config("desk.cfg")), &env, &set).unwrap();
    assert_eq!(cfg.train.batch_size, 2);
    let cfg = RunConfig::resolve(None, Some(&config("desk.cfg")), &env, &[]).unwrap();
    assert_eq!(cfg.train.batch_size, 8);
}
