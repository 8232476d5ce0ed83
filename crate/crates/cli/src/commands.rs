use std::path::{Path, PathBuf};

use clap::Args;
use mmtts::data::wav::{encode_wav, parse_wav, resample, write_wav};
use mmtts::data::{
    generate_fewshot_corpus, generate_synthetic_corpus, load_manifest, write_manifest, FewShotOptions, Manifest,
    SpectrogramCache, SpectrogramExtractor, SyntheticOptions, Utterance,
};
use mmtts::model::SynthesisNoise;
use mmtts::pipeline::{Synthesizer, TextFrontend};
use mmtts::train::{build_vocabulary, load_dataset, prepare_finetune, Checkpoint, RunOutputs, Trainer};
use mmtts::Error;
use serde::Serialize;

use crate::config::RunConfig;
use crate::verify::{run_suite, Suite};
use crate::{CliError, CliResult, Command, Common};

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Phonemize(a) => phonemize(a),
        Command::Prepare(a) => prepare(a),
        Command::Train(a) => train(a),
        Command::Finetune(a) => finetune(a),
        Command::Synth(a) => synth(a),
        Command::Verify(a) => verify(a),
        Command::GenerateCorpus(a) => generate_corpus(a),
    }
}

/// `key=<quoted path>` for a config override.
fn path_override(key: &str, path: &Path) -> String {
    format!("{key}={}", toml::Value::String(path.to_string_lossy().into_owned()))
}

impl Common {
    /// `--set` entries, then the dedicated flags, which win.
    fn overrides(&self, extra: Vec<String>) -> Vec<String> {
        let mut out = self.set.clone();
        out.extend(extra);
        if let Some(seed) = self.seed {
            out.push(format!("train.seed={seed}"));
        }
        out
    }

    fn load(&self, base: Option<&RunConfig>, extra: Vec<String>) -> CliResult<RunConfig> {
        Ok(RunConfig::load(self.config.as_deref(), base, &self.overrides(extra))?)
    }
}

fn required(value: Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    value.ok_or_else(|| CliError::Usage(format!("{what} is required")))
}

fn open_cache(cfg: &RunConfig) -> CliResult<Option<SpectrogramCache>> {
    Ok(match &cfg.data.cache_dir {
        Some(dir) => Some(SpectrogramCache::open(dir, &cfg.model.audio())?),
        None => None,
    })
}

/// `<checkpoint>.log.jsonl` unless given.
fn log_path(log: Option<PathBuf>, out: &Path) -> PathBuf {
    log.unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".log.jsonl");
        PathBuf::from(p)
    })
}

fn remove_if_exists(path: &Path) -> CliResult<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
        _ => Ok(()),
    }
}

#[derive(Debug, Args)]
pub struct PhonemizeArgs {
    #[arg(long)]
    pub text: String,
    /// Language code, e.g. `hindi` or `chhattisgarhi`.
    #[arg(long)]
    pub lang: String,
    /// Print the sequence as JSON instead of `word | word` text.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub common: Common,
}

fn phonemize(a: PhonemizeArgs) -> CliResult<()> {
    let cfg = a.common.load(None, Vec::new())?;
    let fe = TextFrontend::new(&cfg.frontend, None)?;
    let (tag, seq) = fe.phonemize(&a.text, &a.lang)?;
    if a.json {
        let v = serde_json::json!({
            "language": tag.code.code(),
            "phonemizer": tag.backend_code.code(),
            "phonemes": seq.phonemes,
            "word_spans": seq.word_spans,
        });
        println!("{v}");
    } else {
        let mut start = 0;
        let words: Vec<String> = seq
            .word_spans
            .iter()
            .map(|s| {
                let w = seq.phonemes[start..start + s.len].join(" ");
                start += s.len;
                w
            })
            .collect();
        println!("{}", words.join(" | "));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Corpus manifest (overrides `data.manifest`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Cache root (overrides `data.cache_dir`). Defaults to `cache/` next to
    /// the manifest.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Resample audio at the wrong rate into the cache and write a manifest
    /// pointing at the resampled files.
    #[arg(long)]
    pub resample: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Serialize)]
struct Issue {
    id: String,
    kind: &'static str,
    message: String,
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    manifest: PathBuf,
    cache_dir: PathBuf,
    utterances: usize,
    cached: usize,
    resampled: usize,
    /// Manifest to train from when files were resampled.
    prepared_manifest: Option<PathBuf>,
    errors: Vec<Issue>,
}

struct Prepared {
    resampled_to: Option<PathBuf>,
}

fn prepare_one(
    u: &Utterance,
    fe: &TextFrontend,
    extractor: &SpectrogramExtractor,
    cache: &SpectrogramCache,
    resample_dir: Option<&Path>,
) -> mmtts::Result<Prepared> {
    let mut bytes = std::fs::read(&u.audio_path).map_err(|_| Error::MissingFile(u.audio_path.clone()))?;
    let mut wav = parse_wav(&bytes)?;
    let sr = extractor.config().sample_rate;
    let mut resampled_to = None;
    if wav.sample_rate != sr {
        let Some(dir) = resample_dir else {
            return Err(Error::SampleRateMismatch {
                expected: sr,
                found: wav.sample_rate,
            });
        };
        bytes = encode_wav(&resample(&wav.samples, wav.sample_rate, sr), sr);
        wav = parse_wav(&bytes)?;
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.wav", u.id));
        std::fs::write(&path, &bytes)?;
        resampled_to = Some(path);
    }
    let (_, seq) = fe.phonemize(&u.text, u.language.code())?;
    let key = cache.key(&bytes);
    let frames = match cache.get(&key)? {
        Some(spec) => spec.nrows(),
        None => {
            let spec = extractor.linear(&wav.samples)?;
            cache.put(&key, &spec)?;
            spec.nrows()
        }
    };
    if frames < seq.len() {
        return Err(Error::Infeasible {
            phonemes: seq.len(),
            frames,
        });
    }
    Ok(Prepared { resampled_to })
}

fn prepare(a: PrepareArgs) -> CliResult<()> {
    let mut extra = Vec::new();
    if let Some(m) = &a.manifest {
        extra.push(path_override("data.manifest", m));
    }
    if let Some(c) = &a.cache_dir {
        extra.push(path_override("data.cache_dir", c));
    }
    let cfg = a.common.load(None, extra)?;
    let manifest_path = required(cfg.data.manifest.clone(), "--manifest (or data.manifest)")?;
    let manifest = load_manifest(&manifest_path)?;
    let cache_root = cfg.data.cache_dir.clone().unwrap_or_else(|| {
        manifest_path.parent().unwrap_or(Path::new(".")).join("cache")
    });
    let cache = SpectrogramCache::open(&cache_root, &cfg.model.audio())?;
    let extractor = SpectrogramExtractor::new(&cfg.model.audio())?;
    let fe = TextFrontend::new(&cfg.frontend, None)?;
    let resample_dir = a.resample.then(|| cache_root.join("resampled"));

    let mut errors = Vec::new();
    let mut prepared = manifest.utterances.clone();
    let mut resampled = 0;
    for (u, out) in manifest.utterances.iter().zip(prepared.iter_mut()) {
        match prepare_one(u, &fe, &extractor, &cache, resample_dir.as_deref()) {
            Ok(p) => {
                if let Some(path) = p.resampled_to {
                    out.audio_path = std::path::absolute(path)?;
                    resampled += 1;
                }
            }
            Err(e) => errors.push(Issue {
                id: u.id.clone(),
                kind: e.kind(),
                message: e.to_string(),
            }),
        }
    }
    let prepared_manifest = if resampled > 0 {
        let path = cache_root.join("manifest.jsonl");
        write_manifest(&path, &prepared)?;
        Some(path)
    } else {
        None
    };
    let report = ValidationReport {
        manifest: manifest_path,
        cache_dir: cache.dir().to_path_buf(),
        utterances: manifest.utterances.len(),
        cached: cache.len()?,
        resampled,
        prepared_manifest: prepared_manifest.clone(),
        errors,
    };
    let report_path = cache_root.join("validation_report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    println!(
        "{} utterances, {} cached spectrograms, {} resampled, {} errors",
        report.utterances,
        report.cached,
        report.resampled,
        report.errors.len()
    );
    if let Some(p) = &prepared_manifest {
        println!("train from {}", p.display());
    }
    println!("report: {}", report_path.display());
    if !report.errors.is_empty() {
        return Err(CliError::Failed {
            kind: "validation-failed",
            message: format!(
                "{} of {} utterances failed validation; see {}",
                report.errors.len(),
                report.utterances,
                report_path.display()
            ),
        });
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus manifest (overrides `data.manifest`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Spectrogram cache root (overrides `data.cache_dir`).
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON-lines loss log. Defaults to `<out>.log.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Train until this iteration (overrides `train.max_iterations`).
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Continue from this checkpoint; its configuration is the base layer.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

fn data_overrides(manifest: &Option<PathBuf>, cache_dir: &Option<PathBuf>, iterations: Option<u64>) -> Vec<String> {
    let mut extra = Vec::new();
    if let Some(m) = manifest {
        extra.push(path_override("data.manifest", m));
    }
    if let Some(c) = cache_dir {
        extra.push(path_override("data.cache_dir", c));
    }
    if let Some(n) = iterations {
        extra.push(format!("train.max_iterations={n}"));
    }
    extra
}

fn checkpoint_config(ck: &Checkpoint) -> RunConfig {
    RunConfig::from_parts(ck.model.clone(), ck.train.clone(), ck.frontend.clone(), ck.context.clone())
}

fn train(a: TrainArgs) -> CliResult<()> {
    let extra = data_overrides(&a.manifest, &a.cache_dir, a.iterations);
    let resumed = a.resume.as_deref().map(Checkpoint::load).transpose()?;
    let base = resumed.as_ref().map(checkpoint_config);
    let cfg = a.common.load(base.as_ref(), extra)?;
    let manifest = load_manifest(&required(cfg.data.manifest.clone(), "--manifest (or data.manifest)")?)?;
    let log = log_path(a.log, &a.out);

    let mut trainer = match resumed {
        Some(ck) => {
            ck.check_compatible(&cfg.model)?;
            if ck.speakers != manifest.speakers {
                return Err(Error::ConfigIncompatible("manifest speakers differ from the checkpoint's".into()).into());
            }
            let mut t = Trainer::from_checkpoint(ck)?;
            t.setup.train = cfg.train.clone();
            t
        }
        None => {
            remove_if_exists(&log)?;
            let mut setup = cfg.setup();
            if setup.model.n_speakers != manifest.speakers.len() {
                log::info!(
                    "model.n_speakers set to {} from the manifest",
                    manifest.speakers.len()
                );
                setup.model.n_speakers = manifest.speakers.len();
            }
            let fe = TextFrontend::new(&setup.frontend, None)?;
            let vocab = build_vocabulary(&manifest, &fe)?;
            Trainer::new(setup, vocab, manifest.speakers.clone())?
        }
    };
    let mut fe = TextFrontend::new(&trainer.setup.frontend, trainer.setup.context.as_ref())?;
    let cache = open_cache(&cfg)?;
    let dataset = load_dataset(&manifest, &mut fe, &trainer.vocabulary, &trainer.setup.model, cache.as_ref())?;
    let outputs = RunOutputs {
        checkpoint: Some(a.out.clone()),
        log: Some(log.clone()),
    };
    let reports = trainer.run(&dataset, cfg.train.max_iterations, &outputs)?;
    match reports.last() {
        Some(r) => println!(
            "iteration {}: total {:.4} mel {:.4}; checkpoint {}; log {}",
            r.iteration,
            r.total,
            r.mel,
            a.out.display(),
            log.display()
        ),
        None => println!("already at iteration {}; nothing to do", trainer.iteration),
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Trained model to extend.
    #[arg(long, required = true)]
    pub base_checkpoint: PathBuf,
    /// Few-shot manifest of the new speakers (overrides `data.manifest`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Comma-separated target speaker labels. Defaults to every speaker in
    /// the few-shot manifest.
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    /// Base-corpus manifest for replay (overrides `data.replay_manifest`).
    #[arg(long)]
    pub replay_manifest: Option<PathBuf>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

fn finetune(a: FinetuneArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&a.base_checkpoint)?;
    let mut extra = data_overrides(&a.manifest, &a.cache_dir, a.iterations);
    if let Some(r) = &a.replay_manifest {
        extra.push(path_override("data.replay_manifest", r));
    }
    let cfg = a.common.load(Some(&checkpoint_config(&ck)), extra)?;
    let fewshot = load_manifest(&required(cfg.data.manifest.clone(), "--manifest (or data.manifest)")?)?;
    let targets = if a.targets.is_empty() {
        fewshot.speakers.labels().to_vec()
    } else {
        a.targets.clone()
    };
    let replay: Option<Manifest> = cfg.data.replay_manifest.as_deref().map(load_manifest).transpose()?;
    let mut plan = prepare_finetune(ck, &cfg.setup(), fewshot, &targets, replay)?;
    println!(
        "added {} speaker(s): {}; speaker table now has {} rows",
        plan.added.len(),
        plan.added.join(", "),
        plan.trainer.speakers.len()
    );
    let mut fe = TextFrontend::new(&plan.trainer.setup.frontend, plan.trainer.setup.context.as_ref())?;
    let cache = open_cache(&cfg)?;
    let trainer = &mut plan.trainer;
    let dataset = load_dataset(&plan.manifest, &mut fe, &trainer.vocabulary, &trainer.setup.model, cache.as_ref())?;
    let log = log_path(a.log, &a.out);
    remove_if_exists(&log)?;
    let outputs = RunOutputs {
        checkpoint: Some(a.out.clone()),
        log: Some(log.clone()),
    };
    let reports = trainer.run(&dataset, cfg.train.max_iterations, &outputs)?;
    if reports.is_empty() {
        trainer.checkpoint().save(&a.out)?;
    }
    println!(
        "fine-tuned {} iteration(s); checkpoint {}; log {}",
        reports.len(),
        a.out.display(),
        log.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub text: String,
    /// Language code of the text.
    #[arg(long)]
    pub lang: String,
    /// Speaker label from the training manifests.
    #[arg(long)]
    pub speaker: String,
    /// WAV file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    #[arg(long)]
    pub noise_scale_w: Option<f64>,
    #[arg(long)]
    pub length_scale: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let mut extra = Vec::new();
    for (key, v) in [
        ("model.noise_scale", a.noise_scale),
        ("model.noise_scale_w", a.noise_scale_w),
        ("model.length_scale", a.length_scale),
    ] {
        if let Some(v) = v {
            extra.push(format!("{key}={}", toml::Value::Float(v)));
        }
    }
    let cfg = a.common.load(Some(&checkpoint_config(&ck)), extra)?;
    ck.check_compatible(&cfg.model)?;
    let noise = SynthesisNoise {
        seed: cfg.train.seed,
        ..SynthesisNoise::from_config(&cfg.model, 0)
    };
    let mut synth = Synthesizer::from_checkpoint(&ck)?;
    let out = synth.synthesize(&a.text, &a.lang, &a.speaker, noise)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_wav(&a.out, &out.waveform, synth.sample_rate())?;
    let frames: usize = out.durations.iter().sum();
    println!(
        "wrote {} samples ({:.2} s, {} frames x hop {}) to {}",
        out.waveform.len(),
        out.waveform.len() as f64 / synth.sample_rate() as f64,
        frames,
        synth.model.hop(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum, default_value = "all")]
    pub suite: Suite,
    /// Fewer random cases per check.
    #[arg(long)]
    pub quick: bool,
    #[command(flatten)]
    pub common: Common,
}

fn verify(a: VerifyArgs) -> CliResult<()> {
    let cfg = a.common.load(None, Vec::new())?;
    let checks = run_suite(a.suite, a.quick, cfg.train.seed);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    println!("{} of {} checks passed", checks.len() - failed.len(), checks.len());
    if !failed.is_empty() {
        return Err(CliError::Failed {
            kind: "verification-failed",
            message: format!("failed: {}", failed.join(", ")),
        });
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct GenerateCorpusArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub speakers_per_language: usize,
    #[arg(long, default_value_t = 3)]
    pub utterances_per_speaker: usize,
    /// Write a few-shot corpus of this many new target speakers instead.
    #[arg(long)]
    pub fewshot_targets: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

fn generate_corpus(a: GenerateCorpusArgs) -> CliResult<()> {
    let cfg = a.common.load(None, Vec::new())?;
    let seed = cfg.train.seed;
    let sample_rate = cfg.model.sample_rate;
    let path = match a.fewshot_targets {
        Some(targets) => generate_fewshot_corpus(
            &a.out,
            seed,
            &FewShotOptions {
                targets,
                utterances_per_speaker: a.utterances_per_speaker,
                sample_rate,
            },
        )?,
        None => generate_synthetic_corpus(
            &a.out,
            seed,
            &SyntheticOptions {
                speakers_per_language: a.speakers_per_language,
                utterances_per_speaker: a.utterances_per_speaker,
                sample_rate,
            },
        )?,
    };
    let m = load_manifest(&path)?;
    println!(
        "{} utterances, {} speakers, {} languages; manifest {}",
        m.utterances.len(),
        m.speakers.len(),
        m.languages().len(),
        path.display()
    );
    Ok(())
}
