//! Invariant suites behind `mmtts verify`.

use std::time::{Duration, Instant};

use mmtts::align::{brute_force_align, mas, mas_batch_reference, BatchedLoglik, MasBackend};
use mmtts::context::{replicate_to_phonemes, ContextFeatures, FeatureLevel};
use mmtts::data::{generate_synthetic_corpus, load_manifest, SyntheticOptions};
use mmtts::frontend::{PhonemeSequence, WordSpan};
use mmtts::model::{Model, ModelConfig, TextItem};
use mmtts::pipeline::{FrontendConfig, TextFrontend};
use mmtts::train::{build_vocabulary, forward_losses, load_dataset, LossWeights, Padding, RunSetup, StepNoise, TrainConfig, Trainer};
use mmtts_tensor::{Graph, ParamStore};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Mas,
    Flow,
    Replication,
    Padding,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, failure: Option<String>, detail: String) -> Self {
        match failure {
            Some(why) => Self {
                name,
                passed: false,
                detail: why,
            },
            None => Self {
                name,
                passed: true,
                detail,
            },
        }
    }

    /// An error while setting up a check counts as a failure.
    fn from_result(name: &'static str, r: mmtts::Result<Check>) -> Self {
        r.unwrap_or_else(|e| Self {
            name,
            passed: false,
            detail: format!("{}: {e}", e.kind()),
        })
    }
}

pub fn run_suite(suite: Suite, quick: bool, seed: u64) -> Vec<Check> {
    let scale = |full: usize, q: usize| if quick { q } else { full };
    let mut out = Vec::new();
    if matches!(suite, Suite::Mas | Suite::All) {
        out.push(Check::from_result("mas-oracle", mas_oracle(seed, scale(500, 100))));
        out.push(Check::from_result("mas-shift-invariance", mas_shift_invariance(seed, scale(500, 100))));
        out.push(Check::from_result("mas-batch-backend", mas_batch_backend(seed, scale(200, 50))));
    }
    if matches!(suite, Suite::Flow | Suite::All) {
        out.push(Check::from_result("flow-round-trip", flow_round_trip(seed, scale(100, 100))));
    }
    if matches!(suite, Suite::Replication | Suite::All) {
        out.push(Check::from_result("replication", replication(seed, scale(5000, 1000))));
    }
    if matches!(suite, Suite::Padding | Suite::All) {
        out.push(Check::from_result("padding-encode-text", padding_encode_text(seed)));
        out.push(Check::from_result("padding-losses", padding_losses(seed)));
    }
    out
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f32, hi: f32) -> Array2<f32> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

/// MAS against exhaustive search on small random instances.
pub fn mas_oracle(seed: u64, n: usize) -> mmtts::Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    let mut failure = None;
    for case in 0..n {
        let p = rng.random_range(1..=5);
        let f = rng.random_range(p..=8);
        let l = uniform(&mut rng, p, f, -10.0, 0.0);
        let a = mas(l.view(), p, f)?;
        let b = brute_force_align(l.view())?;
        if a != b || a.total(l.view()) != b.total(l.view()) {
            failure = Some(format!("case {case} ({p}x{f}): {:?} vs {:?}", a.assignment, b.assignment));
            break;
        }
    }
    let elapsed = start.elapsed();
    if failure.is_none() && elapsed > Duration::from_secs(10) {
        failure = Some(format!("took {elapsed:.1?}, limit 10 s"));
    }
    Ok(Check::new("mas-oracle", failure, format!("{n} instances identical in {elapsed:.1?}")))
}

/// Adding a constant to every log-likelihood leaves the path unchanged.
/// Entries are multiples of 1/64 so every sum is exact in `f32`.
pub fn mas_shift_invariance(seed: u64, n: usize) -> mmtts::Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5417);
    let mut failure = None;
    for case in 0..n {
        let p = rng.random_range(1..=12);
        let f = rng.random_range(p..=40);
        let l = Array2::from_shape_fn((p, f), |_| rng.random_range(-640i32..0) as f32 / 64.0);
        let c = rng.random_range(-20i32..=20) as f32;
        let a = mas(l.view(), p, f)?;
        let b = mas(l.mapv(|v| v + c).view(), p, f)?;
        if a != b {
            failure = Some(format!("case {case} ({p}x{f}, c = {c}) changed the path"));
            break;
        }
    }
    Ok(Check::new("mas-shift-invariance", failure, format!("{n} shifted instances unchanged")))
}

/// Whichever batch backend was detected agrees with the reference.
pub fn mas_batch_backend(seed: u64, n: usize) -> mmtts::Result<Check> {
    let backend = MasBackend::detect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xba7c);
    let mut failure = None;
    for case in 0..n {
        let items: Vec<Array2<f32>> = (0..rng.random_range(1..=4))
            .map(|_| {
                let p = rng.random_range(1..=16);
                let f = rng.random_range(p..=48);
                uniform(&mut rng, p, f, -10.0, 0.0)
            })
            .collect();
        let views: Vec<_> = items.iter().map(|m| m.view()).collect();
        let batch = BatchedLoglik::from_items(&views)?;
        if backend.run(&batch)? != mas_batch_reference(&batch)? {
            failure = Some(format!("case {case} differs"));
            break;
        }
    }
    Ok(Check::new("mas-batch-backend", failure, format!("{n} batches equal on backend {}", backend.name())))
}

fn flow_config() -> ModelConfig {
    ModelConfig {
        hidden_dim: 16,
        filter_dim: 32,
        n_encoder_blocks: 1,
        n_speakers: 4,
        ..ModelConfig::desk()
    }
}

/// Forward then inverse flow on random 40x16 latents with perturbed
/// (non-identity) coupling outputs.
pub fn flow_round_trip(seed: u64, n: usize) -> mmtts::Result<Check> {
    let cfg = flow_config();
    let mut store = ParamStore::<f32>::new();
    let model = Model::new(&mut store, &cfg, 10, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf10);
    for id in store.ids_with_prefix("gen.flow").collect::<Vec<_>>() {
        if store.name(id).contains(".post.") {
            store.value_mut(id).mapv_inplace(|_| rng.random_range(-0.1..0.1));
        }
    }
    let start = Instant::now();
    let mut worst = 0.0f32;
    let mut moved = 0.0f32;
    for case in 0..n {
        let z = uniform(&mut rng, 40, 16, -2.0, 2.0);
        let speaker = case % cfg.n_speakers;
        let y = model.flow_eval(&store, &z, speaker, false)?;
        let back = model.flow_eval(&store, &y, speaker, true)?;
        worst = worst.max((&back - &z).iter().fold(0.0f32, |m, v| m.max(v.abs())));
        moved = moved.max((&y - &z).iter().fold(0.0f32, |m, v| m.max(v.abs())));
    }
    let elapsed = start.elapsed();
    let failure = if !(worst <= 1e-4) {
        Some(format!("max round-trip error {worst:e} > 1e-4"))
    } else if moved == 0.0 {
        Some("flow is the identity; check is vacuous".into())
    } else if elapsed > Duration::from_secs(30) {
        Some(format!("took {elapsed:.1?}, limit 30 s"))
    } else {
        None
    };
    Ok(Check::new(
        "flow-round-trip",
        failure,
        format!("{n} latents, max error {worst:e}, {elapsed:.1?}"),
    ))
}

/// Every phoneme row equals the row of the word that owns it.
pub fn replication(seed: u64, n: usize) -> mmtts::Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4e9);
    let mut failure = None;
    for case in 0..n {
        let words = rng.random_range(1..=12);
        let lens: Vec<usize> = (0..words).map(|_| rng.random_range(1..=6)).collect();
        let total: usize = lens.iter().sum();
        let seq = PhonemeSequence {
            phonemes: vec!["a".into(); total],
            ids: Vec::new(),
            word_spans: lens.iter().enumerate().map(|(i, &len)| WordSpan { word_index: i, len }).collect(),
        };
        let dim = rng.random_range(1..=8);
        let feats = ContextFeatures {
            level: FeatureLevel::Word,
            matrix: uniform(&mut rng, words, dim, -1.0, 1.0),
        };
        let out = replicate_to_phonemes(&feats, &seq)?;
        let mut row = 0;
        let mut ok = out.level == FeatureLevel::Phoneme && out.matrix.dim() == (total, dim);
        for (w, &len) in lens.iter().enumerate() {
            for _ in 0..len {
                ok &= row < out.rows() && out.matrix.row(row) == feats.matrix.row(w);
                row += 1;
            }
        }
        if !ok {
            failure = Some(format!("case {case} with spans {lens:?}"));
            break;
        }
    }
    Ok(Check::new("replication", failure, format!("{n} span structures exact")))
}

/// Valid rows of the text encoder output for `items` padded to `t_max`.
fn encode_rows(model: &Model, store: &ParamStore<f32>, items: &[TextItem<'_>], t_max: usize) -> mmtts::Result<Vec<Array2<f32>>> {
    let mut g = Graph::new(store);
    let (stats, _) = model.encode_text(&mut g, items, Some(t_max))?;
    let mut out = Vec::new();
    for (b, item) in items.iter().enumerate() {
        let rows = b * t_max..b * t_max + item.ids.len();
        for v in [stats.mu, stats.logvar] {
            out.push(g.value(v).slice(ndarray::s![rows.clone(), ..]).to_owned());
        }
    }
    Ok(out)
}

fn max_diff(a: &[Array2<f32>], b: &[Array2<f32>]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).iter().fold(0.0f32, |m, v| m.max(v.abs())))
        .fold(0.0, f32::max)
}

/// Extra padding leaves the text encoder's valid outputs within 1e-4, with
/// and without context fusion.
pub fn padding_encode_text(seed: u64) -> mmtts::Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbad);
    let mut worst = 0.0f32;
    for use_context in [false, true] {
        let cfg = ModelConfig {
            use_context,
            n_speakers: 4,
            ..ModelConfig::desk()
        };
        let mut store = ParamStore::<f32>::new();
        let model = Model::new(&mut store, &cfg, 30, seed)?;
        if use_context {
            // the projection starts at zero; make the context matter
            let ids: Vec<_> = store.ids_with_prefix("gen.text_encoder.context_proj").collect();
            if ids.is_empty() {
                return Err(mmtts::Error::Config("context projection parameters not found".into()));
            }
            for id in ids {
                store.value_mut(id).mapv_inplace(|_| rng.random_range(-0.1..0.1));
            }
        }
        let lens = [9usize, 4, 6];
        let ids: Vec<Vec<usize>> = lens.iter().map(|&l| (0..l).map(|_| rng.random_range(1..30)).collect()).collect();
        let ctx: Vec<Array2<f32>> = lens.iter().map(|&l| uniform(&mut rng, l, cfg.context_dim, -1.0, 1.0)).collect();
        let items: Vec<TextItem<'_>> = (0..lens.len())
            .map(|b| TextItem {
                ids: &ids[b],
                context: use_context.then(|| &ctx[b]),
                language: b % cfg.n_languages,
                speaker: b % cfg.n_speakers,
            })
            .collect();
        let base = encode_rows(&model, &store, &items, 9)?;
        for extra in [1, 5, 23] {
            worst = worst.max(max_diff(&base, &encode_rows(&model, &store, &items, 9 + extra)?));
        }
    }
    let failure = (!(worst <= 1e-4)).then(|| format!("max difference {worst:e} > 1e-4"));
    Ok(Check::new("padding-encode-text", failure, format!("max difference {worst:e}")))
}

/// Extra text and frame padding leaves every loss term within 1e-5.
pub fn padding_losses(seed: u64) -> mmtts::Result<Check> {
    let dir = tempfile::tempdir()?;
    let opts = SyntheticOptions {
        speakers_per_language: 1,
        utterances_per_speaker: 1,
        ..Default::default()
    };
    let mut manifest = load_manifest(&generate_synthetic_corpus(dir.path(), seed, &opts)?)?;
    manifest.utterances.truncate(3);
    let fcfg = FrontendConfig::default();
    let mut fe = TextFrontend::new(&fcfg, None)?;
    let vocab = build_vocabulary(&manifest, &fe)?;
    let model = ModelConfig {
        n_speakers: manifest.speakers.len(),
        ..ModelConfig::desk()
    };
    let dataset = load_dataset(&manifest, &mut fe, &vocab, &model, None)?;
    let setup = RunSetup {
        model,
        train: TrainConfig::desk(),
        frontend: fcfg,
        context: None,
    };
    let trainer = Trainer::new(setup, vocab, manifest.speakers.clone())?;
    let items: Vec<_> = dataset.items.iter().collect();
    let terms = |padding: Padding| -> mmtts::Result<[f64; 6]> {
        let mut g = Graph::new(&trainer.store);
        let mut noise = StepNoise::new(seed, 0);
        let v = forward_losses(&mut g, &trainer.model, &items, &LossWeights::default(), &mut noise, padding)?;
        let r = v.report(&g, 0, 0.0)?;
        Ok([r.mel, r.kl, r.duration, r.adversarial_g, r.adversarial_d, r.feature_matching])
    };
    let base = terms(Padding::default())?;
    let mut worst = 0.0f64;
    for padding in [Padding { text: 3, frames: 7 }, Padding { text: 17, frames: 40 }] {
        let padded = terms(padding)?;
        worst = base.iter().zip(&padded).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    let failure = (!(worst <= 1e-5)).then(|| format!("max loss difference {worst:e} > 1e-5"));
    Ok(Check::new("padding-losses", failure, format!("6 terms, max difference {worst:e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suites_pass() {
        for suite in [Suite::Mas, Suite::Replication] {
            for c in run_suite(suite, true, 3) {
                assert!(c.passed, "{}: {}", c.name, c.detail);
            }
        }
    }

    #[test]
    fn failures_carry_the_error_kind() {
        let c = Check::from_result("x", Err(mmtts::Error::EmptyText));
        assert!(!c.passed);
        assert!(c.detail.starts_with("empty-text"));
    }
}
