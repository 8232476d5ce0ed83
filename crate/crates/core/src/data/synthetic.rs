//! Tiny deterministic corpora for desk-scale runs and tests.
//!
//! Text is pseudo-words in each language's script (English uses the
//! built-in lexicon). Audio is rendered phoneme by phoneme as a harmonic
//! tone at the speaker's pitch, shaped by two resonances derived from the
//! phoneme symbol and scaled by a per-speaker factor.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::manifest::{write_manifest, Utterance};
use super::wav::encode_wav;
use crate::frontend::{english_words, phonemize, resolve_backend, BuiltinBackend, FrontendOptions, Language};
use crate::Result;

pub const MIN_CLIP_SEC: f64 = 0.5;
pub const MAX_CLIP_SEC: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOptions {
    pub speakers_per_language: usize,
    pub utterances_per_speaker: usize,
    pub sample_rate: u32,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        Self {
            speakers_per_language: 2,
            utterances_per_speaker: 3,
            sample_rate: 16000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotOptions {
    pub targets: usize,
    pub utterances_per_speaker: usize,
    pub sample_rate: u32,
}

impl Default for FewShotOptions {
    fn default() -> Self {
        Self {
            targets: 9,
            utterances_per_speaker: 2,
            sample_rate: 16000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Voice {
    f0: f64,
    formant_scale: f64,
}

fn keyed_rng(seed: u64, key: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn voice_for(seed: u64, label: &str) -> Voice {
    let mut rng = keyed_rng(seed, &format!("voice/{label}"));
    Voice {
        f0: rng.random_range(95.0..250.0),
        formant_scale: rng.random_range(0.85..1.2),
    }
}

fn script_base(lang: Language) -> Option<u32> {
    match lang {
        Language::Hindi | Language::Marathi | Language::Chhattisgarhi => Some(0x0900),
        Language::Bengali => Some(0x0980),
        Language::Telugu => Some(0x0C00),
        Language::Kannada => Some(0x0C80),
        Language::English => None,
    }
}

// consonant and vowel-sign offsets assigned in all four script blocks
const CONSONANTS: [u32; 19] = [
    0x15, 0x16, 0x17, 0x1A, 0x1C, 0x1F, 0x21, 0x23, 0x24, 0x26, 0x28, 0x2A, 0x2C, 0x2E, 0x2F, 0x30, 0x32, 0x38, 0x39,
];
const VOWEL_SIGNS: [Option<u32>; 5] = [None, Some(0x3E), Some(0x3F), Some(0x41), Some(0x47)];

fn pseudo_text(rng: &mut ChaCha8Rng, lang: Language) -> String {
    let words = rng.random_range(2..=4);
    let mut out: Vec<String> = Vec::with_capacity(words);
    match script_base(lang) {
        Some(base) => {
            for _ in 0..words {
                let mut w = String::new();
                for _ in 0..rng.random_range(1..=3) {
                    let c = CONSONANTS[rng.random_range(0..CONSONANTS.len())];
                    w.push(char::from_u32(base + c).unwrap());
                    if let Some(v) = VOWEL_SIGNS[rng.random_range(0..VOWEL_SIGNS.len())] {
                        w.push(char::from_u32(base + v).unwrap());
                    }
                }
                out.push(w);
            }
        }
        None => {
            let lexicon = english_words();
            for _ in 0..words {
                out.push(lexicon[rng.random_range(0..lexicon.len())].to_string());
            }
        }
    }
    out.join(" ")
}

fn resonances(symbol: &str, voice: Voice) -> (f64, f64, f64) {
    let d = Sha256::digest(symbol.as_bytes());
    let u = |i: usize| u16::from_le_bytes([d[i], d[i + 1]]) as f64 / 65535.0;
    let f1 = 300.0 + 600.0 * u(0);
    let f2 = 1000.0 + 1500.0 * u(2);
    let level = 0.35 + 0.65 * u(4);
    (f1 * voice.formant_scale, f2 * voice.formant_scale, level)
}

/// Renders audio for `text`; the clip length is kept inside
/// [`MIN_CLIP_SEC`, `MAX_CLIP_SEC`].
fn render(text: &str, lang: Language, voice: Voice, sample_rate: u32, rng: &mut ChaCha8Rng) -> Result<Vec<f32>> {
    let tag = resolve_backend(lang.code())?;
    let seq = phonemize(text, tag, &BuiltinBackend, FrontendOptions::default())?;
    let sr = sample_rate as f64;
    let edge = 0.05;
    let mut durs: Vec<f64> = seq.phonemes.iter().map(|_| rng.random_range(0.06..0.11)).collect();
    let speech: f64 = durs.iter().sum();
    let (lo, hi) = (MIN_CLIP_SEC + 0.01 - 2.0 * edge, MAX_CLIP_SEC - 0.01 - 2.0 * edge);
    let scale = if speech > hi { hi / speech } else if speech < lo { lo / speech } else { 1.0 };
    durs.iter_mut().for_each(|d| *d *= scale);
    let total = durs.iter().sum::<f64>() + 2.0 * edge;
    let n = (total * sr).round() as usize;
    let mut out = vec![0.0f64; n];
    let nyquist_guard = (sr / 2.0 - 500.0).min(4000.0);
    let mut start = edge;
    let mut phase = 0.0f64;
    let mut t_prev = (start * sr).round() as usize;
    for (sym, d) in seq.phonemes.iter().zip(&durs) {
        let (f1, f2, level) = resonances(sym, voice);
        let s0 = t_prev;
        let s1 = ((start + d) * sr).round() as usize;
        let ramp = (0.01 * sr) as usize;
        for (t, slot) in out.iter_mut().enumerate().take(s1.min(n)).skip(s0) {
            let f0 = voice.f0 * (1.0 + 0.02 * (2.0 * std::f64::consts::PI * 5.0 * t as f64 / sr).sin());
            phase += 2.0 * std::f64::consts::PI * f0 / sr;
            let mut acc = 0.0;
            let mut h = 1.0;
            while h * voice.f0 < nyquist_guard {
                let f = h * voice.f0;
                let g = (-((f - f1) / 150.0).powi(2)).exp() + 0.6 * (-((f - f2) / 200.0).powi(2)).exp();
                if g > 1e-3 {
                    acc += g * (h * phase).sin();
                }
                h += 1.0;
            }
            let k = t - s0;
            let env = (k.min(s1 - 1 - t) as f64 / ramp as f64).min(1.0);
            *slot = acc * level * env;
        }
        start += d;
        t_prev = s1;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    Ok(out
        .into_iter()
        .map(|v| (0.5 * v / peak + rng.random_range(-1e-3..1e-3)) as f32)
        .collect())
}

fn write_corpus(out_dir: &Path, seed: u64, sample_rate: u32, plan: &[(String, Language, usize)]) -> Result<PathBuf> {
    let wav_dir = out_dir.join("wavs");
    std::fs::create_dir_all(&wav_dir)?;
    let mut utterances = Vec::new();
    for (label, lang, count) in plan {
        let voice = voice_for(seed, label);
        for k in 0..*count {
            let id = format!("{label}_{k:03}");
            let mut rng = keyed_rng(seed, &format!("utt/{id}"));
            let text = pseudo_text(&mut rng, *lang);
            let samples = render(&text, *lang, voice, sample_rate, &mut rng)?;
            let path = wav_dir.join(format!("{id}.wav"));
            std::fs::write(&path, encode_wav(&samples, sample_rate))?;
            utterances.push(Utterance {
                id,
                audio_path: path,
                text,
                language: *lang,
                speaker: label.clone(),
                speaker_id: 0,
                duration_sec: samples.len() as f64 / sample_rate as f64,
            });
        }
    }
    let manifest = out_dir.join("manifest.jsonl");
    write_manifest(&manifest, &utterances)?;
    Ok(manifest)
}

/// Base corpus: every language gets `speakers_per_language` speakers.
pub fn generate_synthetic_corpus(out_dir: &Path, seed: u64, opts: &SyntheticOptions) -> Result<PathBuf> {
    let plan: Vec<(String, Language, usize)> = Language::ALL
        .iter()
        .flat_map(|&lang| {
            (0..opts.speakers_per_language).map(move |s| {
                let label = match (opts.speakers_per_language, s) {
                    (2, 0) => format!("{}_f", lang.code()),
                    (2, 1) => format!("{}_m", lang.code()),
                    _ => format!("{}_{s}", lang.code()),
                };
                (label, lang, opts.utterances_per_speaker)
            })
        })
        .collect();
    write_corpus(out_dir, seed, opts.sample_rate, &plan)
}

/// Few-shot corpus of new target speakers, each recorded in one language
/// (cycling through all seven).
pub fn generate_fewshot_corpus(out_dir: &Path, seed: u64, opts: &FewShotOptions) -> Result<PathBuf> {
    let plan: Vec<(String, Language, usize)> = (0..opts.targets)
        .map(|i| (format!("target_{i:02}"), Language::ALL[i % Language::ALL.len()], opts.utterances_per_speaker))
        .collect();
    write_corpus(out_dir, seed ^ 0x5eed_f00d, opts.sample_rate, &plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::load_manifest;
    use crate::data::wav::read_wav;

    #[test]
    fn pseudo_text_phonemizes_everywhere() {
        let mut rng = keyed_rng(1, "t");
        for lang in Language::ALL {
            for _ in 0..20 {
                let text = pseudo_text(&mut rng, lang);
                let tag = resolve_backend(lang.code()).unwrap();
                phonemize(&text, tag, &BuiltinBackend, FrontendOptions::default()).unwrap();
            }
        }
    }

    #[test]
    fn small_corpus_shape() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SyntheticOptions {
            speakers_per_language: 2,
            utterances_per_speaker: 1,
            ..Default::default()
        };
        let path = generate_synthetic_corpus(dir.path(), 7, &opts).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.speakers.len(), 14);
        assert_eq!(m.languages().len(), 7);
        for u in &m.utterances {
            let wav = read_wav(&u.audio_path).unwrap();
            let d = wav.duration_sec();
            assert!((MIN_CLIP_SEC..=MAX_CLIP_SEC).contains(&d), "{d}");
            assert!(wav.samples.iter().any(|&s| s.abs() > 0.1));
        }
    }
}
