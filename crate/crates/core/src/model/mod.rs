//! Conditional VAE generator, waveform discriminator and their evaluation
//! entry points.
//!
//! Parameters live in a [`ParamStore`] owned by the caller; [`Model`] only
//! holds parameter handles, so one store can be shared by many read-only
//! evaluations.

mod config;
mod decoder;
mod discriminator;
mod duration;
mod flow;
pub mod layers;
mod mel;
mod posterior;
mod text_encoder;

use mmtts_tensor::nn::Embedding;
use mmtts_tensor::{Graph, ParamBuilder, ParamStore, Scalar, Var};
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use config::ModelConfig;
pub use decoder::Decoder;
pub use discriminator::{Discrimination, Discriminator};
pub use duration::{duration_nll, sample_durations, DurationPredictor, DurationStats, LOG_STD_RANGE};
pub use flow::{Coupling, Flow};
pub use layers::{cast, Layout};
pub use mel::GraphMel;
pub use posterior::{PosteriorEncoder, PosteriorSample};
pub use text_encoder::{PriorStats, TextEncoder};

use crate::frontend::NUM_LANGUAGES;
use crate::{Error, Result};

pub const GENERATOR_PREFIX: &str = "gen";
pub const DISCRIMINATOR_PREFIX: &str = "disc";
pub const SPEAKER_TABLE: &str = "gen.speaker_embedding.table";
pub const LANGUAGE_TABLE: &str = "gen.language_embedding.table";

/// One encoded utterance for the text side of the model.
#[derive(Debug, Clone, Copy)]
pub struct TextItem<'a> {
    pub ids: &'a [usize],
    /// Phoneme-level context rows, present iff the model uses context.
    pub context: Option<&'a Array2<f32>>,
    pub language: usize,
    pub speaker: usize,
}

/// Matrices from an evaluation-mode text encoding of one item.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorArrays<T> {
    pub mu: Array2<T>,
    pub logvar: Array2<T>,
    pub hidden: Array2<T>,
}

/// Noise and pacing knobs for inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisNoise {
    pub noise_scale: f64,
    pub noise_scale_w: f64,
    pub length_scale: f64,
    pub seed: u64,
}

impl SynthesisNoise {
    pub fn from_config(cfg: &ModelConfig, seed: u64) -> Self {
        Self {
            noise_scale: cfg.noise_scale,
            noise_scale_w: cfg.noise_scale_w,
            length_scale: cfg.length_scale,
            seed,
        }
    }

    pub fn deterministic() -> Self {
        Self {
            noise_scale: 0.0,
            noise_scale_w: 0.0,
            length_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub waveform: Vec<f32>,
    pub durations: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub n_symbols: usize,
    pub speaker_embedding: Embedding,
    pub language_embedding: Embedding,
    pub text_encoder: TextEncoder,
    pub posterior: PosteriorEncoder,
    pub flow: Flow,
    pub duration: DurationPredictor,
    pub decoder: Decoder,
    pub discriminator: Discriminator,
    pub mel: GraphMel,
}

fn standard_normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn check_finite<T: Scalar>(a: &Array2<T>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl Model {
    /// Registers every parameter in `store`, initialized from `seed`.
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, n_symbols: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if n_symbols == 0 {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        let mut root = ParamBuilder::new(store, seed);
        let mut gen = root.sub(GENERATOR_PREFIX);
        let speaker_embedding = Embedding::new(&mut gen, "speaker_embedding", cfg.n_speakers, cfg.speaker_dim);
        let language_embedding = Embedding::new(&mut gen, "language_embedding", cfg.n_languages, cfg.language_dim);
        let text_encoder = TextEncoder::new(&mut gen, cfg, n_symbols);
        let posterior = PosteriorEncoder::new(&mut gen, cfg);
        let flow = Flow::new(&mut gen, cfg);
        let duration = DurationPredictor::new(&mut gen, cfg);
        let decoder = Decoder::new(&mut gen, cfg);
        let discriminator = Discriminator::new(&mut root.sub(DISCRIMINATOR_PREFIX), cfg);
        Ok(Self {
            cfg: cfg.clone(),
            n_symbols,
            speaker_embedding,
            language_embedding,
            text_encoder,
            posterior,
            flow,
            duration,
            decoder,
            discriminator,
            mel: GraphMel::new(&cfg.audio()),
        })
    }

    pub fn hop(&self) -> usize {
        self.cfg.hop_length
    }

    pub fn check_speaker(&self, id: usize) -> Result<()> {
        if id < self.cfg.n_speakers {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "speaker",
                id,
                limit: self.cfg.n_speakers,
            })
        }
    }

    pub fn check_language(&self, id: usize) -> Result<()> {
        if id < NUM_LANGUAGES {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "language",
                id,
                limit: NUM_LANGUAGES,
            })
        }
    }

    /// Per-item `(language, speaker)` embedding rows, `B x D` each.
    pub fn conditions<T: Scalar>(&self, g: &mut Graph<'_, T>, langs: &[usize], spks: &[usize]) -> Result<(Var, Var)> {
        for &l in langs {
            self.check_language(l)?;
        }
        for &s in spks {
            self.check_speaker(s)?;
        }
        Ok((self.language_embedding.forward(g, langs), self.speaker_embedding.forward(g, spks)))
    }

    pub fn speaker_condition<T: Scalar>(&self, g: &mut Graph<'_, T>, spks: &[usize]) -> Result<Var> {
        for &s in spks {
            self.check_speaker(s)?;
        }
        Ok(self.speaker_embedding.forward(g, spks))
    }

    fn check_item(&self, item: &TextItem<'_>) -> Result<()> {
        if item.ids.is_empty() {
            return Err(Error::EmptyText);
        }
        if let Some(&bad) = item.ids.iter().find(|&&id| id >= self.n_symbols) {
            return Err(Error::OutOfRange {
                what: "phoneme",
                id: bad,
                limit: self.n_symbols,
            });
        }
        self.check_language(item.language)?;
        self.check_speaker(item.speaker)?;
        match (self.cfg.use_context, item.context) {
            (true, Some(c)) => {
                if c.nrows() != item.ids.len() {
                    return Err(Error::LengthMismatch {
                        left: item.ids.len(),
                        right: c.nrows(),
                    });
                }
                if c.ncols() != self.cfg.context_dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.cfg.context_dim,
                        found: c.ncols(),
                    });
                }
                check_finite(c, "context features")
            }
            (false, None) => Ok(()),
            (use_context, _) => Err(Error::ContextPresence { use_context }),
        }
    }

    /// Encodes a batch padded to `t_max` (at least the longest item).
    pub fn encode_text<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        items: &[TextItem<'_>],
        t_max: Option<usize>,
    ) -> Result<(PriorStats, Layout)> {
        if items.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for item in items {
            self.check_item(item)?;
        }
        let lengths: Vec<usize> = items.iter().map(|i| i.ids.len()).collect();
        let longest = lengths.iter().copied().max().unwrap_or(0);
        let t_max = t_max.unwrap_or(longest);
        if t_max < longest {
            return Err(Error::Layout(format!("t_max {t_max} is shorter than item length {longest}")));
        }
        let layout = Layout::new(lengths, t_max);
        let mut ids = vec![0usize; layout.rows()];
        for (b, item) in items.iter().enumerate() {
            ids[b * t_max..b * t_max + item.ids.len()].copy_from_slice(item.ids);
        }
        let context = if self.cfg.use_context {
            let mut ctx = Array2::<T>::zeros((layout.rows(), self.cfg.context_dim));
            for (b, item) in items.iter().enumerate() {
                let c = item.context.expect("checked above");
                for (r, row) in c.rows().into_iter().enumerate() {
                    for (k, &v) in row.iter().enumerate() {
                        ctx[[b * t_max + r, k]] = T::lit(v as f64);
                    }
                }
            }
            Some(g.constant(ctx))
        } else {
            None
        };
        let langs: Vec<usize> = items.iter().map(|i| i.language).collect();
        let spks: Vec<usize> = items.iter().map(|i| i.speaker).collect();
        let (lang, spk) = self.conditions(g, &langs, &spks)?;
        let stats = self.text_encoder.forward(g, &ids, context, lang, spk, &layout)?;
        Ok((stats, layout))
    }

    /// Appends `added` speaker rows, each set to the mean of the existing
    /// rows. Returns the new speaker count.
    pub fn extend_speakers<T: Scalar>(&mut self, store: &mut ParamStore<T>, added: usize) -> Result<usize> {
        let table = store
            .get(SPEAKER_TABLE)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {SPEAKER_TABLE}")))?
            .clone();
        let (n, d) = table.dim();
        let scale = T::lit(1.0 / n as f64);
        let mean = table.sum_axis(ndarray::Axis(0)).mapv(|v| v * scale);
        let grown = Array2::from_shape_fn((n + added, d), |(r, c)| if r < n { table[[r, c]] } else { mean[c] });
        store.insert(SPEAKER_TABLE, grown);
        self.cfg.n_speakers = n + added;
        self.speaker_embedding.count = n + added;
        Ok(n + added)
    }

    // Evaluation-mode entry points. Each runs one throwaway graph over a
    // single item.

    pub fn encode_text_eval<T: Scalar>(&self, store: &ParamStore<T>, item: TextItem<'_>) -> Result<PriorArrays<T>> {
        let mut g = Graph::new(store);
        let (stats, _) = self.encode_text(&mut g, &[item], None)?;
        Ok(PriorArrays {
            mu: g.value(stats.mu).clone(),
            logvar: g.value(stats.logvar).clone(),
            hidden: g.value(stats.hidden).clone(),
        })
    }

    /// Returns `(z, mu, logvar)`; with `seed = None` the sample is the mean.
    pub fn encode_posterior_eval<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        linear: &Array2<T>,
        speaker: usize,
        seed: Option<u64>,
    ) -> Result<(Array2<T>, Array2<T>, Array2<T>)> {
        if linear.nrows() == 0 {
            return Err(Error::Layout("posterior input has no frames".into()));
        }
        if linear.ncols() != self.cfg.linear_bins() {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.linear_bins(),
                found: linear.ncols(),
            });
        }
        check_finite(linear, "linear spectrogram")?;
        let mut g = Graph::new(store);
        let spk = self.speaker_condition(&mut g, &[speaker])?;
        let layout = Layout::tight(vec![linear.nrows()]);
        let eps = seed.map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let e = standard_normal(&mut rng, linear.nrows() * self.cfg.hidden_dim);
            Array2::from_shape_fn((linear.nrows(), self.cfg.hidden_dim), |(r, c)| T::lit(e[r * self.cfg.hidden_dim + c]))
        });
        let x = g.constant(linear.clone());
        let out = self.posterior.forward(&mut g, x, spk, &layout, eps);
        Ok((g.value(out.z).clone(), g.value(out.mu).clone(), g.value(out.logvar).clone()))
    }

    /// Flow in either direction over one unpadded sequence.
    pub fn flow_eval<T: Scalar>(&self, store: &ParamStore<T>, z: &Array2<T>, speaker: usize, inverse: bool) -> Result<Array2<T>> {
        if z.ncols() != self.cfg.hidden_dim {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.hidden_dim,
                found: z.ncols(),
            });
        }
        check_finite(z, "flow input")?;
        let mut g = Graph::new(store);
        let spk = self.speaker_condition(&mut g, &[speaker])?;
        let layout = Layout::tight(vec![z.nrows()]);
        let x = g.constant(z.clone());
        let y = if inverse {
            self.flow.inverse(&mut g, x, spk, &layout)
        } else {
            self.flow.forward(&mut g, x, spk, &layout).0
        };
        let y = g.value(y).clone();
        check_finite(&y, "flow output")?;
        Ok(y)
    }

    /// Per-phoneme frame counts from encoder output `hidden` (`P x H`).
    pub fn predict_durations<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        hidden: &Array2<T>,
        language: usize,
        speaker: usize,
        noise_scale_w: f64,
        length_scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<usize>> {
        if !(noise_scale_w >= 0.0) {
            return Err(Error::Config(format!("noise_scale_w must be >= 0, got {noise_scale_w}")));
        }
        check_finite(hidden, "encoder output")?;
        let mut g = Graph::new(store);
        let (lang, spk) = self.conditions(&mut g, &[language], &[speaker])?;
        let layout = Layout::tight(vec![hidden.nrows()]);
        let h = g.constant(hidden.clone());
        let stats = self.duration.forward(&mut g, h, lang, spk, &layout);
        let mu: Vec<f64> = g.value(stats.mu).iter().map(|&v| Scalar::to_f64(v)).collect();
        let ls: Vec<f64> = g.value(stats.log_std).iter().map(|&v| Scalar::to_f64(v)).collect();
        let eps = standard_normal(rng, mu.len());
        sample_durations(&mu, &ls, &eps, noise_scale_w, length_scale)
    }

    pub fn decode_eval<T: Scalar>(&self, store: &ParamStore<T>, z: &Array2<T>, speaker: usize) -> Result<Vec<f32>> {
        if z.nrows() == 0 {
            return Err(Error::Layout("empty latent slice".into()));
        }
        let mut g = Graph::new(store);
        let spk = self.speaker_condition(&mut g, &[speaker])?;
        let x = g.constant(z.clone());
        let wav = self.decoder.forward(&mut g, x, spk, 1);
        let out: Vec<f32> = g.value(wav).iter().map(|&v| Scalar::to_f64(v) as f32).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("decoded waveform".into()));
        }
        Ok(out)
    }

    /// Scores and feature maps for one waveform.
    pub fn discriminate_eval<T: Scalar>(&self, store: &ParamStore<T>, wav: &[f32]) -> Result<(Array2<T>, Vec<Array2<T>>)> {
        if wav.is_empty() {
            return Err(Error::Audio("empty waveform".into()));
        }
        let mut g = Graph::new(store);
        let x = g.constant(Array2::from_shape_fn((wav.len(), 1), |(i, _)| T::lit(wav[i] as f64)));
        let d = self.discriminator.forward(&mut g, x, 1);
        let maps = d.feature_maps.iter().map(|&m| g.value(m).clone()).collect();
        Ok((g.value(d.scores).clone(), maps))
    }

    /// Text-side item to waveform: encode, pick durations, expand the prior,
    /// sample, invert the flow and decode.
    pub fn synthesize<T: Scalar>(&self, store: &ParamStore<T>, item: TextItem<'_>, noise: SynthesisNoise) -> Result<Synthesis> {
        if !(noise.noise_scale >= 0.0 && noise.noise_scale.is_finite()) {
            return Err(Error::Config(format!("noise_scale must be >= 0, got {}", noise.noise_scale)));
        }
        if !(noise.length_scale > 0.0 && noise.length_scale.is_finite()) {
            return Err(Error::Config(format!("length_scale must be > 0, got {}", noise.length_scale)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        let prior = self.encode_text_eval(store, item)?;
        let durations = self.predict_durations(
            store,
            &prior.hidden,
            item.language,
            item.speaker,
            noise.noise_scale_w,
            noise.length_scale,
            &mut rng,
        )?;
        let frames: usize = durations.iter().sum();
        let h = self.cfg.hidden_dim;
        let owner: Vec<usize> = durations.iter().enumerate().flat_map(|(p, &d)| std::iter::repeat_n(p, d)).collect();
        let eps = standard_normal(&mut rng, frames * h);
        let z_p = Array2::from_shape_fn((frames, h), |(f, c)| {
            let p = owner[f];
            let mu = Scalar::to_f64(prior.mu[[p, c]]);
            let std = (0.5 * Scalar::to_f64(prior.logvar[[p, c]])).exp();
            T::lit(mu + std * eps[f * h + c] * noise.noise_scale)
        });
        let z = self.flow_eval(store, &z_p, item.speaker, true)?;
        let waveform = self.decode_eval(store, &z, item.speaker)?;
        Ok(Synthesis { waveform, durations })
    }
}

/// Log-likelihood of each latent frame under each phoneme's diagonal
/// Gaussian prior, `P x F`. `logvar` is the log variance.
pub fn prior_loglik(mu: ArrayView2<'_, f32>, logvar: ArrayView2<'_, f32>, z_p: ArrayView2<'_, f32>) -> Array2<f32> {
    let (p, h) = mu.dim();
    let f = z_p.nrows();
    let half_log_2pi = 0.5 * (2.0 * std::f32::consts::PI).ln();
    let inv_var = logvar.mapv(|v| (-v).exp());
    let mut out = Array2::zeros((p, f));
    for i in 0..p {
        let mut constant = 0.0f32;
        for c in 0..h {
            constant += -half_log_2pi - 0.5 * logvar[[i, c]] - 0.5 * mu[[i, c]] * mu[[i, c]] * inv_var[[i, c]];
        }
        for t in 0..f {
            let mut acc = constant;
            for c in 0..h {
                let z = z_p[[t, c]];
                acc += -0.5 * z * z * inv_var[[i, c]] + z * mu[[i, c]] * inv_var[[i, c]];
            }
            out[[i, t]] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests;
