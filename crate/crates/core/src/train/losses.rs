//! One training forward pass: generator losses and discriminator loss on a
//! shared graph.

use mmtts_tensor::{Graph, Scalar, Var};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::LossWeights;
use super::dataset::TrainItem;
use crate::align::{mas_batch, AlignmentPath, BatchedLoglik};
use crate::data::SpectrogramExtractor;
use crate::model::layers::gather;
use crate::model::{duration_nll, prior_loglik, Layout, Model, TextItem};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: u64,
    pub total: f64,
    pub mel: f64,
    pub kl: f64,
    pub duration: f64,
    pub adversarial_g: f64,
    pub adversarial_d: f64,
    pub feature_matching: f64,
    /// Seconds since the run started.
    pub wall_time: f64,
}

impl LossReport {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.mel * self.mel + w.kl * self.kl + w.duration * self.duration + w.adversarial * self.adversarial_g
            + w.feature_matching * self.feature_matching
    }

    /// Equal except for wall time.
    pub fn same_values(&self, other: &LossReport) -> bool {
        LossReport {
            wall_time: 0.0,
            ..*self
        } == LossReport {
            wall_time: 0.0,
            ..*other
        }
    }
}

/// Extra padding rows beyond the longest item, for invariance checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Padding {
    pub text: usize,
    pub frames: usize,
}

/// Graph nodes of every loss term.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub mel: Var,
    pub kl: Var,
    pub duration: Var,
    pub adversarial_g: Var,
    pub adversarial_d: Var,
    pub feature_matching: Var,
    /// Weighted generator objective.
    pub generator: Var,
}

impl LossVars {
    pub fn report(&self, g: &Graph<'_, f32>, iteration: u64, wall_time: f64) -> Result<LossReport> {
        let get = |v: Var, term: &str| -> Result<f64> {
            let x = g.item(v) as f64;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::NonFiniteLoss {
                    term: term.to_string(),
                    iteration,
                })
            }
        };
        Ok(LossReport {
            iteration,
            mel: get(self.mel, "mel")?,
            kl: get(self.kl, "kl")?,
            duration: get(self.duration, "duration")?,
            adversarial_g: get(self.adversarial_g, "adversarial_g")?,
            adversarial_d: get(self.adversarial_d, "adversarial_d")?,
            feature_matching: get(self.feature_matching, "feature_matching")?,
            total: get(self.generator, "total")?,
            wall_time,
        })
    }
}

/// Random draws for one step. Each item consumes its own draws in batch
/// order, so they do not depend on how much padding the batch carries.
pub struct StepNoise {
    rng: ChaCha8Rng,
}

impl StepNoise {
    pub fn new(seed: u64, iteration: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_6973_655f_7374);
        rng.set_stream(iteration);
        Self { rng }
    }
}

/// Mean absolute difference between two log-mel matrices.
pub fn mel_l1<T: Scalar>(g: &mut Graph<'_, T>, fake: Var, target: Var) -> Var {
    let d = g.sub(fake, target);
    let a = g.abs(d);
    g.mean(a)
}

/// Inputs of [`kl_divergence`], all `rows x H` except `logdet` (`rows x 1`).
#[derive(Debug, Clone, Copy)]
pub struct KlTerms {
    /// Flow output of the posterior sample.
    pub z_p: Var,
    pub logvar_q: Var,
    /// Prior statistics expanded to frames by the alignment.
    pub mu_p: Var,
    pub logvar_p: Var,
    pub logdet: Var,
}

/// Single-sample KL estimate per valid frame. `eps` is the standard normal
/// draw behind the posterior sample, so `log q(z)` is evaluated exactly.
pub fn kl_divergence<T: Scalar>(g: &mut Graph<'_, T>, t: KlTerms, eps: &Array2<T>, mask: Var, valid: usize) -> Var {
    let logs_p = g.scale(t.logvar_p, 0.5);
    let logs_q = g.scale(t.logvar_q, 0.5);
    let diff = g.sub(t.z_p, t.mu_p);
    let sq = g.square(diff);
    let neg_lv = g.neg(t.logvar_p);
    let inv_var = g.exp(neg_lv);
    let maha = g.mul(sq, inv_var);
    let maha = g.scale(maha, 0.5);
    let eps_sq = g.constant(eps.mapv(|e| e * e * T::lit(0.5)));
    let kl = g.sub(logs_p, logs_q);
    let kl = g.sub(kl, eps_sq);
    let kl = g.add(kl, maha);
    let kl = g.mul(kl, mask);
    let kl_sum = g.sum(kl);
    let ld = g.mul(t.logdet, mask);
    let ld_sum = g.sum(ld);
    let total = g.sub(kl_sum, ld_sum);
    g.scale(total, 1.0 / valid.max(1) as f64)
}

fn squared_error_mean(g: &mut Graph<'_, f32>, x: Var, target: f64) -> Var {
    let d = g.add_scalar(x, -target);
    let sq = g.square(d);
    g.mean(sq)
}

/// Builds all losses for `items`. MAS runs on detached values through the
/// auto-detected batch backend.
pub fn forward_losses(
    g: &mut Graph<'_, f32>,
    model: &Model,
    items: &[&TrainItem],
    weights: &LossWeights,
    noise: &mut StepNoise,
    padding: Padding,
) -> Result<LossVars> {
    let cfg = &model.cfg;
    let h = cfg.hidden_dim;
    let hop = cfg.hop_length;
    let seg = cfg.segment_frames;
    let b = items.len();
    if b == 0 {
        return Err(Error::EmptyDataset);
    }
    for it in items {
        if it.frames() < it.phonemes() {
            return Err(Error::Infeasible {
                phonemes: it.phonemes(),
                frames: it.frames(),
            });
        }
        if it.linear.ncols() != cfg.linear_bins() {
            return Err(Error::DimensionMismatch {
                expected: cfg.linear_bins(),
                found: it.linear.ncols(),
            });
        }
    }

    // per-item random draws
    let mut starts = Vec::with_capacity(b);
    let mut eps_items = Vec::with_capacity(b);
    for it in items {
        let f = it.frames();
        starts.push(noise.rng.random_range(0..=f.saturating_sub(seg)));
        let e: Vec<f32> = (0..f * h).map(|_| StandardNormal.sample(&mut noise.rng)).collect();
        eps_items.push(e);
    }

    // text side
    let text_items: Vec<TextItem<'_>> = items
        .iter()
        .map(|it| TextItem {
            ids: &it.ids,
            context: it.context.as_ref(),
            language: it.language,
            speaker: it.speaker,
        })
        .collect();
    let longest_text = items.iter().map(|i| i.phonemes()).max().unwrap();
    let (prior, text_layout) = model.encode_text(g, &text_items, Some(longest_text + padding.text))?;
    let langs: Vec<usize> = items.iter().map(|i| i.language).collect();
    let spks: Vec<usize> = items.iter().map(|i| i.speaker).collect();
    let (lang, spk) = model.conditions(g, &langs, &spks)?;

    // posterior and flow
    let longest_frames = items.iter().map(|i| i.frames()).max().unwrap();
    let frame_layout = Layout::new(items.iter().map(|i| i.frames()).collect(), longest_frames + padding.frames);
    let ft = frame_layout.t_max;
    let bins = cfg.linear_bins();
    let mut spec = Array2::<f32>::zeros((b * ft, bins));
    let mut eps = Array2::<f32>::zeros((b * ft, h));
    for (i, it) in items.iter().enumerate() {
        let f = it.frames();
        spec.slice_mut(s![i * ft..i * ft + f, ..]).assign(&it.linear);
        for r in 0..f {
            for c in 0..h {
                eps[[i * ft + r, c]] = eps_items[i][r * h + c];
            }
        }
    }
    let spec_v = g.constant(spec);
    let post = model.posterior.forward(g, spec_v, spk, &frame_layout, Some(eps.clone()));
    let (z_p, logdet) = model.flow.forward(g, post.z, spk, &frame_layout);

    // alignment on detached values
    let mu_p = g.value(prior.mu).clone();
    let lv_p = g.value(prior.logvar).clone();
    let zp_val = g.value(z_p).clone();
    let pt = text_layout.t_max;
    let logliks: Vec<Array2<f32>> = items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let (p, f) = (it.phonemes(), it.frames());
            prior_loglik(
                mu_p.slice(s![i * pt..i * pt + p, ..]),
                lv_p.slice(s![i * pt..i * pt + p, ..]),
                zp_val.slice(s![i * ft..i * ft + f, ..]),
            )
        })
        .collect();
    let views: Vec<_> = logliks.iter().map(|l| l.view()).collect();
    let paths: Vec<AlignmentPath> = mas_batch(&BatchedLoglik::from_items(&views)?)?;

    // KL between posterior and the aligned prior
    let mut index = vec![None; b * ft];
    for (i, path) in paths.iter().enumerate() {
        for (f, &p) in path.assignment.iter().enumerate() {
            index[i * ft + f] = Some(i * pt + p);
        }
    }
    let m_exp = gather(g, prior.mu, index.clone());
    let lv_exp = gather(g, prior.logvar, index);
    let fmask = frame_layout.mask(g);
    let kl_loss = kl_divergence(
        g,
        KlTerms {
            z_p,
            logvar_q: post.logvar,
            mu_p: m_exp,
            logvar_p: lv_exp,
            logdet,
        },
        &eps,
        fmask,
        frame_layout.valid_count(),
    );

    // durations
    let hidden = g.detach(prior.hidden);
    let dstats = model.duration.forward(g, hidden, lang, spk, &text_layout);
    let mut log_target = Array2::<f32>::zeros((b * pt, 1));
    for (i, path) in paths.iter().enumerate() {
        for (p, &d) in path.durations.iter().enumerate() {
            log_target[[i * pt + p, 0]] = (d as f32).ln();
        }
    }
    let log_target = g.constant(log_target);
    let dur_loss = duration_nll(g, dstats, log_target, &text_layout);

    // decode random segments
    let mut seg_index = Vec::with_capacity(b * seg);
    for (i, it) in items.iter().enumerate() {
        for j in 0..seg {
            let f = starts[i] + j;
            seg_index.push((f < it.frames()).then_some(i * ft + f));
        }
    }
    let z_seg = gather(g, post.z, seg_index);
    let fake = model.decoder.forward(g, z_seg, spk, b);
    let seg_samples = seg * hop;
    let mut real = Array2::<f32>::zeros((b * seg_samples, 1));
    let extractor = SpectrogramExtractor::new(&cfg.audio())?;
    let mut target_mel = Array2::<f32>::zeros((b * seg, cfg.mel_channels));
    for (i, it) in items.iter().enumerate() {
        let from = starts[i] * hop;
        let slice: Vec<f32> = (0..seg_samples).map(|k| it.audio.get(from + k).copied().unwrap_or(0.0)).collect();
        for (k, &v) in slice.iter().enumerate() {
            real[[i * seg_samples + k, 0]] = v;
        }
        let mel = extractor.mel_from_linear(&extractor.linear(&slice)?);
        target_mel.slice_mut(s![i * seg..(i + 1) * seg, ..]).assign(&mel);
    }
    let fake_mel = model.mel.forward(g, fake, b);
    let target_mel = g.constant(target_mel);
    let mel_loss = mel_l1(g, fake_mel, target_mel);

    // adversarial terms
    let real_v = g.constant(real);
    let fake_det = g.detach(fake);
    let d_real = model.discriminator.forward(g, real_v, b);
    let d_fake_det = model.discriminator.forward(g, fake_det, b);
    let d_fake = model.discriminator.forward(g, fake, b);
    let lr = squared_error_mean(g, d_real.scores, 1.0);
    let lf = squared_error_mean(g, d_fake_det.scores, 0.0);
    let adversarial_d = g.add(lr, lf);
    let adversarial_g = squared_error_mean(g, d_fake.scores, 1.0);
    let mut fm: Option<Var> = None;
    for (&r, &f) in d_real.feature_maps.iter().zip(&d_fake.feature_maps) {
        let r = g.detach(r);
        let d = g.sub(r, f);
        let a = g.abs(d);
        let m = g.mean(a);
        fm = Some(match fm {
            Some(acc) => g.add(acc, m),
            None => m,
        });
    }
    let feature_matching = fm.expect("discriminator has layers");

    let terms = [
        (mel_loss, weights.mel),
        (kl_loss, weights.kl),
        (dur_loss, weights.duration),
        (adversarial_g, weights.adversarial),
        (feature_matching, weights.feature_matching),
    ];
    let mut generator: Option<Var> = None;
    for (v, w) in terms {
        let t = g.scale(v, w);
        generator = Some(match generator {
            Some(acc) => g.add(acc, t),
            None => t,
        });
    }
    Ok(LossVars {
        mel: mel_loss,
        kl: kl_loss,
        duration: dur_loss,
        adversarial_g,
        adversarial_d,
        feature_matching,
        generator: generator.unwrap(),
    })
}
