//! Per-phoneme duration model.
//!
//! Predicts a Gaussian over log frame counts. Sampling at `noise_scale_w = 0`
//! returns the mean, so inference is deterministic in that mode.

use mmtts_tensor::nn::{Conv1d, Conv1dConfig, LayerNorm, Linear};
use mmtts_tensor::{Graph, ParamBuilder, Scalar, Var};

use super::config::ModelConfig;
use super::layers::Layout;
use crate::{Error, Result};

pub const LOG_STD_RANGE: (f64, f64) = (-5.0, 3.0);

/// `B*P x 1` mean and log standard deviation of log-duration.
#[derive(Debug, Clone, Copy)]
pub struct DurationStats {
    pub mu: Var,
    pub log_std: Var,
}

#[derive(Debug, Clone)]
pub struct DurationPredictor {
    pub pre: Linear,
    pub lang: Linear,
    pub spk: Linear,
    pub convs: Vec<Conv1d>,
    pub norms: Vec<LayerNorm>,
    pub head: Linear,
}

impl DurationPredictor {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, cfg: &ModelConfig) -> Self {
        let mut pb = pb.sub("duration");
        let f = cfg.duration_filter;
        let conv = Conv1dConfig::same(cfg.duration_kernel, 1);
        Self {
            pre: Linear::new(&mut pb, "pre", cfg.hidden_dim, f),
            lang: Linear::new(&mut pb, "lang", cfg.language_dim, f),
            spk: Linear::new(&mut pb, "spk", cfg.speaker_dim, f),
            convs: (0..2)
                .map(|i| Conv1d::new(&mut pb, &format!("conv.{i}"), f, f, cfg.duration_kernel, conv))
                .collect(),
            norms: (0..2).map(|i| LayerNorm::new(&mut pb, &format!("norm.{i}"), f)).collect(),
            head: Linear::new(&mut pb, "head", f, 2),
        }
    }

    /// `hidden` is the text encoder output; callers detach it during training
    /// so duration loss does not shape the encoder.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        hidden: Var,
        lang: Var,
        spk: Var,
        layout: &Layout,
    ) -> DurationStats {
        let mask = layout.mask(g);
        let x = self.pre.forward(g, hidden);
        let l = self.lang.forward(g, lang);
        let s = self.spk.forward(g, spk);
        let c = g.add(l, s);
        let c = layout.expand(g, c);
        let mut x = g.add(x, c);
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            let xm = g.mul(x, mask);
            let y = conv.forward_segments(g, xm, layout.batch());
            let y = g.relu(y);
            x = norm.forward(g, y);
        }
        let x = g.mul(x, mask);
        self.head_forward(g, x, mask)
    }

    /// The final projection alone, split into the two statistics.
    pub fn head_forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, mask: Var) -> DurationStats {
        let out = self.head.forward(g, x);
        let out = g.mul(out, mask);
        let mu = g.slice_cols(out, 0, 1);
        let log_std = g.slice_cols(out, 1, 1);
        let log_std = g.clamp(log_std, LOG_STD_RANGE.0, LOG_STD_RANGE.1);
        DurationStats { mu, log_std }
    }
}

/// Gaussian negative log-likelihood of `log_target` (`B*P x 1`, zero on
/// padding), averaged over valid phonemes.
pub fn duration_nll<T: Scalar>(g: &mut Graph<'_, T>, stats: DurationStats, log_target: Var, layout: &Layout) -> Var {
    let mask = layout.mask(g);
    let d = g.sub(log_target, stats.mu);
    let neg = g.neg(stats.log_std);
    let inv = g.exp(neg);
    let zd = g.mul(d, inv);
    let sq = g.square(zd);
    let half = g.scale(sq, 0.5);
    let nll = g.add(half, stats.log_std);
    let nll = g.add_scalar(nll, 0.5 * (2.0 * std::f64::consts::PI).ln());
    let nll = g.mul(nll, mask);
    let total = g.sum(nll);
    g.scale(total, 1.0 / layout.valid_count().max(1) as f64)
}

/// Frame counts from predicted statistics. `eps` is one standard normal
/// draw per phoneme; it is ignored when `noise_scale_w` is zero.
pub fn sample_durations(
    mu: &[f64],
    log_std: &[f64],
    eps: &[f64],
    noise_scale_w: f64,
    length_scale: f64,
) -> Result<Vec<usize>> {
    mu.iter()
        .zip(log_std)
        .zip(eps)
        .map(|((&m, &ls), &e)| {
            let logw = if noise_scale_w == 0.0 { m } else { m + ls.exp() * e * noise_scale_w };
            let frames = (logw.exp() * length_scale).ceil();
            if !frames.is_finite() {
                return Err(Error::NonFinite(format!("duration {frames}")));
            }
            Ok((frames as usize).max(1))
        })
        .collect()
}
