use mmtts_tensor::nn::Linear;
use mmtts_tensor::{Graph, ParamBuilder, Scalar, Var};
use ndarray::Array2;

use super::config::ModelConfig;
use super::layers::{Layout, WaveNet};

/// Posterior sample and its statistics, `B*F x H`.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorSample {
    pub z: Var,
    pub mu: Var,
    pub logvar: Var,
}

#[derive(Debug, Clone)]
pub struct PosteriorEncoder {
    pub pre: Linear,
    pub wn: WaveNet,
    pub proj: Linear,
    hidden: usize,
    logvar_range: (f64, f64),
}

impl PosteriorEncoder {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, cfg: &ModelConfig) -> Self {
        let mut pb = pb.sub("posterior");
        let h = cfg.hidden_dim;
        Self {
            pre: Linear::new(&mut pb, "pre", cfg.linear_bins(), h),
            wn: WaveNet::new(&mut pb, "wn", h, cfg.posterior_kernel, cfg.posterior_layers, cfg.speaker_dim),
            proj: Linear::new(&mut pb, "proj", h, 2 * h),
            hidden: h,
            logvar_range: (cfg.logvar_min, cfg.logvar_max),
        }
    }

    /// `spec` is the padded `B*F x bins` linear spectrogram. `eps` holds the
    /// standard normal draws (zero on padding); `None` returns `z = mu`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        spec: Var,
        spk: Var,
        layout: &Layout,
        eps: Option<Array2<T>>,
    ) -> PosteriorSample {
        let h = self.hidden;
        let mask = layout.mask(g);
        let x = self.pre.forward(g, spec);
        let x = g.mul(x, mask);
        let x = self.wn.forward(g, x, mask, spk, layout);
        let stats = self.proj.forward(g, x);
        let stats = g.mul(stats, mask);
        let mu = g.slice_cols(stats, 0, h);
        let logvar = g.slice_cols(stats, h, h);
        let logvar = g.clamp(logvar, self.logvar_range.0, self.logvar_range.1);
        let z = match eps {
            Some(eps) => {
                let half = g.scale(logvar, 0.5);
                let std = g.exp(half);
                let e = g.constant(eps);
                let noise = g.mul(std, e);
                let z = g.add(mu, noise);
                g.mul(z, mask)
            }
            None => mu,
        };
        PosteriorSample { z, mu, logvar }
    }
}
