use mmtts_tensor::nn::{Embedding, Linear};
use mmtts_tensor::{Graph, ParamBuilder, Scalar, Var};

use super::config::ModelConfig;
use super::layers::{EncoderBlock, Layout};
use crate::context::{self, ContextFusion};
use crate::Result;

/// Prior statistics over phonemes, all `B*P x H` and masked.
#[derive(Debug, Clone, Copy)]
pub struct PriorStats {
    pub mu: Var,
    pub logvar: Var,
    pub hidden: Var,
}

#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub embedding: Embedding,
    pub fusion: Option<ContextFusion>,
    pub lang_proj: Linear,
    pub spk_proj: Linear,
    pub blocks: Vec<EncoderBlock>,
    pub proj: Linear,
    hidden: usize,
    logvar_range: (f64, f64),
}

impl TextEncoder {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, cfg: &ModelConfig, n_symbols: usize) -> Self {
        let mut pb = pb.sub("text_encoder");
        let h = cfg.hidden_dim;
        let blocks = (0..cfg.n_encoder_blocks)
            .map(|i| EncoderBlock::new(&mut pb, &format!("block.{i}"), h, cfg.filter_dim, cfg.n_heads, cfg.encoder_kernel))
            .collect();
        Self {
            embedding: Embedding::new(&mut pb, "embedding", n_symbols, h),
            fusion: cfg.use_context.then(|| ContextFusion::new(&mut pb, cfg.context_dim, h)),
            lang_proj: Linear::new(&mut pb, "lang_proj", cfg.language_dim, h),
            spk_proj: Linear::new(&mut pb, "spk_proj", cfg.speaker_dim, h),
            blocks,
            proj: Linear::new(&mut pb, "proj", h, 2 * h),
            hidden: h,
            logvar_range: (cfg.logvar_min, cfg.logvar_max),
        }
    }

    /// `ids` is the padded `B*P` id list; `context` (if any) is `B*P x D`;
    /// `lang` and `spk` are per-item `B x D` condition vectors.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        ids: &[usize],
        context: Option<Var>,
        lang: Var,
        spk: Var,
        layout: &Layout,
    ) -> Result<PriorStats> {
        let h = self.hidden;
        let mask = layout.mask(g);
        let x = self.embedding.forward(g, ids);
        let x = g.scale(x, (h as f64).sqrt());
        let x = context::fuse(self.fusion.as_ref(), g, x, context)?;
        let l = self.lang_proj.forward(g, lang);
        let s = self.spk_proj.forward(g, spk);
        let cond = g.add(l, s);
        let cond = layout.expand(g, cond);
        let x = g.add(x, cond);
        let mut x = g.mul(x, mask);
        for block in &self.blocks {
            x = block.forward(g, x, mask, layout);
        }
        let hidden = g.mul(x, mask);
        let stats = self.proj.forward(g, hidden);
        let stats = g.mul(stats, mask);
        let mu = g.slice_cols(stats, 0, h);
        let logvar = g.slice_cols(stats, h, h);
        let logvar = g.clamp(logvar, self.logvar_range.0, self.logvar_range.1);
        Ok(PriorStats { mu, logvar, hidden })
    }
}
