//! Invertible stack of affine coupling layers.

use mmtts_tensor::nn::Linear;
use mmtts_tensor::{Graph, ParamBuilder, Scalar, Var};

use super::config::ModelConfig;
use super::layers::{Layout, WaveNet};

/// One coupling: half the channels condition an affine map of the other
/// half. Even layers transform the upper half, odd layers the lower half.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub pre: Linear,
    pub wn: WaveNet,
    pub post: Linear,
    pub half: usize,
    pub transform_upper: bool,
}

impl Coupling {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, name: &str, cfg: &ModelConfig, transform_upper: bool) -> Self {
        let mut pb = pb.sub(name);
        let h = cfg.hidden_dim;
        let half = h / 2;
        Self {
            pre: Linear::new(&mut pb, "pre", half, h),
            wn: WaveNet::new(&mut pb, "wn", h, cfg.flow_kernel, cfg.flow_wn_layers, cfg.speaker_dim),
            // zero init makes the layer start as the identity
            post: Linear::zeros(&mut pb, "post", h, 2 * half),
            half,
            transform_upper,
        }
    }

    fn split<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> (Var, Var) {
        let lo = g.slice_cols(x, 0, self.half);
        let hi = g.slice_cols(x, self.half, self.half);
        if self.transform_upper {
            (lo, hi)
        } else {
            (hi, lo)
        }
    }

    fn join<T: Scalar>(&self, g: &mut Graph<'_, T>, cond: Var, moved: Var) -> Var {
        if self.transform_upper {
            g.concat_cols(&[cond, moved])
        } else {
            g.concat_cols(&[moved, cond])
        }
    }

    fn shift_scale<T: Scalar>(&self, g: &mut Graph<'_, T>, cond: Var, mask: Var, spk: Var, layout: &Layout) -> (Var, Var) {
        let h = self.pre.forward(g, cond);
        let h = g.mul(h, mask);
        let h = self.wn.forward(g, h, mask, spk, layout);
        let st = self.post.forward(g, h);
        let st = g.mul(st, mask);
        (g.slice_cols(st, 0, self.half), g.slice_cols(st, self.half, self.half))
    }

    /// Returns the output and the per-row log-determinant (`rows x 1`).
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, mask: Var, spk: Var, layout: &Layout) -> (Var, Var) {
        let (cond, moved) = self.split(g, x);
        let (m, logs) = self.shift_scale(g, cond, mask, spk, layout);
        let scale = g.exp(logs);
        let y = g.mul(moved, scale);
        let y = g.add(y, m);
        let y = g.mul(y, mask);
        let logdet = g.sum_cols(logs);
        (self.join(g, cond, y), logdet)
    }

    pub fn inverse<T: Scalar>(&self, g: &mut Graph<'_, T>, y: Var, mask: Var, spk: Var, layout: &Layout) -> Var {
        let (cond, moved) = self.split(g, y);
        let (m, logs) = self.shift_scale(g, cond, mask, spk, layout);
        let d = g.sub(moved, m);
        let neg = g.neg(logs);
        let inv = g.exp(neg);
        let x = g.mul(d, inv);
        let x = g.mul(x, mask);
        self.join(g, cond, x)
    }
}

#[derive(Debug, Clone)]
pub struct Flow {
    pub layers: Vec<Coupling>,
}

impl Flow {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, cfg: &ModelConfig) -> Self {
        let mut pb = pb.sub("flow");
        Self {
            layers: (0..cfg.flow_layers)
                .map(|i| Coupling::new(&mut pb, &format!("coupling.{i}"), cfg, i % 2 == 0))
                .collect(),
        }
    }

    /// Posterior latent to prior space. Log-determinant is summed per row.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, z: Var, spk: Var, layout: &Layout) -> (Var, Var) {
        let mask = layout.mask(g);
        let mut x = z;
        let mut total: Option<Var> = None;
        for layer in &self.layers {
            let (y, ld) = layer.forward(g, x, mask, spk, layout);
            x = y;
            total = Some(match total {
                Some(t) => g.add(t, ld),
                None => ld,
            });
        }
        let logdet = match total {
            Some(t) => t,
            None => g.constant(ndarray::Array2::zeros((layout.rows(), 1))),
        };
        (x, logdet)
    }

    pub fn inverse<T: Scalar>(&self, g: &mut Graph<'_, T>, z_p: Var, spk: Var, layout: &Layout) -> Var {
        let mask = layout.mask(g);
        let mut x = z_p;
        for layer in self.layers.iter().rev() {
            x = layer.inverse(g, x, mask, spk, layout);
        }
        x
    }
}
