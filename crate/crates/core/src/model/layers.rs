//! Building blocks shared by the generator modules.
//!
//! Batches are stacked time-major: item `b` occupies rows
//! `b * t_max .. (b + 1) * t_max`, with rows past its length zeroed by the
//! mask.

use std::rc::Rc;

use mmtts_tensor::nn::{Conv1d, Conv1dConfig, LayerNorm, Linear};
use mmtts_tensor::{Graph, ParamBuilder, Scalar, Var};
use ndarray::Array2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub t_max: usize,
    pub lengths: Vec<usize>,
}

impl Layout {
    pub fn new(lengths: Vec<usize>, t_max: usize) -> Self {
        assert!(lengths.iter().all(|&l| l <= t_max), "length exceeds t_max");
        Self { t_max, lengths }
    }

    pub fn tight(lengths: Vec<usize>) -> Self {
        let t_max = lengths.iter().copied().max().unwrap_or(0);
        Self { t_max, lengths }
    }

    pub fn batch(&self) -> usize {
        self.lengths.len()
    }

    pub fn rows(&self) -> usize {
        self.batch() * self.t_max
    }

    pub fn mask_array<T: Scalar>(&self) -> Array2<T> {
        Array2::from_shape_fn((self.rows(), 1), |(r, _)| {
            if r % self.t_max < self.lengths[r / self.t_max] {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    /// `rows x 1` mask constant.
    pub fn mask<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Var {
        g.constant(self.mask_array())
    }

    /// Repeats row `b` of a `batch x C` node over item `b`'s rows.
    pub fn expand<T: Scalar>(&self, g: &mut Graph<'_, T>, per_item: Var) -> Var {
        let index: Vec<usize> = (0..self.rows()).map(|r| r / self.t_max).collect();
        g.select_rows(per_item, &index)
    }

    pub fn valid_count(&self) -> usize {
        self.lengths.iter().sum()
    }
}

pub const LRELU_SLOPE: f64 = 0.1;

/// Multi-head self-attention with padded keys excluded.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, name: &str, dim: usize, heads: usize) -> Self {
        let mut pb = pb.sub(name);
        Self {
            q: Linear::new(&mut pb, "q", dim, dim),
            k: Linear::new(&mut pb, "k", dim, dim),
            v: Linear::new(&mut pb, "v", dim, dim),
            o: Linear::new(&mut pb, "o", dim, dim),
            heads,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, layout: &Layout) -> Var {
        let dim = g.cols(x);
        let dh = dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.q.forward(g, x);
        let k = self.k.forward(g, x);
        let v = self.v.forward(g, x);
        let t = layout.t_max;
        let mut items = Vec::with_capacity(layout.batch());
        for (b, &len) in layout.lengths.iter().enumerate() {
            let key_mask = g.constant(Array2::from_shape_fn((1, t), |(_, j)| {
                if j < len {
                    T::zero()
                } else {
                    T::neg_infinity()
                }
            }));
            let (qb, kb, vb) = (g.slice_rows(q, b * t, t), g.slice_rows(k, b * t, t), g.slice_rows(v, b * t, t));
            let mut heads = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let qh = g.slice_cols(qb, h * dh, dh);
                let kh = g.slice_cols(kb, h * dh, dh);
                let vh = g.slice_cols(vb, h * dh, dh);
                let kt = g.transpose(kh);
                let scores = g.matmul(qh, kt);
                let scores = g.scale(scores, scale);
                let scores = g.add(scores, key_mask);
                let attn = g.softmax_rows(scores);
                heads.push(g.matmul(attn, vh));
            }
            items.push(if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) });
        }
        let y = if items.len() == 1 { items[0] } else { g.concat_rows(&items) };
        self.o.forward(g, y)
    }
}

/// Conv -> ReLU -> conv, masked before each conv and at the end.
#[derive(Debug, Clone)]
pub struct ConvFfn {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
}

impl ConvFfn {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, name: &str, dim: usize, filter: usize, kernel: usize) -> Self {
        let mut pb = pb.sub(name);
        let cfg = Conv1dConfig::same(kernel, 1);
        Self {
            conv1: Conv1d::new(&mut pb, "conv1", dim, filter, kernel, cfg),
            conv2: Conv1d::new(&mut pb, "conv2", filter, dim, kernel, cfg),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, mask: Var, segments: usize) -> Var {
        let x = g.mul(x, mask);
        let h = self.conv1.forward_segments(g, x, segments);
        let h = g.relu(h);
        let h = g.mul(h, mask);
        let y = self.conv2.forward_segments(g, h, segments);
        g.mul(y, mask)
    }
}

/// Post-norm transformer block.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ffn: ConvFfn,
    pub norm2: LayerNorm,
}

impl EncoderBlock {
    pub fn new<T: Scalar>(
        pb: &mut ParamBuilder<'_, T>,
        name: &str,
        dim: usize,
        filter: usize,
        heads: usize,
        kernel: usize,
    ) -> Self {
        let mut pb = pb.sub(name);
        Self {
            attn: MultiHeadAttention::new(&mut pb, "attn", dim, heads),
            norm1: LayerNorm::new(&mut pb, "norm1", dim),
            ffn: ConvFfn::new(&mut pb, "ffn", dim, filter, kernel),
            norm2: LayerNorm::new(&mut pb, "norm2", dim),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, mask: Var, layout: &Layout) -> Var {
        let y = self.attn.forward(g, x, layout);
        let x = g.add(x, y);
        let x = self.norm1.forward(g, x);
        let y = self.ffn.forward(g, x, mask, layout.batch());
        let x = g.add(x, y);
        self.norm2.forward(g, x)
    }
}

/// Gated dilated-conv stack with global conditioning and skip sum.
#[derive(Debug, Clone)]
pub struct WaveNet {
    pub in_layers: Vec<Conv1d>,
    pub res_skip: Vec<Linear>,
    pub cond: Linear,
    pub hidden: usize,
}

impl WaveNet {
    pub fn new<T: Scalar>(
        pb: &mut ParamBuilder<'_, T>,
        name: &str,
        hidden: usize,
        kernel: usize,
        layers: usize,
        cond_dim: usize,
    ) -> Self {
        let mut pb = pb.sub(name);
        let mut in_layers = Vec::with_capacity(layers);
        let mut res_skip = Vec::with_capacity(layers);
        for i in 0..layers {
            // dilation rate 1 keeps short desk clips inside the receptive field
            in_layers.push(Conv1d::new(&mut pb, &format!("in.{i}"), hidden, 2 * hidden, kernel, Conv1dConfig::same(kernel, 1)));
            let out = if i + 1 < layers { 2 * hidden } else { hidden };
            res_skip.push(Linear::new(&mut pb, &format!("res_skip.{i}"), hidden, out));
        }
        Self {
            cond: Linear::new(&mut pb, "cond", cond_dim, 2 * hidden * layers),
            in_layers,
            res_skip,
            hidden,
        }
    }

    /// `cond` is `batch x cond_dim`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, mask: Var, cond: Var, layout: &Layout) -> Var {
        let h = self.hidden;
        let c = self.cond.forward(g, cond);
        let c = layout.expand(g, c);
        let mut x = x;
        let mut skip: Option<Var> = None;
        let n = self.in_layers.len();
        for i in 0..n {
            let xi = self.in_layers[i].forward_segments(g, x, layout.batch());
            let ci = g.slice_cols(c, 2 * h * i, 2 * h);
            let a = g.add(xi, ci);
            let ta = g.slice_cols(a, 0, h);
            let sa = g.slice_cols(a, h, h);
            let t = g.tanh(ta);
            let s = g.sigmoid(sa);
            let acts = g.mul(t, s);
            let rs = self.res_skip[i].forward(g, acts);
            let skip_part = if i + 1 < n {
                let res = g.slice_cols(rs, 0, h);
                let xr = g.add(x, res);
                x = g.mul(xr, mask);
                g.slice_cols(rs, h, h)
            } else {
                rs
            };
            skip = Some(match skip {
                Some(s) => g.add(s, skip_part),
                None => skip_part,
            });
        }
        let out = skip.expect("at least one layer");
        g.mul(out, mask)
    }
}

/// Gathers rows by `index` (None gives a zero row).
pub fn gather<T: Scalar>(g: &mut Graph<'_, T>, x: Var, index: Vec<Option<usize>>) -> Var {
    let index: Rc<[Option<usize>]> = index.into();
    g.gather_rows(x, index)
}

/// Converts an `f32` array into the graph's scalar type.
pub fn cast<T: Scalar>(a: &Array2<f32>) -> Array2<T> {
    a.mapv(|v| T::lit(v as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmtts_tensor::ParamStore;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn attention_ignores_padded_keys() {
        let mut store = ParamStore::<f64>::new();
        let attn = MultiHeadAttention::new(&mut ParamBuilder::new(&mut store, 1), "a", 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::from_shape_fn((5, 8), |_| rng.random_range(-1.0..1.0));
        let mut padded = Array2::from_shape_fn((7, 8), |_| rng.random_range(-9.0..9.0));
        padded.slice_mut(ndarray::s![..5, ..]).assign(&x);
        let mut g = Graph::new(&store);
        let xv = g.constant(x);
        let pv = g.constant(padded);
        let a = attn.forward(&mut g, xv, &Layout::tight(vec![5]));
        let b = attn.forward(&mut g, pv, &Layout::new(vec![5], 7));
        let (a, b) = (g.value(a).clone(), g.value(b).clone());
        for r in 0..5 {
            for c in 0..8 {
                assert!((a[[r, c]] - b[[r, c]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expand_and_mask() {
        let layout = Layout::new(vec![2, 3], 3);
        let m = layout.mask_array::<f32>();
        assert_eq!(m.column(0).to_vec(), vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
        let store = ParamStore::<f32>::new();
        let mut g = Graph::new(&store);
        let per = g.constant(ndarray::array![[1.0f32], [2.0]]);
        let e = layout.expand(&mut g, per);
        assert_eq!(g.value(e).column(0).to_vec(), vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    }
}
