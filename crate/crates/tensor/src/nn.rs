//! Layers built on [`Graph`] primitives. All inputs are time-major
//! (`rows = time`, `cols = channels`).

use std::rc::Rc;

use crate::{Graph, ParamBuilder, ParamId, Scalar, Var};

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let mut pb = pb.sub(name);
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self {
            weight: pb.uniform("weight", (in_dim, out_dim), bound),
            bias: Some(pb.uniform("bias", (1, out_dim), bound)),
            in_dim,
            out_dim,
        }
    }

    pub fn no_bias<T: Scalar>(pb: &mut ParamBuilder<'_, T>, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let mut pb = pb.sub(name);
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self {
            weight: pb.uniform("weight", (in_dim, out_dim), bound),
            bias: None,
            in_dim,
            out_dim,
        }
    }

    /// Weight and bias start at exactly zero.
    pub fn zeros<T: Scalar>(pb: &mut ParamBuilder<'_, T>, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let mut pb = pb.sub(name);
        Self {
            weight: pb.zeros("weight", (in_dim, out_dim)),
            bias: Some(pb.zeros("bias", (1, out_dim))),
            in_dim,
            out_dim,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Var {
        let w = g.param(self.weight);
        let y = g.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add(y, b)
            }
            None => y,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Conv1dConfig {
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl Conv1dConfig {
    /// Stride 1 with symmetric padding that preserves length (odd kernels).
    pub fn same(kernel: usize, dilation: usize) -> Self {
        Self {
            stride: 1,
            dilation,
            padding: dilation * (kernel - 1) / 2,
        }
    }
}

/// 1-D convolution as im2col gather plus matmul.
///
/// Weight layout is `(kernel * in_channels, out_channels)` with row index
/// `k * in_channels + c`.
#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub cfg: Conv1dConfig,
}

impl Conv1d {
    pub fn new<T: Scalar>(
        pb: &mut ParamBuilder<'_, T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        cfg: Conv1dConfig,
    ) -> Self {
        let mut pb = pb.sub(name);
        let bound = 1.0 / ((kernel * in_channels) as f64).sqrt();
        Self {
            weight: pb.uniform("weight", (kernel * in_channels, out_channels), bound),
            bias: pb.uniform("bias", (1, out_channels), bound),
            in_channels,
            out_channels,
            kernel,
            cfg,
        }
    }

    pub fn zeros<T: Scalar>(
        pb: &mut ParamBuilder<'_, T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        cfg: Conv1dConfig,
    ) -> Self {
        let mut pb = pb.sub(name);
        Self {
            weight: pb.zeros("weight", (kernel * in_channels, out_channels)),
            bias: pb.zeros("bias", (1, out_channels)),
            in_channels,
            out_channels,
            kernel,
            cfg,
        }
    }

    pub fn output_len(&self, len: usize) -> usize {
        conv_output_len(len, self.kernel, self.cfg)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Var {
        self.forward_segments(g, x, 1)
    }

    /// Convolves `segments` equal-length blocks of rows independently, each
    /// zero padded at its own edges. Output blocks are stacked the same way.
    pub fn forward_segments<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, segments: usize) -> Var {
        let ch = g.cols(x);
        assert_eq!(ch, self.in_channels, "conv input channels");
        let cols = im2col_segments(g, x, self.kernel, self.cfg, segments);
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(cols, w);
        g.add(y, b)
    }
}

pub fn conv_output_len(len: usize, kernel: usize, cfg: Conv1dConfig) -> usize {
    let span = cfg.dilation * (kernel - 1) + 1;
    let padded = len + 2 * cfg.padding;
    if padded < span {
        0
    } else {
        (padded - span) / cfg.stride + 1
    }
}

/// Unfolds `x` (T x C) into `(T_out, kernel * C)` patches with zero padding.
pub fn im2col<T: Scalar>(g: &mut Graph<'_, T>, x: Var, kernel: usize, cfg: Conv1dConfig) -> Var {
    im2col_segments(g, x, kernel, cfg, 1)
}

/// [`im2col`] applied to each of `segments` stacked blocks of rows.
pub fn im2col_segments<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: Var,
    kernel: usize,
    cfg: Conv1dConfig,
    segments: usize,
) -> Var {
    let (rows, ch) = g.shape(x);
    assert!(segments > 0 && rows % segments == 0, "{rows} rows do not split into {segments} segments");
    let len = rows / segments;
    let out_len = conv_output_len(len, kernel, cfg);
    let mut index = Vec::with_capacity(segments * out_len * kernel);
    for s in 0..segments {
        for t in 0..out_len {
            for k in 0..kernel {
                let pos = (t * cfg.stride + k * cfg.dilation) as isize - cfg.padding as isize;
                index.push(if pos >= 0 && (pos as usize) < len {
                    Some(s * len + pos as usize)
                } else {
                    None
                });
            }
        }
    }
    let index: Rc<[Option<usize>]> = index.into();
    let gathered = g.gather_rows(x, index);
    g.reshape(gathered, segments * out_len, kernel * ch)
}

/// Layer normalization over the channel axis of each row.
#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, name: &str, dim: usize) -> Self {
        let mut pb = pb.sub(name);
        Self {
            gamma: pb.ones("gamma", (1, dim)),
            beta: pb.zeros("beta", (1, dim)),
            dim,
            eps: 1e-5,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Var {
        let inv_dim = 1.0 / self.dim as f64;
        let sum = g.sum_cols(x);
        let mean = g.scale(sum, inv_dim);
        let centered = g.sub(x, mean);
        let sq = g.square(centered);
        let var = g.sum_cols(sq);
        let var = g.scale(var, inv_dim);
        let var = g.add_scalar(var, self.eps);
        let std = g.sqrt(var);
        let normed = g.div(centered, std);
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        let y = g.mul(normed, gamma);
        g.add(y, beta)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Embedding {
    pub table: ParamId,
    pub count: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, name: &str, count: usize, dim: usize) -> Self {
        let mut pb = pb.sub(name);
        Self {
            table: pb.normal("table", (count, dim), (dim as f64).powf(-0.5)),
            count,
            dim,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, ids: &[usize]) -> Var {
        let table = g.param(self.table);
        g.select_rows(table, ids)
    }
}
