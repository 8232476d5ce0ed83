//! Latent frames to waveform.
//!
//! A residual conv stack runs at frame rate and predicts, per frame, a log
//! magnitude and a phase for every STFT bin. The waveform is the windowed
//! inverse DFT of those spectra, overlap-added on the same frame grid the
//! analysis STFT uses and normalized by the summed squared window.

use mmtts_tensor::nn::{Conv1d, Conv1dConfig, Linear};
use mmtts_tensor::{Graph, ParamBuilder, Scalar, Var};
use ndarray::Array2;

use super::config::ModelConfig;
use super::layers::{cast, gather, Layout, LRELU_SLOPE};
use crate::data::{hann_window, AudioConfig};

/// Upper clamp on predicted log magnitudes.
const MAX_LOG_MAG: f64 = 8.0;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Constant tables for the inverse STFT.
#[derive(Debug, Clone)]
struct Synthesis {
    n_fft: usize,
    hop: usize,
    pad: usize,
    bins: usize,
    /// `bins x n_fft`, window and inverse-DFT scaling folded in.
    cos: Array2<f32>,
    sin: Array2<f32>,
    window_sq: Vec<f64>,
}

impl Synthesis {
    fn new(audio: &AudioConfig) -> Self {
        let n = audio.n_fft;
        let bins = audio.n_bins();
        let window = hann_window(n, audio.win_length);
        let table = |f: fn(f64) -> f64, sign: f64| {
            Array2::from_shape_fn((bins, n), |(k, i)| {
                let weight = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
                let angle = 2.0 * std::f64::consts::PI * ((i * k) % n) as f64 / n as f64;
                (sign * window[i] * weight * f(angle) / n as f64) as f32
            })
        };
        Self {
            n_fft: n,
            hop: audio.hop_length,
            pad: audio.pad(),
            bins,
            cos: table(f64::cos, 1.0),
            sin: table(f64::sin, -1.0),
            window_sq: window.iter().map(|w| w * w).collect(),
        }
    }

    /// Overlap-add plan for one segment of `frames` frames: for each output
    /// chunk, the `(frame, chunk-in-frame)` pairs that cover it.
    fn plan(&self, frames: usize) -> (usize, Vec<Vec<(usize, usize)>>) {
        let q = gcd(self.hop, self.pad);
        let (per_frame, per_hop, offset) = (self.n_fft / q, self.hop / q, self.pad / q);
        let chunks = (0..frames * per_hop)
            .map(|c| {
                (0..frames)
                    .filter_map(|f| {
                        let k = (c + offset).checked_sub(f * per_hop)?;
                        (k < per_frame).then_some((f, k))
                    })
                    .collect()
            })
            .collect();
        (q, chunks)
    }

    /// `spec_re`, `spec_im`: `segments*frames x bins`. Returns
    /// `segments*frames*hop x 1` samples before the output nonlinearity.
    fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, re: Var, im: Var, segments: usize) -> Var {
        let rows = g.rows(re);
        let frames = rows / segments;
        let cos = g.constant(cast(&self.cos));
        let sin = g.constant(cast(&self.sin));
        let a = g.matmul(re, cos);
        let b = g.matmul(im, sin);
        let framed = g.add(a, b);
        let (q, plan) = self.plan(frames);
        let per_frame = self.n_fft / q;
        let chunked = g.reshape(framed, rows * per_frame, q);
        let depth = plan.iter().map(Vec::len).max().unwrap_or(0);
        let mut inv_env = Array2::<f32>::zeros((segments * plan.len(), q));
        for s in 0..segments {
            for (c, pairs) in plan.iter().enumerate() {
                for i in 0..q {
                    let e: f64 = pairs.iter().map(|&(_, k)| self.window_sq[k * q + i]).sum();
                    inv_env[[s * plan.len() + c, i]] = if e > 1e-8 { (1.0 / e) as f32 } else { 0.0 };
                }
            }
        }
        let mut out: Option<Var> = None;
        for j in 0..depth {
            let mut index = Vec::with_capacity(segments * plan.len());
            for s in 0..segments {
                for pairs in &plan {
                    index.push(pairs.get(j).map(|&(f, k)| (s * frames + f) * per_frame + k));
                }
            }
            let part = gather(g, chunked, index);
            out = Some(match out {
                Some(acc) => g.add(acc, part),
                None => part,
            });
        }
        let summed = out.expect("at least one frame");
        let inv = g.constant(cast(&inv_env));
        let y = g.mul(summed, inv);
        g.reshape(y, rows * self.hop, 1)
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub pre: Conv1d,
    pub cond: Linear,
    /// Per dilation: a dilated conv followed by an undilated one.
    pub resblocks: Vec<(Conv1d, Conv1d)>,
    /// Maps hidden channels to `[log magnitude | phase]` per bin. All-zero
    /// output is a unit impulse at each frame start, where the window is
    /// zero, so a zeroed layer is silent.
    pub post: Linear,
    synthesis: Synthesis,
}

impl Decoder {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, cfg: &ModelConfig) -> Self {
        let mut pb = pb.sub("decoder");
        let c = cfg.decoder_channels;
        let k = cfg.resblock_kernel;
        let resblocks = cfg
            .resblock_dilations
            .iter()
            .enumerate()
            .map(|(j, &d)| {
                (
                    Conv1d::new(&mut pb, &format!("res.{j}.0"), c, c, k, Conv1dConfig::same(k, d)),
                    Conv1d::new(&mut pb, &format!("res.{j}.1"), c, c, k, Conv1dConfig::same(k, 1)),
                )
            })
            .collect();
        let synthesis = Synthesis::new(&cfg.audio());
        let mut post_pb = pb.sub("post");
        let post = Linear {
            weight: post_pb.normal("weight", (c, 2 * synthesis.bins), 0.01),
            bias: Some(post_pb.zeros("bias", (1, 2 * synthesis.bins))),
            in_dim: c,
            out_dim: 2 * synthesis.bins,
        };
        Self {
            pre: Conv1d::new(&mut pb, "pre", cfg.hidden_dim, c, 7, Conv1dConfig::same(7, 1)),
            cond: Linear::new(&mut pb, "cond", cfg.speaker_dim, c),
            resblocks,
            post,
            synthesis,
        }
    }

    pub fn hop(&self) -> usize {
        self.synthesis.hop
    }

    /// `z` holds `segments` equal blocks of latent frames (`segments*S x H`);
    /// `spk` is `segments x D`. Output is `segments*S*hop x 1` in `[-1, 1]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, z: Var, spk: Var, segments: usize) -> Var {
        let rows = g.rows(z);
        let frames = rows / segments;
        let layout = Layout::new(vec![frames; segments], frames);
        let x = self.pre.forward_segments(g, z, segments);
        let c = self.cond.forward(g, spk);
        let c = layout.expand(g, c);
        let mut x = g.add(x, c);
        for (dilated, plain) in &self.resblocks {
            let h = g.leaky_relu(x, LRELU_SLOPE);
            let h = dilated.forward_segments(g, h, segments);
            let h = g.leaky_relu(h, LRELU_SLOPE);
            let h = plain.forward_segments(g, h, segments);
            x = g.add(x, h);
        }
        let x = g.leaky_relu(x, LRELU_SLOPE);
        let out = self.post.forward(g, x);
        let bins = self.synthesis.bins;
        let log_mag = g.slice_cols(out, 0, bins);
        let phase = g.slice_cols(out, bins, bins);
        let log_mag = g.clamp(log_mag, f64::NEG_INFINITY, MAX_LOG_MAG);

        let mag = g.exp(log_mag);
        let cos = g.cos(phase);
        let sin = g.sin(phase);
        let re = g.mul(mag, cos);
        let im = g.mul(mag, sin);
        let wav = self.synthesis.forward(g, re, im, segments);
        g.tanh(wav)
    }
}
