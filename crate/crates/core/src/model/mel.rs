//! Log-mel spectrogram as graph operations, so mel loss reaches the decoder.
//!
//! Framing and filterbank match [`SpectrogramExtractor`]; the DFT is a pair
//! of matmuls with window-folded cosine and sine tables.
//!
//! [`SpectrogramExtractor`]: crate::data::SpectrogramExtractor

use mmtts_tensor::{Graph, Scalar, Var};
use ndarray::Array2;

use super::layers::{cast, gather};
use crate::data::{hann_window, mel_filterbank, reflect_index, AudioConfig, MEL_FLOOR};

/// Added under the square root so the magnitude has a finite gradient at 0.
const MAG_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct GraphMel {
    cfg: AudioConfig,
    cos: Array2<f32>,
    sin: Array2<f32>,
    filterbank: Array2<f32>,
}

impl GraphMel {
    pub fn new(cfg: &AudioConfig) -> Self {
        let n = cfg.n_fft;
        let bins = cfg.n_bins();
        let window = hann_window(n, cfg.win_length);
        let table = |f: fn(f64) -> f64| {
            Array2::from_shape_fn((n, bins), |(i, k)| {
                let angle = 2.0 * std::f64::consts::PI * ((i * k) % n) as f64 / n as f64;
                (window[i] * f(angle)) as f32
            })
        };
        Self {
            cfg: cfg.clone(),
            cos: table(f64::cos),
            sin: table(f64::sin),
            filterbank: mel_filterbank(cfg),
        }
    }

    pub fn config(&self) -> &AudioConfig {
        &self.cfg
    }

    /// `wav` holds `segments` equal blocks of samples (`segments*N x 1`).
    /// Returns `segments*F x mel_channels` log-mel frames.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, wav: Var, segments: usize) -> Var {
        let n = g.rows(wav) / segments;
        let (n_fft, hop, pad) = (self.cfg.n_fft, self.cfg.hop_length, self.cfg.pad());
        let frames = self.cfg.frame_count(n);
        let mut index = Vec::with_capacity(segments * frames * n_fft);
        for s in 0..segments {
            for f in 0..frames {
                for i in 0..n_fft {
                    index.push(Some(s * n + reflect_index((f * hop + i) as isize - pad as isize, n)));
                }
            }
        }
        let framed = gather(g, wav, index);
        let framed = g.reshape(framed, segments * frames, n_fft);
        let cos = g.constant(cast(&self.cos));
        let sin = g.constant(cast(&self.sin));
        let fb = g.constant(cast(&self.filterbank));
        let re = g.matmul(framed, cos);
        let im = g.matmul(framed, sin);
        let re2 = g.square(re);
        let im2 = g.square(im);
        let power = g.add(re2, im2);
        let power = g.add_scalar(power, MAG_EPS);
        let mag = g.sqrt(power);
        let mel = g.matmul(mag, fb);
        let mel = g.clamp(mel, MEL_FLOOR as f64, f64::INFINITY);
        g.log(mel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SpectrogramExtractor;

    #[test]
    fn agrees_with_fft_extractor() {
        let cfg = AudioConfig {
            n_fft: 256,
            win_length: 256,
            hop_length: 64,
            mel_channels: 20,
            ..AudioConfig::default()
        };
        let n = 64 * 8;
        let samples: Vec<f32> = (0..n).map(|i| (0.05 * i as f32).sin() * 0.3 + (0.31 * i as f32).cos() * 0.1).collect();
        let ext = SpectrogramExtractor::new(&cfg).unwrap();
        let want = ext.mel_from_linear(&ext.linear(&samples).unwrap());
        let gm = GraphMel::new(&cfg);
        let mut g = Graph::<f64>::detached();
        let wav = g.constant(Array2::from_shape_fn((n, 1), |(i, _)| samples[i] as f64));
        let got = gm.forward(&mut g, wav, 1);
        let got = g.value(got);
        assert_eq!(got.dim(), want.dim());
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((*a - *b as f64).abs() < 1e-3, "{a} vs {b}");
        }
    }
}
