//! STFT magnitudes and log-mel features.
//!
//! Frames are taken after reflect-padding `(n_fft - hop) / 2` samples on
//! both sides without further centering, so a clip of `n` samples has
//! `1 + (n - hop) / hop` frames and a clip of `k * hop` samples has exactly
//! `k`.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Log floor applied to mel energies.
pub const MEL_FLOOR: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop_length: usize,
    pub win_length: usize,
    pub mel_channels: usize,
    pub mel_fmin: f64,
    pub mel_fmax: Option<f64>,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            n_fft: 1024,
            hop_length: 256,
            win_length: 1024,
            mel_channels: 80,
            mel_fmin: 0.0,
            mel_fmax: None,
        }
    }
}

impl AudioConfig {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn pad(&self) -> usize {
        (self.n_fft - self.hop_length) / 2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sample_rate == 0 || self.hop_length == 0 || self.mel_channels == 0 {
            return bad("sample_rate, hop_length and mel_channels must be positive".into());
        }
        if self.win_length == 0 || self.win_length > self.n_fft {
            return bad(format!("win_length {} must be in 1..={}", self.win_length, self.n_fft));
        }
        if self.hop_length > self.n_fft || (self.n_fft - self.hop_length) % 2 != 0 {
            return bad(format!(
                "n_fft - hop_length must be even and non-negative (n_fft {}, hop {})",
                self.n_fft, self.hop_length
            ));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        let fmax = self.mel_fmax.unwrap_or(nyquist);
        if !(0.0..fmax).contains(&self.mel_fmin) || fmax > nyquist {
            return bad(format!("mel range {}..{fmax} Hz is invalid", self.mel_fmin));
        }
        Ok(())
    }

    /// Frame count for `n` samples.
    pub fn frame_count(&self, n: usize) -> usize {
        if n < self.hop_length {
            0
        } else {
            1 + (n - self.hop_length) / self.hop_length
        }
    }
}

/// Periodic Hann window of `win` samples centered in `n_fft`.
pub fn hann_window(n_fft: usize, win: usize) -> Vec<f64> {
    let mut w = vec![0.0; n_fft];
    let offset = (n_fft - win) / 2;
    for i in 0..win {
        w[offset + i] = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos();
    }
    w
}

/// Mirror an out-of-range index back into `0..n` (no edge repeat).
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

fn hz_to_mel(f: f64) -> f64 {
    let (f_sp, min_log_hz) = (200.0 / 3.0, 1000.0);
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4f64).ln() / 27.0;
    if f >= min_log_hz {
        min_log_mel + (f / min_log_hz).ln() / logstep
    } else {
        f / f_sp
    }
}

fn mel_to_hz(m: f64) -> f64 {
    let (f_sp, min_log_hz) = (200.0 / 3.0, 1000.0);
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4f64).ln() / 27.0;
    if m >= min_log_mel {
        min_log_hz * (logstep * (m - min_log_mel)).exp()
    } else {
        f_sp * m
    }
}

/// Slaney-style triangular filterbank with area normalization,
/// shaped `(n_fft / 2 + 1, n_mels)`.
pub fn mel_filterbank(cfg: &AudioConfig) -> Array2<f32> {
    let n_bins = cfg.n_bins();
    let sr = cfg.sample_rate as f64;
    let fmax = cfg.mel_fmax.unwrap_or(sr / 2.0);
    let (mmin, mmax) = (hz_to_mel(cfg.mel_fmin), hz_to_mel(fmax));
    let points: Vec<f64> = (0..cfg.mel_channels + 2)
        .map(|i| mel_to_hz(mmin + (mmax - mmin) * i as f64 / (cfg.mel_channels + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((n_bins, cfg.mel_channels));
    for m in 0..cfg.mel_channels {
        let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
        let norm = 2.0 / (hi - lo);
        for k in 0..n_bins {
            let f = k as f64 * sr / cfg.n_fft as f64;
            let up = (f - lo) / (center - lo);
            let down = (hi - f) / (hi - center);
            let w = up.min(down).max(0.0);
            fb[[k, m]] = (w * norm) as f32;
        }
    }
    fb
}

/// Reusable FFT plan, window and filterbank for one [`AudioConfig`].
pub struct SpectrogramExtractor {
    cfg: AudioConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filterbank: Array2<f32>,
}

impl std::fmt::Debug for SpectrogramExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrogramExtractor").field("cfg", &self.cfg).finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramPair {
    /// `F x (n_fft / 2 + 1)` magnitudes.
    pub linear: Array2<f32>,
    /// `F x mel_channels` log-mel.
    pub mel: Array2<f32>,
}

impl SpectrogramPair {
    pub fn frame_count(&self) -> usize {
        self.linear.nrows()
    }
}

impl SpectrogramExtractor {
    pub fn new(cfg: &AudioConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            fft: FftPlanner::new().plan_fft_forward(cfg.n_fft),
            window: hann_window(cfg.n_fft, cfg.win_length),
            filterbank: mel_filterbank(cfg),
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &AudioConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &Array2<f32> {
        &self.filterbank
    }

    pub fn linear(&self, samples: &[f32]) -> Result<Array2<f32>> {
        let cfg = &self.cfg;
        let pad = cfg.pad();
        if samples.len() < cfg.hop_length || samples.len() <= pad {
            return Err(Error::Audio(format!(
                "{} samples is too short for hop {} and padding {pad}",
                samples.len(),
                cfg.hop_length
            )));
        }
        let frames = cfg.frame_count(samples.len());
        let n = samples.len();
        let mut out = Array2::zeros((frames, cfg.n_bins()));
        let mut buf = vec![Complex::new(0.0f64, 0.0); cfg.n_fft];
        for (f, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            for (i, slot) in buf.iter_mut().enumerate() {
                let src = reflect_index((f * cfg.hop_length + i) as isize - pad as isize, n);
                *slot = Complex::new(samples[src] as f64 * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            for (k, v) in row.iter_mut().enumerate() {
                *v = buf[k].norm() as f32;
            }
        }
        Ok(out)
    }

    /// `log(max(linear @ filterbank, MEL_FLOOR))`.
    pub fn mel_from_linear(&self, linear: &Array2<f32>) -> Array2<f32> {
        linear.dot(&self.filterbank).mapv(|v| v.max(MEL_FLOOR).ln())
    }

    pub fn compute(&self, samples: &[f32], sample_rate: u32) -> Result<SpectrogramPair> {
        if sample_rate != self.cfg.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: self.cfg.sample_rate,
                found: sample_rate,
            });
        }
        let linear = self.linear(samples)?;
        let mel = self.mel_from_linear(&linear);
        Ok(SpectrogramPair { linear, mel })
    }
}

/// One-off convenience around [`SpectrogramExtractor::compute`].
pub fn compute_spectrograms(samples: &[f32], sample_rate: u32, cfg: &AudioConfig) -> Result<SpectrogramPair> {
    SpectrogramExtractor::new(cfg)?.compute(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_hits_floor() {
        let cfg = AudioConfig::default();
        let pair = compute_spectrograms(&vec![0.0; 8000], 16000, &cfg).unwrap();
        assert!(pair.mel.iter().all(|&v| v == MEL_FLOOR.ln()));
        assert_eq!(pair.linear.nrows(), pair.mel.nrows());
    }

    #[test]
    fn one_second_frame_count() {
        let cfg = AudioConfig::default();
        let pair = compute_spectrograms(&vec![0.1; 16000], 16000, &cfg).unwrap();
        assert_eq!(pair.frame_count(), 62);
        assert_eq!(cfg.frame_count(32 * 256), 32);
    }

    #[test]
    fn sine_peak_bin() {
        let cfg = AudioConfig::default();
        let bin = 40usize;
        let freq = bin as f32 * 16000.0 / 1024.0;
        let tone: Vec<f32> = (0..16000)
            .map(|i| (2.0 * std::f32::consts::PI * freq * i as f32 / 16000.0).sin() * 0.5)
            .collect();
        let pair = compute_spectrograms(&tone, 16000, &cfg).unwrap();
        let mean = pair.linear.mean_axis(Axis(0)).unwrap();
        let argmax = mean
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, bin);
    }

    #[test]
    fn rate_mismatch() {
        let err = compute_spectrograms(&[0.0; 4000], 22050, &AudioConfig::default()).unwrap_err();
        assert_eq!(err.kind(), "sample-rate-mismatch");
    }

    #[test]
    fn reflect() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }

    #[test]
    fn filterbank_shape_and_coverage() {
        let cfg = AudioConfig::default();
        let fb = mel_filterbank(&cfg);
        assert_eq!(fb.dim(), (513, 80));
        for m in 0..80 {
            assert!(fb.column(m).iter().any(|&v| v > 0.0), "empty filter {m}");
        }
    }
}
