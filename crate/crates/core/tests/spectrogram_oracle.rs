//! STFT against a direct O(N^2) DFT over an explicitly reflect-padded
//! signal. The frame count for one second at 16 kHz was taken from this
//! oracle and frozen.

use mmtts::data::{AudioConfig, SpectrogramExtractor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mirror padding without repeating the edge sample.
fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[n - 2 - i]));
    out
}

fn oracle_stft(x: &[f32], cfg: &AudioConfig) -> Vec<Vec<f64>> {
    let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let padded = reflect_pad(&x, (cfg.n_fft - cfg.hop_length) / 2);
    let n = cfg.n_fft;
    let off = (n - cfg.win_length) / 2;
    let window: Vec<f64> = (0..n)
        .map(|i| {
            if i < off || i >= off + cfg.win_length {
                0.0
            } else {
                let j = (i - off) as f64;
                (std::f64::consts::PI * j / cfg.win_length as f64).sin().powi(2)
            }
        })
        .collect();
    let mut frames = Vec::new();
    let mut start = 0;
    while start + n <= padded.len() {
        let seg: Vec<f64> = (0..n).map(|i| padded[start + i] * window[i]).collect();
        let row = (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, v) in seg.iter().enumerate() {
                    let a = -2.0 * std::f64::consts::PI * ((k * i) % n) as f64 / n as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect();
        frames.push(row);
        start += cfg.hop_length;
    }
    frames
}

fn small_cfg(n_fft: usize, hop: usize, win: usize) -> AudioConfig {
    AudioConfig {
        n_fft,
        hop_length: hop,
        win_length: win,
        mel_channels: 8,
        ..AudioConfig::default()
    }
}

fn assert_close(ours: &ndarray::Array2<f32>, oracle: &[Vec<f64>]) {
    assert_eq!(ours.nrows(), oracle.len());
    let peak = oracle.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    for (f, row) in oracle.iter().enumerate() {
        assert_eq!(ours.ncols(), row.len());
        for (k, &v) in row.iter().enumerate() {
            let d = (ours[[f, k]] as f64 - v).abs();
            assert!(d <= 1e-4 * peak.max(1.0), "frame {f} bin {k}: {} vs {v}", ours[[f, k]]);
        }
    }
}

#[test]
fn one_second_at_16k_has_62_frames_and_matches_the_oracle() {
    let cfg = AudioConfig::default();
    assert_eq!((cfg.sample_rate, cfg.n_fft, cfg.hop_length), (16000, 1024, 256));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f32> = (0..16000).map(|_| rng.random_range(-0.5..0.5)).collect();
    let ours = SpectrogramExtractor::new(&cfg).unwrap().linear(&x).unwrap();
    let oracle = oracle_stft(&x, &cfg);
    assert_eq!(oracle.len(), 62);
    assert_close(&ours, &oracle);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_signals_match_the_oracle(
        seed in any::<u64>(),
        len in 200usize..900,
        shape in prop::sample::select(vec![(64usize, 16usize, 64usize), (64, 32, 48), (128, 32, 128)]),
    ) {
        let cfg = small_cfg(shape.0, shape.1, shape.2);
        prop_assume!(len > cfg.n_fft);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ours = SpectrogramExtractor::new(&cfg).unwrap().linear(&x).unwrap();
        assert_close(&ours, &oracle_stft(&x, &cfg));
        prop_assert_eq!(ours.nrows(), cfg.frame_count(len));
    }
}
