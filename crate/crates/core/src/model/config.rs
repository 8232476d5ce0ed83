use serde::{Deserialize, Serialize};

use crate::data::AudioConfig;
use crate::frontend::NUM_LANGUAGES;
use crate::{Error, Result};

/// Architecture and audio constants. Defaults are the full-size model;
/// [`ModelConfig::desk`] is the small CI variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_languages: usize,
    pub n_speakers: usize,
    pub hidden_dim: usize,
    pub filter_dim: usize,
    pub n_heads: usize,
    pub n_encoder_blocks: usize,
    pub encoder_kernel: usize,
    /// Track 2 when true: word-level context is fused into the text encoder.
    pub use_context: bool,
    pub context_dim: usize,
    pub speaker_dim: usize,
    pub language_dim: usize,
    pub posterior_layers: usize,
    pub posterior_kernel: usize,
    pub flow_layers: usize,
    pub flow_wn_layers: usize,
    pub flow_kernel: usize,
    pub duration_filter: usize,
    pub duration_kernel: usize,
    pub decoder_channels: usize,
    pub resblock_kernel: usize,
    pub resblock_dilations: Vec<usize>,
    pub discriminator_channels: Vec<usize>,
    pub discriminator_kernel: usize,
    pub discriminator_stride: usize,
    /// Latent frames per item decoded during training.
    pub segment_frames: usize,
    pub mel_channels: usize,
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop_length: usize,
    pub win_length: usize,
    pub mel_fmin: f64,
    pub mel_fmax: Option<f64>,
    pub noise_scale: f64,
    pub noise_scale_w: f64,
    pub length_scale: f64,
    pub logvar_min: f64,
    pub logvar_max: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_languages: NUM_LANGUAGES,
            n_speakers: 14,
            hidden_dim: 192,
            filter_dim: 768,
            n_heads: 2,
            n_encoder_blocks: 6,
            encoder_kernel: 3,
            use_context: false,
            context_dim: 768,
            speaker_dim: 256,
            language_dim: 64,
            posterior_layers: 16,
            posterior_kernel: 5,
            flow_layers: 4,
            flow_wn_layers: 4,
            flow_kernel: 5,
            duration_filter: 192,
            duration_kernel: 3,
            decoder_channels: 512,
            resblock_kernel: 3,
            resblock_dilations: vec![1, 3, 5],
            discriminator_channels: vec![16, 64, 256, 512],
            discriminator_kernel: 15,
            discriminator_stride: 4,
            segment_frames: 32,
            mel_channels: 80,
            sample_rate: 16000,
            n_fft: 1024,
            hop_length: 256,
            win_length: 1024,
            mel_fmin: 0.0,
            mel_fmax: None,
            noise_scale: 0.667,
            noise_scale_w: 0.8,
            length_scale: 1.0,
            logvar_min: -9.0,
            logvar_max: 4.0,
        }
    }
}

impl ModelConfig {
    /// Small configuration for CPU runs.
    pub fn desk() -> Self {
        Self {
            hidden_dim: 64,
            filter_dim: 128,
            n_encoder_blocks: 2,
            context_dim: 32,
            speaker_dim: 32,
            language_dim: 16,
            posterior_layers: 4,
            flow_wn_layers: 2,
            duration_filter: 64,
            decoder_channels: 64,
            resblock_dilations: vec![1, 3],
            discriminator_channels: vec![16, 32, 64],
            discriminator_kernel: 9,
            ..Self::default()
        }
    }

    pub fn audio(&self) -> AudioConfig {
        AudioConfig {
            sample_rate: self.sample_rate,
            n_fft: self.n_fft,
            hop_length: self.hop_length,
            win_length: self.win_length,
            mel_channels: self.mel_channels,
            mel_fmin: self.mel_fmin,
            mel_fmax: self.mel_fmax,
        }
    }

    pub fn linear_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_languages != NUM_LANGUAGES {
            return bad(format!("n_languages must be {NUM_LANGUAGES}, got {}", self.n_languages));
        }
        let positive = [
            ("n_speakers", self.n_speakers),
            ("hidden_dim", self.hidden_dim),
            ("filter_dim", self.filter_dim),
            ("n_heads", self.n_heads),
            ("n_encoder_blocks", self.n_encoder_blocks),
            ("encoder_kernel", self.encoder_kernel),
            ("context_dim", self.context_dim),
            ("speaker_dim", self.speaker_dim),
            ("language_dim", self.language_dim),
            ("posterior_layers", self.posterior_layers),
            ("posterior_kernel", self.posterior_kernel),
            ("flow_layers", self.flow_layers),
            ("flow_wn_layers", self.flow_wn_layers),
            ("flow_kernel", self.flow_kernel),
            ("duration_filter", self.duration_filter),
            ("duration_kernel", self.duration_kernel),
            ("decoder_channels", self.decoder_channels),
            ("resblock_kernel", self.resblock_kernel),
            ("discriminator_kernel", self.discriminator_kernel),
            ("discriminator_stride", self.discriminator_stride),
            ("segment_frames", self.segment_frames),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be positive"));
        }
        for (name, k) in [
            ("encoder_kernel", self.encoder_kernel),
            ("posterior_kernel", self.posterior_kernel),
            ("flow_kernel", self.flow_kernel),
            ("duration_kernel", self.duration_kernel),
            ("resblock_kernel", self.resblock_kernel),
            ("discriminator_kernel", self.discriminator_kernel),
        ] {
            if k % 2 == 0 {
                return bad(format!("{name} must be odd, got {k}"));
            }
        }
        if self.hidden_dim % self.n_heads != 0 {
            return bad(format!("hidden_dim {} not divisible by n_heads {}", self.hidden_dim, self.n_heads));
        }
        if self.hidden_dim % 2 != 0 {
            return bad("hidden_dim must be even for the coupling split".into());
        }
        if self.resblock_dilations.is_empty() || self.resblock_dilations.contains(&0) {
            return bad("resblock_dilations must be non-empty and positive".into());
        }
        if self.discriminator_channels.is_empty() || self.discriminator_channels.contains(&0) {
            return bad("discriminator_channels must be non-empty and positive".into());
        }
        if !(self.logvar_min < self.logvar_max) {
            return bad("logvar_min must be below logvar_max".into());
        }
        for (name, v) in [
            ("noise_scale", self.noise_scale),
            ("noise_scale_w", self.noise_scale_w),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0"));
            }
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return bad("length_scale must be positive".into());
        }
        self.audio().validate()
    }
}
