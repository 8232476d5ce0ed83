//! Mono RIFF/WAVE reading (PCM 16/24/32-bit, IEEE float 32) and 16-bit PCM writing.

use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Wav {
    pub sample_rate: u32,
    /// Samples scaled to [-1, 1].
    pub samples: Vec<f32>,
}

impl Wav {
    pub fn duration_sec(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

pub fn parse_wav(bytes: &[u8]) -> Result<Wav> {
    let bad = |m: &str| Error::Audio(m.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file"));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start.saturating_add(size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                let mut format = u16_at(body, 0);
                // WAVE_FORMAT_EXTENSIBLE: the real format is the subformat GUID's first two bytes
                if format == 0xFFFE && body.len() >= 26 {
                    format = u16_at(body, 24);
                }
                fmt = Some((format, u16_at(body, 2), u32_at(body, 4), u16_at(body, 14)));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_start + size + (size & 1);
    }
    let (format, channels, sample_rate, bits) = fmt.ok_or_else(|| bad("missing fmt chunk"))?;
    let data = data.ok_or_else(|| bad("missing data chunk"))?;
    if channels != 1 {
        return Err(bad(&format!("expected mono audio, found {channels} channels")));
    }
    if sample_rate == 0 {
        return Err(bad("sample rate is zero"));
    }
    let samples: Vec<f32> = match (format, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        (1, 24) => data
            .chunks_exact(3)
            .map(|c| (i32::from_le_bytes([0, c[0], c[1], c[2]]) >> 8) as f32 / 8_388_608.0)
            .collect(),
        (1, 32) => data
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f32 / 2_147_483_648.0)
            .collect(),
        (3, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        _ => return Err(bad(&format!("unsupported encoding (format {format}, {bits} bits)"))),
    };
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("audio samples".into()));
    }
    Ok(Wav { sample_rate, samples })
}

pub fn read_wav(path: &Path) -> Result<Wav> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    parse_wav(&std::fs::read(path)?).map_err(|e| match e {
        Error::Audio(m) => Error::Audio(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// 16-bit PCM mono; samples are clipped to [-1, 1].
pub fn encode_wav(samples: &[f32], sample_rate: u32) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_wav(samples, sample_rate))?;
    Ok(())
}

/// Band-limited resampling with a Hann-windowed sinc kernel.
pub fn resample(samples: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    const HALF_WIDTH: f64 = 16.0;
    let ratio = to as f64 / from as f64;
    // cutoff relative to the input rate, lowered when downsampling
    let cutoff = ratio.min(1.0) * 0.95;
    let out_len = ((samples.len() as f64) * ratio).round().max(1.0) as usize;
    let reach = HALF_WIDTH / cutoff;
    (0..out_len)
        .map(|i| {
            let center = i as f64 / ratio;
            let lo = (center - reach).ceil().max(0.0) as usize;
            let hi = ((center + reach).floor() as usize).min(samples.len() - 1);
            let mut acc = 0.0f64;
            for (j, &s) in samples.iter().enumerate().take(hi + 1).skip(lo) {
                let x = (j as f64 - center) * cutoff;
                let sinc = if x.abs() < 1e-12 {
                    1.0
                } else {
                    (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
                };
                let w = 0.5 + 0.5 * (std::f64::consts::PI * x / HALF_WIDTH).cos();
                acc += s as f64 * sinc * w * cutoff;
            }
            acc as f32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_pcm16() {
        let samples: Vec<f32> = (0..100).map(|i| ((i as f32) * 0.1).sin() * 0.8).collect();
        let wav = parse_wav(&encode_wav(&samples, 16000)).unwrap();
        assert_eq!(wav.sample_rate, 16000);
        assert_eq!(wav.samples.len(), 100);
        for (a, b) in wav.samples.iter().zip(&samples) {
            assert!((a - b).abs() < 1.0 / 16000.0);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_wav(&[0.0, 1.0, -1.0], 22050);
        assert_eq!(bytes.len(), 50);
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(u32_at(&bytes, 4), 42);
        assert_eq!(u32_at(&bytes, 24), 22050);
        assert_eq!(i16::from_le_bytes([bytes[46], bytes[47]]), 32767);
    }

    #[test]
    fn rejects_garbage_and_stereo() {
        assert_eq!(parse_wav(b"hello world!").unwrap_err().kind(), "audio");
        let mut bytes = encode_wav(&[0.0; 4], 16000);
        bytes[22] = 2;
        assert_eq!(parse_wav(&bytes).unwrap_err().kind(), "audio");
    }

    #[test]
    fn resample_preserves_tone() {
        let sr = 24000;
        let tone: Vec<f32> = (0..2400)
            .map(|i| (2.0 * std::f32::consts::PI * 440.0 * i as f32 / sr as f32).sin())
            .collect();
        let out = resample(&tone, sr, 16000);
        assert_eq!(out.len(), 1600);
        for (i, &v) in out.iter().enumerate().skip(100).take(1400) {
            let want = (2.0 * std::f32::consts::PI * 440.0 * i as f32 / 16000.0).sin();
            assert!((v - want).abs() < 0.02, "{i}: {v} vs {want}");
        }
    }
}
