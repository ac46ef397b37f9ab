//! PCM WAV ingestion and 1-second segmentation.
//!
//! Integer samples are scaled by 1/2^(bits-1), so the representable range is
//! exactly [-1, 1). Float WAVs are clamped to [-1, 1] on read.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioClip { samples, sample_rate }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn wav_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::WavFormat { path: path.to_path_buf(), reason: reason.into() }
}

/// Read a PCM WAV file (16/32-bit integer or 32-bit float), averaging
/// channels down to mono.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_wav(&bytes, path)
}

pub fn decode_wav(bytes: &[u8], path: &Path) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(wav_err(path, "missing RIFF/WAVE header"));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(wav_err(path, format!("chunk {:?} overruns file", String::from_utf8_lossy(id))));
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(wav_err(path, "fmt chunk too short"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned
        pos = body_end + (size & 1);
    }
    let (format, channels, rate, bits) = fmt.ok_or_else(|| wav_err(path, "no fmt chunk"))?;
    let data = data.ok_or_else(|| wav_err(path, "no data chunk"))?;
    if channels == 0 {
        return Err(wav_err(path, "zero channels"));
    }
    if rate == 0 {
        return Err(wav_err(path, "zero sample rate"));
    }
    let codec_err = |reason: String| Error::UnsupportedCodec { path: path.to_path_buf(), reason };
    let interleaved: Vec<f64> = match (format, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes(c.try_into().unwrap()) as f64 / 32768.0)
            .collect(),
        (1, 32) => data
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as f64 / 2147483648.0)
            .collect(),
        (3, 32) => data
            .chunks_exact(4)
            .map(|c| (f32::from_le_bytes(c.try_into().unwrap()) as f64).clamp(-1.0, 1.0))
            .collect(),
        (f, b) => return Err(codec_err(format!("format tag {f} with {b} bits"))),
    };
    let channels = channels as usize;
    let frames = interleaved.len() / channels;
    let mut samples = Vec::with_capacity(frames);
    for frame in 0..frames {
        let sum: f64 = interleaved[frame * channels..(frame + 1) * channels].iter().sum();
        samples.push(sum / channels as f64);
    }
    Ok(AudioClip::new(samples, rate))
}

/// Write a mono 16-bit PCM WAV. Samples are clamped to [-1, 1) and
/// quantized by round(x * 32768).
pub fn save_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let n = clip.samples.len() as u32;
    let data_len = n * 2;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Cut a clip into consecutive non-overlapping segments, zero-padding the
/// final partial segment to full length.
pub fn segment_clip(clip: &AudioClip, segment_seconds: f64) -> Result<Vec<AudioClip>> {
    if clip.samples.is_empty() {
        return Err(Error::EmptyInput("clip has no samples".into()));
    }
    if segment_seconds <= 0.0 {
        return Err(Error::Validation("segment_seconds must be positive".into()));
    }
    let seg_len = (segment_seconds * clip.sample_rate as f64).round() as usize;
    if seg_len == 0 {
        return Err(Error::Validation("segment shorter than one sample".into()));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < clip.samples.len() {
        let end = (start + seg_len).min(clip.samples.len());
        let mut samples = clip.samples[start..end].to_vec();
        samples.resize(seg_len, 0.0);
        out.push(AudioClip::new(samples, clip.sample_rate));
        start += seg_len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes_16(samples: &[i16], rate: u32, channels: u16) -> Vec<u8> {
        let data_len = (samples.len() * 2) as u32;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    #[test]
    fn silence_decodes_to_zeros() {
        let bytes = wav_bytes_16(&vec![0i16; 44100], 44100, 1);
        let clip = decode_wav(&bytes, Path::new("mem")).unwrap();
        assert_eq!(clip.samples.len(), 44100);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn full_scale_square_wave_scaling() {
        // oracle: direct integer-to-float arithmetic, divisor 32768
        let raw: Vec<i16> = (0..10).map(|i| if i % 2 == 0 { 32767 } else { -32768 }).collect();
        let bytes = wav_bytes_16(&raw, 44100, 1);
        let clip = decode_wav(&bytes, Path::new("mem")).unwrap();
        for (i, &s) in clip.samples.iter().enumerate() {
            let expected = raw[i] as f64 / 32768.0;
            assert_eq!(s, expected);
        }
        assert_eq!(clip.samples[0], 32767.0 / 32768.0);
        assert_eq!(clip.samples[1], -1.0);
    }

    #[test]
    fn stereo_opposite_channels_cancel() {
        let mut raw = Vec::new();
        for i in 0..100i16 {
            raw.push(i * 100);
            raw.push(-(i * 100));
        }
        let bytes = wav_bytes_16(&raw, 8000, 2);
        let clip = decode_wav(&bytes, Path::new("mem")).unwrap();
        assert_eq!(clip.samples.len(), 100);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn malformed_header_rejected() {
        let err = decode_wav(b"RIFXjunkWAVE", Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::WavFormat { .. }));
    }

    #[test]
    fn unsupported_codec_rejected() {
        let mut bytes = wav_bytes_16(&[0; 4], 8000, 1);
        // patch bits-per-sample to 24
        let fmt_bits_offset = 12 + 8 + 14;
        bytes[fmt_bits_offset] = 24;
        let err = decode_wav(&bytes, Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::UnsupportedCodec { .. }));
    }

    #[test]
    fn decode_linearity_under_halving() {
        let raw: Vec<i16> = (0..64).map(|i| (i * 300 - 9000) as i16).collect();
        let halved: Vec<i16> = raw.iter().map(|&s| s / 2).collect();
        let a = decode_wav(&wav_bytes_16(&raw, 8000, 1), Path::new("mem")).unwrap();
        let b = decode_wav(&wav_bytes_16(&halved, 8000, 1), Path::new("mem")).unwrap();
        let step = 1.0 / 32768.0;
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x / 2.0 - y).abs() <= step);
        }
    }

    #[test]
    fn segment_exact_division() {
        let clip = AudioClip::new(vec![0.5; 80_000], 8000);
        let segs = segment_clip(&clip, 1.0).unwrap();
        assert_eq!(segs.len(), 10);
        assert!(segs.iter().all(|s| s.samples.len() == 8000));
    }

    #[test]
    fn segment_pads_final_partial() {
        let clip = AudioClip::new(vec![0.5; 20_000], 8000);
        let segs = segment_clip(&clip, 1.0).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(&segs[2].samples[..4000], &vec![0.5; 4000][..]);
        assert_eq!(&segs[2].samples[4000..], &vec![0.0; 4000][..]);
    }

    #[test]
    fn segment_identity_case() {
        let samples: Vec<f64> = (0..8000).map(|i| (i as f64 / 8000.0).sin()).collect();
        let clip = AudioClip::new(samples.clone(), 8000);
        let segs = segment_clip(&clip, 1.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].samples, samples);
    }

    #[test]
    fn segment_empty_clip_errors() {
        let clip = AudioClip::new(vec![], 8000);
        assert!(matches!(segment_clip(&clip, 1.0), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn wav_roundtrip_16bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.01).sin() * 0.8).collect();
        let clip = AudioClip::new(samples, 16000);
        save_wav(&path, &clip).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        assert_eq!(back.samples.len(), 1000);
        for (a, b) in clip.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}
