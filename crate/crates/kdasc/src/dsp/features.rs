//! Delta stacking, standardization, and the binary feature cache.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::filterbank::{apply_filterbank, build_filterbank, FilterBank};
use crate::dsp::stft::{stft_power, Mat, SpecKind, SpectrogramConfig, TARGET_FRAMES};
use crate::error::{Error, Result};

pub const FEAT_FREQS: usize = 128;
pub const FEAT_FRAMES: usize = 128;
pub const FEAT_CHANNELS: usize = 3;
pub const FEAT_LEN: usize = FEAT_FREQS * FEAT_FRAMES * FEAT_CHANNELS;

/// Regression half-width for delta computation (window width 9).
const DELTA_HALF_WIDTH: usize = 4;

/// 128 (frequency) x 128 (time) x 3 (static, delta, delta-delta) feature
/// tensor, stored frequency-major, then time, then channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub kind: SpecKind,
    pub values: Vec<f64>,
}

impl FeatureTensor {
    #[inline]
    pub fn index(f: usize, t: usize, c: usize) -> usize {
        (f * FEAT_FRAMES + t) * FEAT_CHANNELS + c
    }

    #[inline]
    pub fn at(&self, f: usize, t: usize, c: usize) -> f64 {
        self.values[Self::index(f, t, c)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Per-kind scalar standardization statistics, one (mean, std) per channel,
/// computed once over the TRAIN split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ChannelStats {
    pub fn identity() -> Self {
        ChannelStats { mean: [0.0; 3], std: [1.0; 3] }
    }
}

fn delta_row(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let denom: f64 = 2.0 * (1..=DELTA_HALF_WIDTH).map(|k| (k * k) as f64).sum::<f64>();
    (0..n)
        .map(|t| {
            let mut acc = 0.0;
            for k in 1..=DELTA_HALF_WIDTH {
                // edge replication padding
                let ahead = x[(t + k).min(n - 1)];
                let behind = x[t.saturating_sub(k)];
                acc += k as f64 * (ahead - behind);
            }
            acc / denom
        })
        .collect()
}

/// Stack delta and delta-delta channels onto a 128x132 log-spectrogram and
/// center-crop time to 128 frames (drop 2 leading, 2 trailing).
pub fn add_deltas(logspec: &Mat, kind: SpecKind) -> Result<FeatureTensor> {
    if logspec.rows != FEAT_FREQS || logspec.cols != TARGET_FRAMES {
        return Err(Error::Shape(format!(
            "add_deltas expects {FEAT_FREQS}x{TARGET_FRAMES}, got {}x{}",
            logspec.rows, logspec.cols
        )));
    }
    let crop = (TARGET_FRAMES - FEAT_FRAMES) / 2;
    let mut values = vec![0.0; FEAT_LEN];
    for f in 0..FEAT_FREQS {
        let row = &logspec.data[f * TARGET_FRAMES..(f + 1) * TARGET_FRAMES];
        let d = delta_row(row);
        let dd = delta_row(&d);
        for t in 0..FEAT_FRAMES {
            values[FeatureTensor::index(f, t, 0)] = row[t + crop];
            values[FeatureTensor::index(f, t, 1)] = d[t + crop];
            values[FeatureTensor::index(f, t, 2)] = dd[t + crop];
        }
    }
    Ok(FeatureTensor { kind, values })
}

/// Full front-end without standardization: STFT, filterbank, log, deltas.
pub fn featurize_raw(clip: &AudioClip, kind: SpecKind, bank: &FilterBank) -> Result<FeatureTensor> {
    let config = SpectrogramConfig::for_kind(kind);
    let power = stft_power(clip, &config)?;
    let logspec = apply_filterbank(&power, bank)?;
    add_deltas(&logspec, kind)
}

pub fn standardize(tensor: &mut FeatureTensor, stats: &ChannelStats) {
    for c in 0..FEAT_CHANNELS {
        let (mean, std) = (stats.mean[c], stats.std[c].max(1e-12));
        for f in 0..FEAT_FREQS {
            for t in 0..FEAT_FRAMES {
                let i = FeatureTensor::index(f, t, c);
                tensor.values[i] = (tensor.values[i] - mean) / std;
            }
        }
    }
}

/// One front-end instance: config plus prebuilt filterbank, immutable and
/// shareable once constructed.
pub struct Frontend {
    pub kind: SpecKind,
    pub bank: FilterBank,
}

impl Frontend {
    pub fn new(kind: SpecKind) -> Result<Frontend> {
        let config = SpectrogramConfig::for_kind(kind);
        Ok(Frontend { kind, bank: build_filterbank(&config)? })
    }

    /// Featurize and standardize a 1-second clip.
    pub fn featurize(&self, clip: &AudioClip, stats: &ChannelStats) -> Result<FeatureTensor> {
        let mut t = featurize_raw(clip, self.kind, &self.bank)?;
        standardize(&mut t, stats);
        if !t.is_finite() {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        Ok(t)
    }
}

/// Scalar per-channel mean/std over a set of raw feature tensors.
pub fn compute_stats<'a>(tensors: impl Iterator<Item = &'a FeatureTensor>) -> ChannelStats {
    let mut sum = [0.0f64; 3];
    let mut sumsq = [0.0f64; 3];
    let mut count = 0usize;
    for t in tensors {
        count += 1;
        for c in 0..FEAT_CHANNELS {
            for f in 0..FEAT_FREQS {
                for tt in 0..FEAT_FRAMES {
                    let v = t.at(f, tt, c);
                    sum[c] += v;
                    sumsq[c] += v * v;
                }
            }
        }
    }
    let n = (count * FEAT_FREQS * FEAT_FRAMES) as f64;
    let mut stats = ChannelStats::identity();
    if count == 0 {
        return stats;
    }
    for c in 0..3 {
        let mean = sum[c] / n;
        let var = (sumsq[c] / n - mean * mean).max(0.0);
        stats.mean[c] = mean;
        stats.std[c] = var.sqrt().max(1e-12);
    }
    stats
}

const FEAT_MAGIC: &[u8; 8] = b"KDASCFT\0";
const FEAT_VERSION: u16 = 1;

/// Write one tensor to the binary cache layout: 16-byte header (magic,
/// version, kind code, zero pad), then 128x128x3 f32 little-endian values in
/// frequency-major, time, channel order.
pub fn save_feature(path: &Path, tensor: &FeatureTensor) -> Result<()> {
    let mut out = Vec::with_capacity(16 + FEAT_LEN * 4);
    out.extend_from_slice(FEAT_MAGIC);
    out.extend_from_slice(&FEAT_VERSION.to_le_bytes());
    out.push(tensor.kind.code());
    out.extend_from_slice(&[0u8; 5]);
    for &v in &tensor.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn load_feature(path: &Path) -> Result<FeatureTensor> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let corrupt = |offset: u64, reason: &str| Error::Corruption {
        path: path.to_path_buf(),
        offset,
        reason: reason.into(),
    };
    if bytes.len() != 16 + FEAT_LEN * 4 {
        return Err(corrupt(bytes.len() as u64, "wrong file length"));
    }
    if &bytes[0..8] != FEAT_MAGIC {
        return Err(corrupt(0, "bad magic"));
    }
    let version = u16::from_le_bytes(bytes[8..10].try_into().unwrap());
    if version != FEAT_VERSION {
        return Err(corrupt(8, "unsupported feature cache version"));
    }
    let kind = SpecKind::from_code(bytes[10]).ok_or_else(|| corrupt(10, "bad kind code"))?;
    let values: Vec<f64> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(FeatureTensor { kind, values })
}
