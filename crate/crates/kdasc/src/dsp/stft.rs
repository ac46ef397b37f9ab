//! Hann-windowed power STFT shared by all three spectrogram front-ends.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 44100;
pub const N_FFT: usize = 4096;
pub const WINDOW_LENGTH: usize = 2048;
pub const HOP_LENGTH: usize = 326;
pub const N_FILTERS: usize = 128;
/// Frame count after center-cropping a 1-second clip's 136 frames.
pub const TARGET_FRAMES: usize = 132;
pub const N_BINS: usize = N_FFT / 2 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SpecKind {
    Mel,
    Gam,
    Cqt,
}

impl SpecKind {
    pub const ALL: [SpecKind; 3] = [SpecKind::Mel, SpecKind::Gam, SpecKind::Cqt];

    pub fn as_str(&self) -> &'static str {
        match self {
            SpecKind::Mel => "MEL",
            SpecKind::Gam => "GAM",
            SpecKind::Cqt => "CQT",
        }
    }

    pub fn parse(s: &str) -> Option<SpecKind> {
        match s.to_ascii_uppercase().as_str() {
            "MEL" => Some(SpecKind::Mel),
            "GAM" => Some(SpecKind::Gam),
            "CQT" => Some(SpecKind::Cqt),
            _ => None,
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            SpecKind::Mel => 0,
            SpecKind::Gam => 1,
            SpecKind::Cqt => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<SpecKind> {
        match code {
            0 => Some(SpecKind::Mel),
            1 => Some(SpecKind::Gam),
            2 => Some(SpecKind::Cqt),
            _ => None,
        }
    }
}

impl std::fmt::Display for SpecKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectrogramConfig {
    pub n_fft: usize,
    pub window_length: usize,
    pub hop_length: usize,
    pub n_filters: usize,
    pub kind: SpecKind,
    pub fmin: f64,
    pub fmax: f64,
}

impl SpectrogramConfig {
    pub fn for_kind(kind: SpecKind) -> Self {
        let (fmin, fmax) = match kind {
            SpecKind::Mel => (0.0, 22050.0),
            SpecKind::Gam => (50.0, 22050.0),
            SpecKind::Cqt => (32.7, 22050.0),
        };
        SpectrogramConfig {
            n_fft: N_FFT,
            window_length: WINDOW_LENGTH,
            hop_length: HOP_LENGTH,
            n_filters: N_FILTERS,
            kind,
            fmin,
            fmax,
        }
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * SAMPLE_RATE as f64 / self.n_fft as f64
    }
}

/// Dense row-major matrix of f64, the working currency of the DSP stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

/// Periodic Hann window.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    assert!(x.len() > pad, "signal too short for reflect padding");
    let mut out = Vec::with_capacity(x.len() + 2 * pad);
    for i in (1..=pad).rev() {
        out.push(x[i]);
    }
    out.extend_from_slice(x);
    for i in (0..pad).rev() {
        out.push(x[x.len() - 2 - (pad - 1 - i)]);
    }
    out
}

/// Power spectrogram of Hann-windowed frames, reflect center-padded so frame
/// t is centered at sample t*hop, then center-cropped in time to
/// [`TARGET_FRAMES`] columns. Rows are FFT bins 0..=n_fft/2.
pub fn stft_power(clip: &AudioClip, config: &SpectrogramConfig) -> Result<Mat> {
    if clip.sample_rate != SAMPLE_RATE {
        return Err(Error::Config(format!(
            "featurizer requires {SAMPLE_RATE} Hz input, got {}",
            clip.sample_rate
        )));
    }
    if clip.samples.is_empty() {
        return Err(Error::EmptyInput("clip has no samples".into()));
    }
    let n_fft = config.n_fft;
    let hop = config.hop_length;
    let padded = reflect_pad(&clip.samples, n_fft / 2);
    let n_frames = 1 + (padded.len() - n_fft) / hop;

    // window_length-point Hann centered inside the n_fft frame
    let win = hann(config.window_length);
    let offset = (n_fft - config.window_length) / 2;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let n_bins = n_fft / 2 + 1;
    let mut full = Mat::zeros(n_bins, n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for t in 0..n_frames {
        let frame = &padded[t * hop..t * hop + n_fft];
        for c in buf.iter_mut() {
            *c = Complex::new(0.0, 0.0);
        }
        for (i, &w) in win.iter().enumerate() {
            buf[offset + i] = Complex::new(frame[offset + i] * w, 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            full.set(k, t, buf[k].norm_sqr());
        }
    }

    // center-crop in time when we have more frames than needed
    if n_frames < TARGET_FRAMES {
        return Err(Error::Config(format!(
            "clip too short: {n_frames} frames < {TARGET_FRAMES}"
        )));
    }
    let lead = (n_frames - TARGET_FRAMES) / 2;
    let mut cropped = Mat::zeros(n_bins, TARGET_FRAMES);
    for k in 0..n_bins {
        for t in 0..TARGET_FRAMES {
            cropped.set(k, t, full.at(k, t + lead));
        }
    }
    Ok(cropped)
}
