//! Mel, gammatone, and pseudo-CQT filterbanks sampled on STFT bin
//! frequencies, so all three front-ends share one STFT.

use crate::dsp::stft::{Mat, SpecKind, SpectrogramConfig};
use crate::error::{Error, Result};

pub const LOG_EPS: f64 = 1e-10;
/// CQT bins per octave; 128 bins from 32.7 Hz then top out near 8.1 kHz,
/// safely below Nyquist.
pub const CQT_BINS_PER_OCTAVE: usize = 16;

#[derive(Debug, Clone)]
pub struct FilterBank {
    /// n_filters x (n_fft/2 + 1), nonnegative.
    pub weights: Mat,
    pub center_frequencies: Vec<f64>,
}

impl FilterBank {
    fn validate(self) -> Result<FilterBank> {
        for r in 0..self.weights.rows {
            let row = &self.weights.data[r * self.weights.cols..(r + 1) * self.weights.cols];
            if !row.iter().any(|&v| v > 0.0) {
                return Err(Error::FilterBank(format!(
                    "filter {r} (center {:.1} Hz) has no positive weight",
                    self.center_frequencies[r]
                )));
            }
        }
        for w in self.center_frequencies.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::FilterBank("center frequencies not strictly increasing".into()));
            }
        }
        Ok(self)
    }

    /// Matrix product with the power spectrogram, no log compression.
    pub fn apply_linear(&self, power: &Mat) -> Result<Mat> {
        if power.rows != self.weights.cols {
            return Err(Error::Shape(format!(
                "filterbank expects {} bins, spectrogram has {}",
                self.weights.cols, power.rows
            )));
        }
        let mut out = Mat::zeros(self.weights.rows, power.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.weights.rows,
                self.weights.cols,
                power.cols,
                1.0,
                self.weights.data.as_ptr(),
                self.weights.cols as isize,
                1,
                power.data.as_ptr(),
                power.cols as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                out.cols as isize,
                1,
            );
        }
        Ok(out)
    }
}

/// Filterbank application with log compression log(x + eps).
pub fn apply_filterbank(power: &Mat, bank: &FilterBank) -> Result<Mat> {
    let mut out = bank.apply_linear(power)?;
    for v in &mut out.data {
        *v = (*v + LOG_EPS).ln();
    }
    Ok(out)
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// ERB number (Glasberg & Moore) of a frequency in Hz.
pub fn erb_number(f: f64) -> f64 {
    21.4 * (1.0 + 0.00437 * f).log10()
}

pub fn erb_number_to_hz(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) / 0.00437
}

/// Equivalent rectangular bandwidth at a center frequency.
pub fn erb_bandwidth(f: f64) -> f64 {
    24.7 * (1.0 + 0.00437 * f)
}

/// Triangular filters with centers equally spaced on the HTK mel scale,
/// rows L1-normalized.
pub fn build_mel_filterbank(config: &SpectrogramConfig) -> Result<FilterBank> {
    assert_eq!(config.kind, SpecKind::Mel);
    let n_bins = config.n_fft / 2 + 1;
    let mel_lo = hz_to_mel(config.fmin);
    let mel_hi = hz_to_mel(config.fmax);
    // n_filters + 2 edge points; interior points are the centers
    let points: Vec<f64> = (0..config.n_filters + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (config.n_filters + 1) as f64))
        .collect();
    let mut weights = Mat::zeros(config.n_filters, n_bins);
    for i in 0..config.n_filters {
        let (lo, center, hi) = (points[i], points[i + 1], points[i + 2]);
        let mut sum = 0.0;
        for k in 0..n_bins {
            let f = config.bin_frequency(k);
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= center {
                (f - lo) / (center - lo)
            } else {
                (hi - f) / (hi - center)
            };
            weights.set(i, k, w);
            sum += w;
        }
        if sum > 0.0 {
            for k in 0..n_bins {
                let w = weights.at(i, k) / sum;
                weights.set(i, k, w);
            }
        }
    }
    let centers = points[1..=config.n_filters].to_vec();
    FilterBank { weights, center_frequencies: centers }.validate()
}

/// 4th-order gammatone magnitude responses sampled on FFT bins, centers
/// ERB-spaced, rows peak-normalized to 1.
pub fn build_gammatone_filterbank(config: &SpectrogramConfig) -> Result<FilterBank> {
    assert_eq!(config.kind, SpecKind::Gam);
    let n_bins = config.n_fft / 2 + 1;
    let e_lo = erb_number(config.fmin);
    let e_hi = erb_number(config.fmax);
    let centers: Vec<f64> = (0..config.n_filters)
        .map(|i| erb_number_to_hz(e_lo + (e_hi - e_lo) * i as f64 / (config.n_filters - 1) as f64))
        .collect();
    let mut weights = Mat::zeros(config.n_filters, n_bins);
    for (i, &fc) in centers.iter().enumerate() {
        let b = 1.019 * erb_bandwidth(fc);
        let mut peak = 0.0f64;
        for k in 0..n_bins {
            let f = config.bin_frequency(k);
            let w = gammatone_magnitude(f, fc, b);
            weights.set(i, k, w);
            peak = peak.max(w);
        }
        for k in 0..n_bins {
            let w = weights.at(i, k) / peak;
            weights.set(i, k, w);
        }
    }
    FilterBank { weights, center_frequencies: centers }.validate()
}

/// Magnitude response of a 4th-order gammatone filter with bandwidth
/// parameter `b`, peak value 1 at the center frequency.
pub fn gammatone_magnitude(f: f64, fc: f64, b: f64) -> f64 {
    let u = (f - fc) / b;
    (1.0 + u * u).powi(-2)
}

/// Pseudo-CQT: geometrically spaced Gaussian kernels with constant Q,
/// rows L1-normalized.
pub fn build_cqt_filterbank(config: &SpectrogramConfig) -> Result<FilterBank> {
    assert_eq!(config.kind, SpecKind::Cqt);
    let n_bins = config.n_fft / 2 + 1;
    let b = CQT_BINS_PER_OCTAVE as f64;
    let q = 1.0 / (2f64.powf(1.0 / b) - 1.0);
    let centers: Vec<f64> = (0..config.n_filters)
        .map(|i| config.fmin * 2f64.powf(i as f64 / b))
        .collect();
    let top = *centers.last().unwrap();
    if top > config.fmax {
        return Err(Error::FilterBank(format!(
            "top CQT center {top:.1} Hz exceeds fmax {:.1} Hz",
            config.fmax
        )));
    }
    let mut weights = Mat::zeros(config.n_filters, n_bins);
    for (i, &fc) in centers.iter().enumerate() {
        let sigma = fc / q / 2.0;
        let mut sum = 0.0;
        for k in 0..n_bins {
            let f = config.bin_frequency(k);
            let u = (f - fc) / sigma;
            let w = (-0.5 * u * u).exp();
            weights.set(i, k, w);
            sum += w;
        }
        for k in 0..n_bins {
            let w = weights.at(i, k) / sum;
            weights.set(i, k, w);
        }
    }
    FilterBank { weights, center_frequencies: centers }.validate()
}

pub fn build_filterbank(config: &SpectrogramConfig) -> Result<FilterBank> {
    match config.kind {
        SpecKind::Mel => build_mel_filterbank(config),
        SpecKind::Gam => build_gammatone_filterbank(config),
        SpecKind::Cqt => build_cqt_filterbank(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::stft::{N_FFT, SAMPLE_RATE};

    fn cfg(kind: SpecKind) -> SpectrogramConfig {
        SpectrogramConfig::for_kind(kind)
    }

    fn bin_of(f: f64) -> usize {
        (f * N_FFT as f64 / SAMPLE_RATE as f64).round() as usize
    }

    /// Filters whose center bin collides with a neighbor's center bin are
    /// skipped in localization tests; the FFT grid cannot separate them.
    fn localizable_filters(bank: &FilterBank) -> Vec<usize> {
        let n = bank.center_frequencies.len();
        (1..n - 1)
            .filter(|&k| {
                let b = bin_of(bank.center_frequencies[k]);
                bin_of(bank.center_frequencies[k - 1]) != b
                    && bin_of(bank.center_frequencies[k + 1]) != b
            })
            .collect()
    }

    fn tone_localization(bank: &FilterBank) {
        let n_bins = bank.weights.cols;
        for &k in &localizable_filters(bank) {
            let bin = bin_of(bank.center_frequencies[k]);
            let mut spectrum = Mat::zeros(n_bins, 1);
            spectrum.set(bin, 0, 1.0);
            let resp = bank.apply_linear(&spectrum).unwrap();
            let argmax = (0..resp.rows)
                .max_by(|&a, &b| resp.at(a, 0).partial_cmp(&resp.at(b, 0)).unwrap())
                .unwrap();
            assert_eq!(argmax, k, "tone at filter {k} center localized to {argmax}");
        }
    }

    #[test]
    fn mel_rows_nonempty_and_centers_monotone() {
        let bank = build_mel_filterbank(&cfg(SpecKind::Mel)).unwrap();
        assert_eq!(bank.weights.rows, 128);
        for w in bank.center_frequencies.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert!(bank.center_frequencies[0] >= 0.0);
        assert!(*bank.center_frequencies.last().unwrap() <= 22050.0);
    }

    #[test]
    fn mel_tone_localization() {
        tone_localization(&build_mel_filterbank(&cfg(SpecKind::Mel)).unwrap());
    }

    #[test]
    fn gammatone_erb_spacing_constant() {
        let bank = build_gammatone_filterbank(&cfg(SpecKind::Gam)).unwrap();
        let erbs: Vec<f64> = bank.center_frequencies.iter().map(|&f| erb_number(f)).collect();
        let step = erbs[1] - erbs[0];
        for w in erbs.windows(2) {
            assert!(((w[1] - w[0]) - step).abs() < 1e-9);
        }
    }

    #[test]
    fn gammatone_rows_peak_normalized() {
        let bank = build_gammatone_filterbank(&cfg(SpecKind::Gam)).unwrap();
        for r in 0..bank.weights.rows {
            let row = &bank.weights.data[r * bank.weights.cols..(r + 1) * bank.weights.cols];
            let max = row.iter().cloned().fold(f64::MIN, f64::max);
            assert!((max - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gammatone_center_dominates_two_erb_out() {
        // closed-form magnitude response comparison
        let bank = build_gammatone_filterbank(&cfg(SpecKind::Gam)).unwrap();
        for &fc in &bank.center_frequencies {
            let b = 1.019 * erb_bandwidth(fc);
            let at_center = gammatone_magnitude(fc, fc, b);
            let two_erb = 2.0 * erb_bandwidth(fc);
            assert!(at_center >= gammatone_magnitude(fc + two_erb, fc, b));
            assert!(at_center >= gammatone_magnitude(fc - two_erb, fc, b));
        }
    }

    #[test]
    fn gammatone_tone_localization() {
        tone_localization(&build_gammatone_filterbank(&cfg(SpecKind::Gam)).unwrap());
    }

    #[test]
    fn cqt_geometric_spacing_and_constant_q() {
        let bank = build_cqt_filterbank(&cfg(SpecKind::Cqt)).unwrap();
        let c = &bank.center_frequencies;
        let ratio = c[1] / c[0];
        for w in c.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-9);
        }
        // bandwidth/center is constant by construction of the Gaussian sigma
        let q = 1.0 / (2f64.powf(1.0 / CQT_BINS_PER_OCTAVE as f64) - 1.0);
        for &fc in c {
            let bw = fc / q;
            assert!((bw / fc - 1.0 / q).abs() < 1e-9);
        }
    }

    #[test]
    fn cqt_octave_doubling() {
        let bank = build_cqt_filterbank(&cfg(SpecKind::Cqt)).unwrap();
        let c = &bank.center_frequencies;
        for k in 0..c.len() - CQT_BINS_PER_OCTAVE {
            let rel = (c[k + CQT_BINS_PER_OCTAVE] - 2.0 * c[k]).abs() / (2.0 * c[k]);
            assert!(rel < 1e-6);
        }
    }

    #[test]
    fn cqt_tone_localization() {
        tone_localization(&build_cqt_filterbank(&cfg(SpecKind::Cqt)).unwrap());
    }

    #[test]
    fn apply_zero_spectrogram_gives_log_eps() {
        let bank = build_mel_filterbank(&cfg(SpecKind::Mel)).unwrap();
        let power = Mat::zeros(bank.weights.cols, 4);
        let out = apply_filterbank(&power, &bank).unwrap();
        for &v in &out.data {
            assert_eq!(v, LOG_EPS.ln());
        }
    }

    #[test]
    fn apply_matches_naive_matmul() {
        // oracle: independent naive triple loop
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut bank_weights = Mat::zeros(4, 5);
        for v in &mut bank_weights.data {
            *v = next();
        }
        let mut power = Mat::zeros(5, 3);
        for v in &mut power.data {
            *v = next();
        }
        let bank = FilterBank {
            weights: bank_weights.clone(),
            center_frequencies: vec![1.0, 2.0, 3.0, 4.0],
        };
        let got = bank.apply_linear(&power).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..5 {
                    acc += bank_weights.at(i, k) * power.at(k, j);
                }
                assert!((got.at(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_shape_mismatch_rejected() {
        let bank = build_mel_filterbank(&cfg(SpecKind::Mel)).unwrap();
        let power = Mat::zeros(7, 3);
        assert!(bank.apply_linear(&power).is_err());
    }

    #[test]
    fn filterbank_linearity_pre_log() {
        let bank = build_gammatone_filterbank(&cfg(SpecKind::Gam)).unwrap();
        let n = bank.weights.cols;
        let mut a = Mat::zeros(n, 2);
        let mut b = Mat::zeros(n, 2);
        for (i, v) in a.data.iter_mut().enumerate() {
            *v = ((i * 7919) % 1000) as f64 / 1000.0;
        }
        for (i, v) in b.data.iter_mut().enumerate() {
            *v = ((i * 104729) % 1000) as f64 / 1000.0;
        }
        let mut sum = Mat::zeros(n, 2);
        for i in 0..sum.data.len() {
            sum.data[i] = a.data[i] + b.data[i];
        }
        let fa = bank.apply_linear(&a).unwrap();
        let fb = bank.apply_linear(&b).unwrap();
        let fs = bank.apply_linear(&sum).unwrap();
        for i in 0..fs.data.len() {
            let expected = fa.data[i] + fb.data[i];
            let denom = expected.abs().max(1e-30);
            assert!(((fs.data[i] - expected) / denom).abs() < 1e-6);
        }
    }
}
