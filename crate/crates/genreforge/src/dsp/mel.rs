//! Mel filterbank and MFCC computation.
//!
//! Filters are triangles over mel-equispaced edge frequencies, sampled at
//! FFT-bin centers and peak-normalized to 1. MFCCs are the leading
//! coefficients of an orthonormal DCT-II over log mel energies.

use super::{DspError, Spectrogram};
use crate::matrix::Matrix;

/// Additive guard inside the log so silent frames stay finite.
pub const LOG_EPSILON: f64 = 1e-10;

/// `mel(f) = 2595 * log10(1 + f/700)`
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10.0_f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank: `n_mels x (n_fft/2 + 1)` non-negative
/// weights, one unimodal row per filter.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub weights: Matrix,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.cols()
    }
}

/// Builds a mel filterbank for the given FFT size and sample rate.
///
/// `n_mels + 2` mel-equispaced edge points between `mel(fmin)` and
/// `mel(fmax)` are mapped back to Hz; filter `m` is the triangle over
/// edges `(m, m+1, m+2)` sampled at bin centers `k * sr / n_fft`, then
/// divided by its sampled maximum so every row peaks at exactly 1.
pub fn mel_filterbank(
    n_mels: usize,
    n_fft: usize,
    sample_rate_hz: u32,
    fmin_hz: f64,
    fmax_hz: f64,
) -> Result<MelFilterbank, DspError> {
    let nyquist = f64::from(sample_rate_hz) / 2.0;
    if !(0.0..nyquist).contains(&fmin_hz) || fmax_hz <= fmin_hz || fmax_hz > nyquist {
        return Err(DspError::InvalidFrequencyRange {
            fmin: fmin_hz,
            fmax: fmax_hz,
            nyquist,
        });
    }
    if n_mels == 0 {
        return Err(DspError::DimensionMismatch("n_mels must be >= 1".to_string()));
    }

    let mel_lo = hz_to_mel(fmin_hz);
    let mel_hi = hz_to_mel(fmax_hz);
    let edges_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let n_bins = n_fft / 2 + 1;
    let bin_hz = f64::from(sample_rate_hz) / n_fft as f64;
    let mut weights = Matrix::zeros(n_mels, n_bins);
    for m in 0..n_mels {
        let (lo, center, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        let row = weights.row_mut(m);
        for (k, slot) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let v = if f > lo && f < center {
                (f - lo) / (center - lo)
            } else if (f - center).abs() == 0.0 {
                1.0
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            *slot = v;
        }
        let max = row.iter().copied().fold(0.0f64, f64::max);
        if max > 0.0 {
            for v in row.iter_mut() {
                *v /= max;
            }
        }
    }
    Ok(MelFilterbank {
        weights,
        fmin_hz,
        fmax_hz,
    })
}

/// MFCC matrix: `n_frames x n_mfcc`, all entries finite.
#[derive(Debug, Clone)]
pub struct MfccMatrix {
    pub coeffs: Matrix,
}

impl MfccMatrix {
    pub fn n_frames(&self) -> usize {
        self.coeffs.rows()
    }

    pub fn n_mfcc(&self) -> usize {
        self.coeffs.cols()
    }

    /// Keeps the first `max_frames` frames, zero-padding if shorter.
    pub fn pad_or_truncate(&self, max_frames: usize) -> MfccMatrix {
        MfccMatrix {
            coeffs: self.coeffs.pad_or_truncate_rows(max_frames),
        }
    }
}

/// Orthonormal DCT-II of `input`, keeping coefficients `0..n_keep`.
///
/// `C[k] = s(k) * sum_n x[n] * cos(pi * (2n+1) * k / (2N))`,
/// `s(0) = sqrt(1/N)`, `s(k>0) = sqrt(2/N)`.
pub fn dct_ii_orthonormal(input: &[f64], n_keep: usize) -> Vec<f64> {
    let n = input.len();
    let mut out = Vec::with_capacity(n_keep);
    for k in 0..n_keep {
        let mut sum = 0.0;
        for (i, &x) in input.iter().enumerate() {
            sum += x * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        out.push(scale * sum);
    }
    out
}

/// MFCCs of a power spectrogram: per frame, mel energies -> `ln(e + eps)`
/// -> orthonormal DCT-II, keeping coefficients `0..n_mfcc`.
pub fn mfcc(
    spec: &Spectrogram,
    bank: &MelFilterbank,
    n_mfcc: usize,
) -> Result<MfccMatrix, DspError> {
    if bank.n_bins() != spec.bins.cols() {
        return Err(DspError::DimensionMismatch(format!(
            "filterbank has {} bins, spectrogram has {}",
            bank.n_bins(),
            spec.bins.cols()
        )));
    }
    if n_mfcc > bank.n_mels() {
        return Err(DspError::DimensionMismatch(format!(
            "n_mfcc {} exceeds n_mels {}",
            n_mfcc,
            bank.n_mels()
        )));
    }
    let n_mels = bank.n_mels();
    let mut coeffs = Matrix::zeros(spec.bins.rows(), n_mfcc);
    let mut log_mel = vec![0.0f64; n_mels];
    for t in 0..spec.bins.rows() {
        let power = spec.bins.row(t);
        for (m, slot) in log_mel.iter_mut().enumerate() {
            let mut e = 0.0;
            for (w, p) in bank.weights.row(m).iter().zip(power) {
                e += w * p;
            }
            *slot = (e + LOG_EPSILON).ln();
        }
        let row = dct_ii_orthonormal(&log_mel, n_mfcc);
        coeffs.row_mut(t).copy_from_slice(&row);
    }
    Ok(MfccMatrix { coeffs })
}
