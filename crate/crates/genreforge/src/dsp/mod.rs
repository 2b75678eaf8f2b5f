//! Spectral transforms: FFT, Hann-windowed STFT, power spectrograms,
//! mel filterbanks, MFCCs, and fixed-length padding.
//!
//! Everything here is pure and deterministic; identical input always
//! produces bit-identical output.

mod fft;
mod mel;

pub use fft::{fft, FftPlan};
pub use mel::{dct_ii_orthonormal, hz_to_mel, mel_filterbank, mel_to_hz, mfcc, MelFilterbank, MfccMatrix};

use num_complex::Complex64;
use thiserror::Error;

use crate::audio::AudioClip;
use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("FFT length {0} is not a power of two")]
    NonPowerOfTwoLength(usize),
    #[error("signal of {len} samples is shorter than one frame ({n_fft})")]
    SignalTooShort { len: usize, n_fft: usize },
    #[error("invalid frequency range: fmin {fmin} Hz, fmax {fmax} Hz, Nyquist {nyquist} Hz")]
    InvalidFrequencyRange { fmin: f64, fmax: f64, nyquist: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Window kind applied to each frame before the FFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Hann,
}

/// STFT framing parameters. `n_fft` must be a power of two and
/// `0 < hop <= n_fft`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            hop: 512,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if !self.n_fft.is_power_of_two() || self.n_fft == 0 {
            return Err(DspError::NonPowerOfTwoLength(self.n_fft));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(DspError::DimensionMismatch(format!(
                "hop {} must satisfy 0 < hop <= n_fft {}",
                self.hop, self.n_fft
            )));
        }
        Ok(())
    }

    /// Number of frames for a signal of `len` samples:
    /// `1 + floor((len - n_fft) / hop)`, frames non-centered.
    pub fn n_frames(&self, len: usize) -> Result<usize, DspError> {
        if len < self.n_fft {
            return Err(DspError::SignalTooShort {
                len,
                n_fft: self.n_fft,
            });
        }
        Ok(1 + (len - self.n_fft) / self.hop)
    }

    /// Bin count of the one-sided power spectrum.
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}

/// One-sided power spectrogram: `n_frames x (n_fft/2 + 1)`, entries
/// `|X[k]|^2`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub bins: Matrix,
    pub config: StftConfig,
    pub sample_rate_hz: u32,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.bins.rows()
    }

    /// Keeps the first `max_frames` frames, zero-padding if shorter.
    pub fn pad_or_truncate(&self, max_frames: usize) -> Spectrogram {
        Spectrogram {
            bins: self.bins.pad_or_truncate_rows(max_frames),
            config: self.config,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Symmetric Hann window `w[n] = 0.5 * (1 - cos(2*pi*n/(N-1)))`.
pub fn hann_window(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// Hann-windowed short-time Fourier transform of a mono clip.
///
/// Frame `t` covers samples `[t*hop, t*hop + n_fft)`; no padding is applied
/// at the signal edges. Fails with `SignalTooShort` when the clip cannot
/// fill one frame.
pub fn stft(clip: &AudioClip, cfg: &StftConfig) -> Result<Spectrogram, DspError> {
    cfg.validate()?;
    let n_frames = cfg.n_frames(clip.samples.len())?;
    let window = hann_window(cfg.n_fft);
    let plan = FftPlan::new(cfg.n_fft)?;
    let n_bins = cfg.n_bins();

    let mut bins = Matrix::zeros(n_frames, n_bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
    for t in 0..n_frames {
        let start = t * cfg.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(clip.samples[start + i] * window[i], 0.0);
        }
        plan.process(&mut buf);
        let row = bins.row_mut(t);
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = buf[k].norm_sqr();
        }
    }
    Ok(Spectrogram {
        bins,
        config: *cfg,
        sample_rate_hz: clip.sample_rate_hz,
    })
}
