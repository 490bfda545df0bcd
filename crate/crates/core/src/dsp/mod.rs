//! Time-frequency front end: framing, STFT, dB scaling, Mel filter banks.

pub mod io;
mod mel;

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_spectrogram_with, mel_to_hz, MelBank, MelConfig};

/// Magnitudes below this are clamped before taking logs (-120 dB floor).
pub const MAG_FLOOR: f64 = 1e-6;
pub const DB_FLOOR: f64 = -120.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::Validation(format!("sample rate must be > 0, got {sample_rate_hz}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean squared sample value.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowFn {
    #[default]
    Hann,
    Hamming,
    Rect,
}

impl WindowFn {
    /// Periodic window of length `len` (sums to a constant under 50% overlap for Hann).
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / n;
                match self {
                    WindowFn::Hann => 0.5 - 0.5 * x.cos(),
                    WindowFn::Hamming => 0.54 - 0.46 * x.cos(),
                    WindowFn::Rect => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub window_fn: WindowFn,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 1024,
            hop: 1024,
            window_fn: WindowFn::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 || self.hop > self.window_len {
            return Err(Error::Config(format!(
                "need 1 <= hop <= window_len, got hop {} and window_len {}",
                self.hop, self.window_len
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.window_len / 2 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Db,
}

/// Time-frequency matrix stored row-major as `n_bins x n_frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Vec<f64>,
    pub n_bins: usize,
    pub n_frames: usize,
    pub freq_axis_hz: Vec<f64>,
    pub time_axis_s: Vec<f64>,
    pub scale: Scale,
}

impl Spectrogram {
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values[bin * self.n_frames + frame]
    }

    pub fn bin_row(&self, bin: usize) -> &[f64] {
        &self.values[bin * self.n_frames..(bin + 1) * self.n_frames]
    }
}

/// `floor((n - window_len) / hop) + 1`, or 0 when the signal is shorter than one window.
pub fn frame_count(n: usize, window_len: usize, hop: usize) -> usize {
    if n < window_len || hop == 0 {
        0
    } else {
        (n - window_len) / hop + 1
    }
}

/// Splits the signal into frames starting at `t * hop`; the incomplete tail is dropped.
pub fn frame_signal<'a>(sig: &'a AudioSignal, cfg: &StftConfig) -> Result<Vec<&'a [f64]>> {
    cfg.validate()?;
    let n = sig.len();
    if n < cfg.window_len {
        return Err(Error::Length(format!(
            "signal of {n} samples is shorter than one {}-sample window",
            cfg.window_len
        )));
    }
    Ok((0..frame_count(n, cfg.window_len, cfg.hop))
        .map(|t| &sig.samples[t * cfg.hop..t * cfg.hop + cfg.window_len])
        .collect())
}

/// Reusable FFT plan for a fixed window.
pub(crate) struct FrameTransform {
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    pub(crate) window: Vec<f64>,
    buf: Vec<Complex<f64>>,
}

impl FrameTransform {
    pub(crate) fn new(cfg: &StftConfig) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fft: planner.plan_fft_forward(cfg.window_len),
            ifft: planner.plan_fft_inverse(cfg.window_len),
            window: cfg.window_fn.coefficients(cfg.window_len),
            buf: vec![Complex::new(0.0, 0.0); cfg.window_len],
        }
    }

    /// Full complex spectrum of one windowed frame.
    pub(crate) fn spectrum(&mut self, frame: &[f64]) -> &[Complex<f64>] {
        for ((b, &x), &w) in self.buf.iter_mut().zip(frame).zip(&self.window) {
            *b = Complex::new(x * w, 0.0);
        }
        self.fft.process(&mut self.buf);
        &self.buf
    }

    /// Inverse of a full spectrum, real part, scaled by 1/L.
    pub(crate) fn inverse(&mut self, spectrum: &[Complex<f64>]) -> Vec<f64> {
        self.buf.copy_from_slice(spectrum);
        self.ifft.process(&mut self.buf);
        let n = self.buf.len() as f64;
        self.buf.iter().map(|c| c.re / n).collect()
    }
}

/// One-sided STFT magnitude, bins `0..=L/2`, frequency of bin `f` is `f * Fs / L`.
pub fn stft(sig: &AudioSignal, cfg: &StftConfig) -> Result<Spectrogram> {
    let frames = frame_signal(sig, cfg)?;
    let n_bins = cfg.n_bins();
    let n_frames = frames.len();
    let mut tx = FrameTransform::new(cfg);
    let mut values = vec![0.0; n_bins * n_frames];
    for (t, frame) in frames.iter().enumerate() {
        let spec = tx.spectrum(frame);
        for (f, c) in spec.iter().take(n_bins).enumerate() {
            values[f * n_frames + t] = c.norm();
        }
    }
    Ok(Spectrogram {
        values,
        n_bins,
        n_frames,
        freq_axis_hz: (0..n_bins)
            .map(|f| f as f64 * sig.sample_rate_hz / cfg.window_len as f64)
            .collect(),
        time_axis_s: (0..n_frames)
            .map(|t| (t * cfg.hop) as f64 / sig.sample_rate_hz)
            .collect(),
        scale: Scale::Linear,
    })
}

/// `20 log10(max(|S|, 1e-6))`.
pub fn to_db(spec: &Spectrogram) -> Result<Spectrogram> {
    if spec.scale == Scale::Db {
        return Err(Error::State("spectrogram is already in dB".into()));
    }
    let mut out = spec.clone();
    for v in &mut out.values {
        *v = 20.0 * v.abs().max(MAG_FLOOR).log10();
    }
    out.scale = Scale::Db;
    Ok(out)
}
