use serde::{Deserialize, Serialize};

use super::{stft, AudioSignal, Scale, Spectrogram, StftConfig, DB_FLOOR};
use crate::error::{Error, Result};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 64,
            f_min_hz: 20.0,
            f_max_hz: 16_000.0,
        }
    }
}

/// Triangular filters, row-major `n_mels x n_fft_bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelBank {
    pub weights: Vec<f64>,
    pub n_mels: usize,
    pub n_fft_bins: usize,
    /// Center frequency of each filter.
    pub centers_hz: Vec<f64>,
    /// Lower and upper edge of each filter.
    pub edges_hz: Vec<(f64, f64)>,
}

impl MelBank {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_fft_bins..(m + 1) * self.n_fft_bins]
    }
}

/// HTK-style Mel filter bank: `n_mels` triangles with peaks equally spaced on the Mel scale.
///
/// Bin `k` sits at `k * (Fs/2) / (n_fft_bins - 1)`. Each triangle rises from the previous
/// center to its own center and falls to the next one, with unit peak.
pub fn mel_filterbank(
    n_mels: usize,
    n_fft_bins: usize,
    f_min_hz: f64,
    f_max_hz: f64,
    sample_rate_hz: f64,
) -> Result<MelBank> {
    if n_mels < 2 {
        return Err(Error::Config(format!("need at least 2 Mel bands, got {n_mels}")));
    }
    if n_fft_bins < 2 {
        return Err(Error::Config(format!("need at least 2 FFT bins, got {n_fft_bins}")));
    }
    let nyquist = sample_rate_hz / 2.0;
    if !(0.0 <= f_min_hz && f_min_hz < f_max_hz && f_max_hz <= nyquist) {
        return Err(Error::Config(format!(
            "need 0 <= f_min < f_max <= {nyquist} Hz, got [{f_min_hz}, {f_max_hz}]"
        )));
    }
    let (m_lo, m_hi) = (hz_to_mel(f_min_hz), hz_to_mel(f_max_hz));
    let mut points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    points[0] = f_min_hz;
    points[n_mels + 1] = f_max_hz;
    let bin_hz = nyquist / (n_fft_bins - 1) as f64;
    let mut weights = vec![0.0; n_mels * n_fft_bins];
    for m in 0..n_mels {
        let (lo, c, hi) = (points[m], points[m + 1], points[m + 2]);
        let row = &mut weights[m * n_fft_bins..(m + 1) * n_fft_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            *w = if f > lo && f <= c {
                (f - lo) / (c - lo)
            } else if f > c && f < hi {
                (hi - f) / (hi - c)
            } else {
                0.0
            };
        }
        if row.iter().all(|&w| w <= 0.0) {
            return Err(Error::Config(format!(
                "Mel band {m} ({lo:.1}-{hi:.1} Hz) covers no FFT bin; too many bands for {bin_hz:.2} Hz resolution"
            )));
        }
    }
    Ok(MelBank {
        weights,
        n_mels,
        n_fft_bins,
        centers_hz: points[1..=n_mels].to_vec(),
        edges_hz: (0..n_mels).map(|m| (points[m], points[m + 2])).collect(),
    })
}

/// Default Mel front end with `n_mels` bands over 20 Hz - 16 kHz (capped at Nyquist).
pub fn mel_spectrogram(sig: &AudioSignal, cfg: &StftConfig, n_mels: usize) -> Result<Spectrogram> {
    let d = MelConfig::default();
    let mel = MelConfig {
        n_mels,
        f_max_hz: d.f_max_hz.min(sig.sample_rate_hz / 2.0),
        ..d
    };
    mel_spectrogram_with(sig, cfg, &mel)
}

/// `10 log10(max(M |S|^2, 1e-12))`, i.e. Mel-band power in dB with a -120 dB floor.
pub fn mel_spectrogram_with(sig: &AudioSignal, cfg: &StftConfig, mel: &MelConfig) -> Result<Spectrogram> {
    let bank = mel_filterbank(mel.n_mels, cfg.n_bins(), mel.f_min_hz, mel.f_max_hz, sig.sample_rate_hz)?;
    let lin = stft(sig, cfg)?;
    Ok(apply_bank(&bank, &lin))
}

pub(crate) fn apply_bank(bank: &MelBank, lin: &Spectrogram) -> Spectrogram {
    let nt = lin.n_frames;
    let mut values = vec![0.0; bank.n_mels * nt];
    for m in 0..bank.n_mels {
        let out = &mut values[m * nt..(m + 1) * nt];
        for (k, &w) in bank.row(m).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &s) in out.iter_mut().zip(lin.bin_row(k)) {
                *o += w * s * s;
            }
        }
    }
    let floor = 10f64.powf(DB_FLOOR / 10.0);
    for v in &mut values {
        *v = 10.0 * v.max(floor).log10();
    }
    Spectrogram {
        values,
        n_bins: bank.n_mels,
        n_frames: nt,
        freq_axis_hz: bank.centers_hz.clone(),
        time_axis_s: lin.time_axis_s.clone(),
        scale: Scale::Db,
    }
}
