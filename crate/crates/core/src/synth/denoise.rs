//! Magnitude spectral subtraction with weighted overlap-add resynthesis.

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::LabeledClip;
use crate::dsp::{stft, AudioSignal, FrameTransform, Scale, Spectrogram, StftConfig, WindowFn};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiseConfig {
    pub window_len: usize,
    pub window_fn: WindowFn,
    /// Over-subtraction factor applied to the noise magnitude.
    pub alpha: f64,
    /// Spectral floor as a fraction of the noisy magnitude.
    pub beta: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            window_len: 1024,
            window_fn: WindowFn::Hann,
            alpha: 1.5,
            beta: 0.02,
        }
    }
}

impl DenoiseConfig {
    /// Analysis/synthesis STFT: hop is half the window.
    pub fn stft_config(&self) -> StftConfig {
        StftConfig {
            window_len: self.window_len,
            hop: self.window_len / 2,
            window_fn: self.window_fn,
        }
    }
}

/// Linear-magnitude STFT of a noise-only recording, in the denoiser's STFT layout.
pub fn noise_profile(noise: &AudioSignal, cfg: &DenoiseConfig) -> Result<Spectrogram> {
    stft(noise, &cfg.stft_config())
}

fn check_profile(profile: &Spectrogram, stft_cfg: &StftConfig, fs: f64) -> Result<()> {
    let mismatch = |what: String| Err(Error::Config(format!("noise profile STFT mismatch: {what}")));
    if profile.scale != Scale::Linear {
        return mismatch("profile must be linear magnitude".into());
    }
    if profile.n_bins != stft_cfg.n_bins() {
        return mismatch(format!("{} bins, expected {}", profile.n_bins, stft_cfg.n_bins()));
    }
    let df = fs / stft_cfg.window_len as f64;
    if profile.n_bins > 1 && (profile.freq_axis_hz[1] - df).abs() > 1e-9 * df {
        return mismatch(format!("bin spacing {} Hz, expected {df} Hz", profile.freq_axis_hz[1]));
    }
    if profile.n_frames > 1 {
        let dt = stft_cfg.hop as f64 / fs;
        let got = profile.time_axis_s[1] - profile.time_axis_s[0];
        if (got - dt).abs() > 1e-9 * dt {
            return mismatch(format!("frame spacing {got} s, expected {dt} s"));
        }
    }
    Ok(())
}

/// Subtracts `alpha` times the mean noise magnitude per bin, keeps at least `beta`
/// of the noisy magnitude, and resynthesizes with the noisy phase.
pub fn spectral_denoise(clip: &LabeledClip, noise_profile: &Spectrogram, cfg: &DenoiseConfig) -> Result<LabeledClip> {
    let scfg = cfg.stft_config();
    scfg.validate()?;
    let fs = clip.signal.sample_rate_hz;
    check_profile(noise_profile, &scfg, fs)?;
    let l = cfg.window_len;
    let hop = scfg.hop;
    let nb = scfg.n_bins();
    let mean_noise: Vec<f64> = (0..nb)
        .map(|b| {
            let row = noise_profile.bin_row(b);
            row.iter().sum::<f64>() / row.len().max(1) as f64
        })
        .collect();

    // Half a window of zeros in front and enough behind that every sample is covered twice.
    let n = clip.signal.len();
    let front = l / 2;
    let core = front + n;
    let frames = core.div_ceil(hop).max(1) + 1;
    let padded_len = (frames - 1) * hop + l;
    let mut padded = vec![0.0; padded_len];
    padded[front..front + n].copy_from_slice(&clip.signal.samples);

    let mut tx = FrameTransform::new(&scfg);
    let window = tx.window.clone();
    let mut out = vec![0.0; padded_len];
    let mut norm = vec![0.0; padded_len];
    let mut spec = vec![Complex::new(0.0, 0.0); l];
    for t in 0..frames {
        let s = t * hop;
        spec.copy_from_slice(tx.spectrum(&padded[s..s + l]));
        for (k, c) in spec.iter_mut().enumerate() {
            let mag = c.norm();
            if mag == 0.0 {
                continue;
            }
            let noise = mean_noise[k.min(l - k)];
            let kept = (mag - cfg.alpha * noise).max(cfg.beta * mag);
            *c *= kept / mag;
        }
        let y = tx.inverse(&spec);
        for (i, (&yv, &w)) in y.iter().zip(&window).enumerate() {
            out[s + i] += w * yv;
            norm[s + i] += w * w;
        }
    }
    let samples = (front..front + n)
        .map(|i| if norm[i] > 1e-12 { out[i] / norm[i] } else { 0.0 })
        .collect();
    Ok(LabeledClip {
        signal: AudioSignal::new(samples, fs)?,
        ..clip.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::noise::colored_noise;
    use crate::synth::{generate_clip, NoiseColor, OltcState, SynthConfig};

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn zero_profile_is_identity() {
        let clip = generate_clip(OltcState::GenevaDrive, &SynthConfig::default()).unwrap();
        let cfg = DenoiseConfig::default();
        let silent = AudioSignal::new(vec![0.0; 4096], 48_000.0).unwrap();
        let prof = noise_profile(&silent, &cfg).unwrap();
        let out = spectral_denoise(&clip, &prof, &cfg).unwrap();
        assert!(rel_l2(&out.signal.samples, &clip.signal.samples) < 1e-3);
    }

    #[test]
    fn mismatched_profile() {
        let clip = generate_clip(OltcState::GenevaDrive, &SynthConfig::default()).unwrap();
        let noise = AudioSignal::new(colored_noise(8192, NoiseColor::White, 1.0, 1), 48_000.0).unwrap();
        let other = DenoiseConfig {
            window_len: 512,
            ..DenoiseConfig::default()
        };
        let prof = noise_profile(&noise, &other).unwrap();
        assert!(matches!(
            spectral_denoise(&clip, &prof, &DenoiseConfig::default()),
            Err(Error::Config(_))
        ));
        // same bin count, wrong hop
        let prof = stft(&noise, &StftConfig::default()).unwrap();
        assert!(matches!(
            spectral_denoise(&clip, &prof, &DenoiseConfig::default()),
            Err(Error::Config(_))
        ));
    }
}
