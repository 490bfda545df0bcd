use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::LabeledClip;
use crate::dsp::AudioSignal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseColor {
    White,
    /// Power falls 3 dB per octave.
    Pink,
}

/// Zero-mean Gaussian noise of the given color, scaled to exactly `power`.
pub fn colored_noise(len: usize, color: NoiseColor, power: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    if color == NoiseColor::Pink && len > 1 {
        let mut planner = FftPlanner::new();
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        planner.plan_fft_forward(len).process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            let f = k.min(len - k);
            *c = if f == 0 {
                Complex::new(0.0, 0.0)
            } else {
                *c / (f as f64).sqrt()
            };
        }
        planner.plan_fft_inverse(len).process(&mut buf);
        x = buf.iter().map(|c| c.re).collect();
    }
    let mean = x.iter().sum::<f64>() / len.max(1) as f64;
    for v in &mut x {
        *v -= mean;
    }
    let p = x.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64;
    let g = if p > 0.0 { (power / p).sqrt() } else { 0.0 };
    x.into_iter().map(|v| v * g).collect()
}

/// `10 log10(P_signal / P_noise)`.
pub fn snr_db(signal_power: f64, noise_power: f64) -> f64 {
    10.0 * (signal_power / noise_power).log10()
}

/// Adds noise whose power is the clip power divided by `10^(snr_db / 10)`.
pub fn add_noise(clip: &LabeledClip, snr_db: f64, color: NoiseColor, seed: u64) -> Result<LabeledClip> {
    let p = clip.signal.power();
    if !(p > 0.0) {
        return Err(Error::Validation("cannot set an SNR for a zero-power clip".into()));
    }
    if !snr_db.is_finite() {
        return Err(Error::Validation(format!("SNR must be finite, got {snr_db}")));
    }
    let noise = colored_noise(clip.signal.len(), color, p / 10f64.powf(snr_db / 10.0), seed);
    let samples = clip.signal.samples.iter().zip(&noise).map(|(s, n)| s + n).collect();
    Ok(LabeledClip {
        signal: AudioSignal::new(samples, clip.signal.sample_rate_hz)?,
        label: clip.label,
        snr_db: Some(snr_db),
        seed: clip.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_clip, OltcState, SynthConfig};

    fn measured_snr(clean: &LabeledClip, noisy: &LabeledClip) -> f64 {
        let n = clean.signal.len() as f64;
        let pn = clean
            .signal
            .samples
            .iter()
            .zip(&noisy.signal.samples)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            / n;
        snr_db(clean.signal.power(), pn)
    }

    #[test]
    fn snr_targets() {
        let clip = generate_clip(OltcState::DiverterSwitch, &SynthConfig::default()).unwrap();
        for (snr, color) in [(0.0, NoiseColor::White), (20.0, NoiseColor::White), (7.5, NoiseColor::Pink)] {
            let noisy = add_noise(&clip, snr, color, 9).unwrap();
            assert!((measured_snr(&clip, &noisy) - snr).abs() < 0.1);
            assert_eq!(noisy.snr_db, Some(snr));
        }
    }

    #[test]
    fn zero_power_rejected() {
        let mut clip = generate_clip(OltcState::IdleMotorHum, &SynthConfig::default()).unwrap();
        clip.signal.samples.iter_mut().for_each(|v| *v = 0.0);
        assert!(matches!(add_noise(&clip, 10.0, NoiseColor::White, 1), Err(Error::Validation(_))));
    }
}
