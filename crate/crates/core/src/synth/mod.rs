//! Synthetic OLTC acoustic states, noise injection and spectral-subtraction denoising.
//!
//! The waveform recipes are parametric stand-ins for recorded tap-changer sounds,
//! one per operating state. Every clip sits on the same stationary hum floor
//! (100 Hz mains hum with harmonics plus a 550 Hz motor tone) that state 1 consists of.

mod denoise;
mod filters;
mod noise;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::AudioSignal;
use crate::error::{Error, Result};
use crate::seed;

pub use denoise::{noise_profile, spectral_denoise, DenoiseConfig};
pub use noise::{add_noise, colored_noise, snr_db, NoiseColor};

/// The seven tap-changer operating states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OltcState {
    IdleMotorHum,
    MotorStart,
    GenevaDrive,
    SelectorStop,
    DiverterSwitch,
    MotorStop,
    Braking,
}

impl OltcState {
    pub const ALL: [OltcState; 7] = [
        OltcState::IdleMotorHum,
        OltcState::MotorStart,
        OltcState::GenevaDrive,
        OltcState::SelectorStop,
        OltcState::DiverterSwitch,
        OltcState::MotorStop,
        OltcState::Braking,
    ];

    /// State number, 1 to 7.
    pub fn id(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_id(id: u8) -> Result<Self> {
        Self::ALL
            .get(usize::from(id).wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Validation(format!("unknown OLTC state id {id}, expected 1-7")))
    }

    /// Zero-based class index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OltcState::IdleMotorHum => "idle/motor-hum",
            OltcState::MotorStart => "motor-start",
            OltcState::GenevaDrive => "geneva-drive",
            OltcState::SelectorStop => "selector-stop",
            OltcState::DiverterSwitch => "diverter-switch",
            OltcState::MotorStop => "motor-stop",
            OltcState::Braking => "braking",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub sample_rate_hz: f64,
    pub segment_samples: usize,
    pub seed: u64,
    /// Relative spread of every recipe parameter, in `[0, 0.5]`.
    pub jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 48_000.0,
            segment_samples: 17 * 1024,
            seed: 42,
            jitter: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::Config("sample_rate_hz must be > 0".into()));
        }
        if self.segment_samples < 1024 {
            return Err(Error::Config(format!(
                "segment_samples must cover one 1024-sample window, got {}",
                self.segment_samples
            )));
        }
        if !(0.0..=0.5).contains(&self.jitter) {
            return Err(Error::Config(format!("jitter must lie in [0, 0.5], got {}", self.jitter)));
        }
        // highest recipe component sits at 8 kHz
        if self.sample_rate_hz < 20_000.0 {
            return Err(Error::Config("sample_rate_hz must be >= 20 kHz for the recipes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub signal: AudioSignal,
    pub label: OltcState,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

/// Onset spread in seconds at jitter 1; event timing is not aligned across recordings.
pub const ONSET_SPREAD_S: f64 = 0.25;

/// Draws recipe parameters: `base * (1 + jitter * U(-1, 1))`.
struct Jitter<'a> {
    rng: &'a mut ChaCha8Rng,
    amount: f64,
}

impl Jitter<'_> {
    fn around(&mut self, base: f64) -> f64 {
        let u: f64 = self.rng.random_range(-1.0..=1.0);
        base * (1.0 + self.amount * u)
    }

    /// Event time `base` shifted by up to `jitter * ONSET_SPREAD_S` either way.
    fn onset(&mut self, base: f64) -> f64 {
        let u: f64 = self.rng.random_range(-1.0..=1.0);
        (base + self.amount * ONSET_SPREAD_S * u).max(0.0)
    }

    fn phase(&mut self) -> f64 {
        self.rng.random_range(0.0..2.0 * PI)
    }

    fn gauss(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }
}

struct Canvas {
    x: Vec<f64>,
    fs: f64,
}

impl Canvas {
    fn t(&self, n: usize) -> f64 {
        n as f64 / self.fs
    }

    fn idx(&self, t: f64) -> usize {
        ((t * self.fs).max(0.0) as usize).min(self.x.len())
    }

    fn tone(&mut self, freq: f64, amp: f64, phase: f64) {
        let w = 2.0 * PI * freq / self.fs;
        for (n, v) in self.x.iter_mut().enumerate() {
            *v += amp * (w * n as f64 + phase).sin();
        }
    }

    /// Linear chirp from `f0` to `f1` over `[t0, t0 + dur)` with raised-cosine edges.
    fn chirp(&mut self, t0: f64, dur: f64, f0: f64, f1: f64, amp: f64, phase: f64) {
        let (a, b) = (self.idx(t0), self.idx(t0 + dur));
        let edge = 0.01;
        for n in a..b {
            let tau = self.t(n) - t0;
            let inst = 2.0 * PI * (f0 * tau + 0.5 * (f1 - f0) / dur * tau * tau);
            let env = (tau / edge).min((dur - tau) / edge).clamp(0.0, 1.0);
            let env = 0.5 - 0.5 * (PI * env).cos();
            self.x[n] += amp * env * (inst + phase).sin();
        }
    }

    /// Exponentially decaying sinusoid starting at `t0`.
    fn ring(&mut self, t0: f64, freq: f64, decay_s: f64, amp: f64, phase: f64) {
        let a = self.idx(t0);
        let b = self.idx(t0 + 8.0 * decay_s);
        for n in a..b {
            let tau = self.t(n) - t0;
            self.x[n] += amp * (-tau / decay_s).exp() * (2.0 * PI * freq * tau + phase).sin();
        }
    }

    /// Adds `burst` (already shaped) starting at `t0`, weighted by an exponential envelope.
    fn burst(&mut self, t0: f64, burst: &[f64], decay_s: f64, amp: f64) {
        let a = self.idx(t0);
        for (k, &v) in burst.iter().enumerate() {
            let Some(slot) = self.x.get_mut(a + k) else { break };
            let tau = k as f64 / self.fs;
            *slot += amp * (-tau / decay_s).exp() * v;
        }
    }

    /// Adds `noise` over `[t0, t0 + dur)` with raised-cosine fade in/out.
    fn band(&mut self, t0: f64, dur: f64, noise: &[f64], amp: f64) {
        let (a, b) = (self.idx(t0), self.idx(t0 + dur));
        let edge = 0.015;
        for n in a..b {
            let tau = self.t(n) - t0;
            let env = (tau / edge).min((dur - tau) / edge).clamp(0.0, 1.0);
            let env = 0.5 - 0.5 * (PI * env).cos();
            self.x[n] += amp * env * noise[n - a];
        }
    }
}

fn shaped_noise(j: &mut Jitter<'_>, len: usize, taps: &[f64]) -> Vec<f64> {
    let pad = taps.len();
    let raw: Vec<f64> = (0..len + 2 * pad).map(|_| j.gauss()).collect();
    let y = filters::filter(&raw, taps);
    let y = &y[pad..pad + len];
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt().max(1e-12);
    y.iter().map(|v| v / rms).collect()
}

fn hum_floor(c: &mut Canvas, j: &mut Jitter<'_>) {
    let mains = j.around(100.0);
    for (h, amp) in [(1.0, 0.020), (2.0, 0.010), (3.0, 0.006)] {
        let a = j.around(amp);
        let p = j.phase();
        c.tone(mains * h, a, p);
    }
    let motor = j.around(550.0);
    let a = j.around(0.008);
    let p = j.phase();
    c.tone(motor, a, p);
}

/// Generates one pre-segmented clip for `state`. Deterministic in `(state, cfg)`.
pub fn generate_clip(state: OltcState, cfg: &SynthConfig) -> Result<LabeledClip> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, u64::from(state.id()), u64::MAX));
    let mut j = Jitter {
        rng: &mut rng,
        amount: cfg.jitter,
    };
    let fs = cfg.sample_rate_hz;
    let len = cfg.segment_samples;
    let dur = len as f64 / fs;
    let mut c = Canvas {
        x: vec![0.0; len],
        fs,
    };
    hum_floor(&mut c, &mut j);
    match state {
        OltcState::IdleMotorHum => {}
        OltcState::MotorStart => {
            let t0 = j.onset(0.06);
            let span = j.around(0.24);
            let (f0, f1) = (j.around(200.0), j.around(550.0));
            let (a, p) = (j.around(0.12), j.phase());
            c.chirp(t0, span, f0, f1, a, p);
            let taps = filters::lowpass_taps(j.around(3000.0) / fs, 63);
            let burst = shaped_noise(&mut j, (0.02 * fs) as usize, &taps);
            let a = j.around(0.25);
            c.burst(t0, &burst, j.around(0.004), a);
        }
        OltcState::GenevaDrive => {
            let period = j.around(0.040);
            let freq = j.around(5000.0);
            let decay = j.around(0.003);
            let mut t = j.onset(0.015);
            while t < dur {
                let (a, p) = (j.around(0.3), j.phase());
                c.ring(t, freq, decay, a, p);
                t += period;
            }
        }
        OltcState::SelectorStop => {
            let t0 = j.onset(0.12);
            let taps = filters::lowpass_taps(0.3, 31);
            let click = shaped_noise(&mut j, (0.002 * fs) as usize, &taps);
            let a = j.around(0.8);
            c.burst(t0, &click, 0.0008, a);
            let (f, d, a, p) = (j.around(1200.0), j.around(0.04), j.around(0.4), j.phase());
            c.ring(t0, f, d, a, p);
        }
        OltcState::DiverterSwitch => {
            let taps = filters::lowpass_taps(j.around(8000.0).min(0.45 * fs) / fs, 63);
            let t0 = j.onset(0.09);
            let gap = j.around(0.06);
            for t in [t0, t0 + gap] {
                let burst = shaped_noise(&mut j, (0.03 * fs) as usize, &taps);
                let (d, a) = (j.around(0.01), j.around(0.5));
                c.burst(t, &burst, d, a);
            }
        }
        OltcState::MotorStop => {
            let t0 = j.onset(0.03);
            let span = j.around(0.25);
            let f0 = j.around(550.0);
            let (a, p) = (j.around(0.12), j.phase());
            c.chirp(t0, span, f0, 0.0, a, p);
            let taps = filters::lowpass_taps(0.25, 31);
            let click = shaped_noise(&mut j, (0.001 * fs) as usize, &taps);
            let a = j.around(0.3);
            c.burst(t0 + span, &click, 0.0005, a);
        }
        OltcState::Braking => {
            let t0 = j.onset(0.12);
            let span = j.around(0.15);
            let (lo, hi) = (j.around(2000.0), j.around(4000.0));
            let taps = filters::bandpass_taps(lo / fs, hi / fs, 101);
            let friction = shaped_noise(&mut j, (span * fs) as usize + 1, &taps);
            let a = j.around(0.06);
            c.band(t0, span, &friction, a);
            let n_hits = j.rng.random_range(5..=8);
            let click_taps = filters::lowpass_taps(0.2, 31);
            for _ in 0..n_hits {
                let t = t0 + j.uniform(0.0, span);
                let click = shaped_noise(&mut j, (0.0015 * fs) as usize, &click_taps);
                let a = j.around(0.25);
                c.burst(t, &click, 0.0006, a);
            }
        }
    }
    Ok(LabeledClip {
        signal: AudioSignal::new(c.x, fs)?,
        label: state,
        snr_db: None,
        seed: cfg.seed,
    })
}

/// `7 * n_per_class` clips in class-major order; clip `i` of class `c` uses seed `seed ^ mix(c, i)`.
pub fn generate_dataset(n_per_class: usize, cfg: &SynthConfig) -> Result<Vec<LabeledClip>> {
    if n_per_class == 0 {
        return Err(Error::Validation("n_per_class must be >= 1".into()));
    }
    cfg.validate()?;
    let mut out = Vec::with_capacity(7 * n_per_class);
    for state in OltcState::ALL {
        for i in 0..n_per_class {
            let clip_cfg = SynthConfig {
                seed: seed::derive(cfg.seed, u64::from(state.id()), i as u64),
                ..*cfg
            };
            out.push(generate_clip(state, &clip_cfg)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_ids_are_bijective() {
        for s in OltcState::ALL {
            assert_eq!(OltcState::from_id(s.id()).unwrap(), s);
        }
        assert!(OltcState::from_id(0).is_err());
        assert!(OltcState::from_id(8).is_err());
    }

    #[test]
    fn clip_is_deterministic() {
        let cfg = SynthConfig::default();
        for s in OltcState::ALL {
            let a = generate_clip(s, &cfg).unwrap();
            let b = generate_clip(s, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.signal.len(), cfg.segment_samples);
        }
    }

    #[test]
    fn dataset_is_balanced_and_ordered() {
        let cfg = SynthConfig {
            segment_samples: 2048,
            ..SynthConfig::default()
        };
        let d = generate_dataset(10, &cfg).unwrap();
        assert_eq!(d.len(), 70);
        for (k, chunk) in d.chunks(10).enumerate() {
            assert!(chunk.iter().all(|c| c.label.index() == k));
        }
        assert_eq!(d, generate_dataset(10, &cfg).unwrap());
        assert!(generate_dataset(0, &cfg).is_err());
    }

    #[test]
    fn config_bounds() {
        let bad = SynthConfig {
            jitter: 0.6,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
        let short = SynthConfig {
            segment_samples: 100,
            ..SynthConfig::default()
        };
        assert!(short.validate().is_err());
    }
}
