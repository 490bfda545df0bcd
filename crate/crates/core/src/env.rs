//! Transformer energization environment.
//!
//! Three-phase remanent flux plus a breaker closing angle map to a peak inrush current
//! through a two-slope saturation model. Episodes are a single step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Largest admissible per-phase remanence magnitude (pu).
pub const FLUX_LIMIT: f64 = 0.9;
const SUM_TOL: f64 = 1e-9;
/// Phase displacements of the three windings, degrees.
pub const PHASE_SHIFT_DEG: [f64; 3] = [0.0, -120.0, 120.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemanentFlux {
    phi: [f64; 3],
}

impl RemanentFlux {
    pub fn new(phi: [f64; 3]) -> Result<Self> {
        if phi.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation(format!("remanent flux must be finite, got {phi:?}")));
        }
        let sum: f64 = phi.iter().sum();
        if sum.abs() > SUM_TOL {
            return Err(Error::Validation(format!("remanent flux must sum to zero, got sum {sum:e}")));
        }
        if let Some(p) = phi.iter().find(|p| p.abs() > FLUX_LIMIT) {
            return Err(Error::Validation(format!(
                "remanent flux {p} exceeds the {FLUX_LIMIT} pu limit"
            )));
        }
        Ok(Self { phi })
    }

    pub fn zero() -> Self {
        Self { phi: [0.0; 3] }
    }

    pub fn phi(&self) -> [f64; 3] {
        self.phi
    }

    /// Cyclic relabeling `(φ1, φ2, φ3) -> (φ2, φ3, φ1)`.
    pub fn rotated(&self) -> Self {
        let [a, b, c] = self.phi;
        Self { phi: [b, c, a] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoreModel {
    /// Saturation knee, pu flux.
    pub lambda_sat: f64,
    /// Unsaturated magnetizing inductance, pu.
    pub l_mag: f64,
    /// Air-core inductance beyond the knee, pu.
    pub l_air: f64,
}

impl Default for CoreModel {
    fn default() -> Self {
        Self {
            lambda_sat: 1.15,
            l_mag: 500.0,
            l_air: 0.3,
        }
    }
}

impl CoreModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_sat > 1.0 && self.lambda_sat.is_finite()) {
            return Err(Error::Config(format!("core.lambda_sat must be > 1, got {}", self.lambda_sat)));
        }
        if !(self.l_air > 0.0 && self.l_mag > self.l_air && self.l_mag.is_finite()) {
            return Err(Error::Config(format!(
                "core inductances must satisfy l_mag > l_air > 0, got l_mag={} l_air={}",
                self.l_mag, self.l_air
            )));
        }
        Ok(())
    }

    /// Phase current for a peak flux linkage `lambda`.
    pub fn current(&self, lambda: f64) -> f64 {
        if lambda <= self.lambda_sat {
            lambda / self.l_mag
        } else {
            self.lambda_sat / self.l_mag + (lambda - self.lambda_sat) / self.l_air
        }
    }
}

/// Remanence draw: `φ1, φ2 ~ U(-flux_max, flux_max)`, `φ3 = -(φ1 + φ2)`, redrawn until `|φ3| <= 0.9`.
pub fn sample_remanence_with(seed: u64, flux_max: f64) -> RemanentFlux {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let a: f64 = rng.random_range(-flux_max..=flux_max);
        let b: f64 = rng.random_range(-flux_max..=flux_max);
        let c = -(a + b);
        if c.abs() <= FLUX_LIMIT {
            return RemanentFlux { phi: [a, b, c] };
        }
    }
}

pub fn sample_remanence(seed: u64) -> RemanentFlux {
    sample_remanence_with(seed, EnvConfig::default().flux_max)
}

/// Wraps any finite angle into `[0, 360)`.
pub fn normalize_deg(theta: f64) -> f64 {
    let t = theta.rem_euclid(360.0);
    if t >= 360.0 {
        0.0
    } else {
        t
    }
}

/// DC flux offset of each phase when closing at `theta_deg`.
pub fn flux_offsets(flux: &RemanentFlux, theta_deg: f64) -> [f64; 3] {
    let theta = normalize_deg(theta_deg);
    let mut out = [0.0; 3];
    for (o, (&phi, &d)) in out.iter_mut().zip(flux.phi.iter().zip(&PHASE_SHIFT_DEG)) {
        *o = phi + (theta + d).to_radians().cos();
    }
    out
}

/// Largest first-cycle phase current, pu.
pub fn peak_inrush(flux: &RemanentFlux, theta_deg: f64, core: &CoreModel) -> f64 {
    flux_offsets(flux, theta_deg)
        .iter()
        .map(|dc| core.current(dc.abs() + 1.0))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `-i` above rated current, `1 - i` otherwise.
pub fn reward(i_max: f64) -> Result<f64> {
    if !(i_max >= 0.0) {
        return Err(Error::Validation(format!("peak current must be >= 0, got {i_max}")));
    }
    Ok(if i_max > 1.0 { -i_max } else { 1.0 - i_max })
}

/// Currents closer than this count as a tie in the oracle sweep (absorbs cosine rounding).
pub const TIE_TOL: f64 = 1e-12;

/// Exhaustive sweep over `θ = k * grid_deg`; ties resolve to the smallest angle.
pub fn oracle_best_angle(flux: &RemanentFlux, core: &CoreModel, grid_deg: f64) -> Result<(f64, f64)> {
    if !(grid_deg > 0.0 && grid_deg <= 5.0) {
        return Err(Error::Validation(format!("grid_deg must lie in (0, 5], got {grid_deg}")));
    }
    let mut best = (0.0, f64::INFINITY);
    let mut k = 0u32;
    loop {
        let theta = f64::from(k) * grid_deg;
        if theta >= 360.0 {
            break;
        }
        let i = peak_inrush(flux, theta, core);
        if i < best.1 - TIE_TOL {
            best = (theta, i);
        }
        k += 1;
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Half-width of the uniform remanence draw for φ1 and φ2.
    pub flux_max: f64,
    pub action_bins: usize,
    /// Kept for the MDP tuple; one-step episodes never discount.
    pub gamma: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            flux_max: 0.8,
            action_bins: 72,
            gamma: 0.99,
            seed: 42,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.flux_max > 0.0 && self.flux_max <= FLUX_LIMIT) {
            return Err(Error::Config(format!(
                "env.flux_max must lie in (0, {FLUX_LIMIT}], got {}",
                self.flux_max
            )));
        }
        if self.action_bins < 8 {
            return Err(Error::Config(format!("env.action_bins must be >= 8, got {}", self.action_bins)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("env.gamma must lie in [0, 1], got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: RemanentFlux,
    pub theta_deg: f64,
    pub reward: f64,
    pub i_max: f64,
    pub done: bool,
}

/// One-step energization MDP. Episode `k` draws its remanence from `derive(seed, k, 0)`.
#[derive(Debug, Clone)]
pub struct Env {
    pub core: CoreModel,
    pub cfg: EnvConfig,
    episode: u64,
    state: Option<RemanentFlux>,
}

impl Env {
    pub fn new(core: CoreModel, cfg: EnvConfig) -> Result<Self> {
        core.validate()?;
        cfg.validate()?;
        Ok(Self {
            core,
            cfg,
            episode: 0,
            state: None,
        })
    }

    /// Starts the next episode of this environment's seed stream.
    pub fn reset(&mut self) -> RemanentFlux {
        let s = seed::derive(self.cfg.seed, self.episode, 0);
        self.episode += 1;
        self.reset_seeded(s)
    }

    /// Starts an episode whose remanence comes from `seed` alone.
    pub fn reset_seeded(&mut self, seed: u64) -> RemanentFlux {
        let f = sample_remanence_with(seed, self.cfg.flux_max);
        self.state = Some(f);
        f
    }

    /// Starts an episode from a given remanence.
    pub fn reset_to(&mut self, flux: RemanentFlux) {
        self.state = Some(flux);
    }

    pub fn state(&self) -> Option<RemanentFlux> {
        self.state
    }

    pub fn episodes(&self) -> u64 {
        self.episode
    }

    /// Closes the breaker at `theta_deg` (wrapped into `[0, 360)`); ends the episode.
    pub fn step(&mut self, theta_deg: f64) -> Result<Transition> {
        let state = self
            .state
            .take()
            .ok_or_else(|| Error::State("step called without a live episode; call reset first".into()))?;
        if !theta_deg.is_finite() {
            self.state = Some(state);
            return Err(Error::Validation(format!("closing angle must be finite, got {theta_deg}")));
        }
        let theta = normalize_deg(theta_deg);
        let i_max = peak_inrush(&state, theta, &self.core);
        Ok(Transition {
            state,
            theta_deg: theta,
            reward: reward(i_max)?,
            i_max,
            done: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flux_at_ninety_degrees() {
        let f = RemanentFlux::zero();
        let o = flux_offsets(&f, 90.0);
        assert!(o[0].abs() < 1e-15);
        assert!((o[1] - 0.75f64.sqrt()).abs() < 1e-15);
        assert!((o[2] + 0.75f64.sqrt()).abs() < 1e-15);
        let i = peak_inrush(&f, 90.0, &CoreModel::default());
        let hand = 1.15 / 500.0 + (1.0 + 0.75f64.sqrt() - 1.15) / 0.3;
        assert!((i - hand).abs() < 1e-12);
        assert!((i - 2.389).abs() < 1e-3);
    }

    #[test]
    fn reward_branches() {
        assert_eq!(reward(1.5).unwrap(), -1.5);
        assert_eq!(reward(0.2).unwrap(), 0.8);
        assert_eq!(reward(1.0).unwrap(), 0.0);
        assert_eq!(reward(1.0 + 1e-9).unwrap(), -(1.0 + 1e-9));
        assert!(reward(-0.1).is_err());
        assert!(reward(f64::NAN).is_err());
    }

    #[test]
    fn step_lifecycle() {
        let mut env = Env::new(CoreModel::default(), EnvConfig::default()).unwrap();
        assert!(matches!(env.step(0.0), Err(Error::State(_))));
        env.reset();
        let t = env.step(370.0).unwrap();
        assert!(t.done);
        assert_eq!(t.theta_deg, 10.0);
        assert_eq!(t.reward, reward(t.i_max).unwrap());
        assert!(matches!(env.step(0.0), Err(Error::State(_))));
    }

    #[test]
    fn zero_flux_oracle() {
        let (theta, i) = oracle_best_angle(&RemanentFlux::zero(), &CoreModel::default(), 0.5).unwrap();
        assert_eq!(theta, 30.0);
        let hand = CoreModel::default().current(1.0 + 30f64.to_radians().cos());
        assert!((i - hand).abs() < 1e-12);
        assert!(oracle_best_angle(&RemanentFlux::zero(), &CoreModel::default(), 0.0).is_err());
        assert!(oracle_best_angle(&RemanentFlux::zero(), &CoreModel::default(), 5.5).is_err());
    }

    #[test]
    fn flux_validation() {
        assert!(RemanentFlux::new([0.5, -0.25, -0.25]).is_ok());
        assert!(RemanentFlux::new([0.5, -0.25, -0.2]).is_err());
        assert!(RemanentFlux::new([0.95, -0.5, -0.45]).is_err());
    }
}
