//! DQN and PPO agents for the energization environment.

mod dqn;
mod ppo;
mod replay;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::RemanentFlux;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use dqn::{dqn_select, dqn_update, DqnAgent, DqnConfig};
pub use ppo::{
    clipped_surrogate, policy_objective, ppo_collect, ppo_update, PolicyObjective, PolicySample, PpoAgent, PpoConfig,
    PpoStats, Rollout,
};
pub use replay::{ReplayBuffer, ReplayItem};
pub use train::{evaluate, eval_fluxes, train, ORACLE_GRID_DEG, Algo, EvalReport, Policy, RlConfig, RlRecord, TrainAborted};

/// Discrete closing angles: bin `k` maps to `k * 360 / n_bins` degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionGrid {
    n_bins: usize,
}

impl ActionGrid {
    pub fn new(n_bins: usize) -> Result<Self> {
        if n_bins < 8 {
            return Err(Error::Config(format!("action grid needs >= 8 bins, got {n_bins}")));
        }
        Ok(Self { n_bins })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn angle(&self, bin: usize) -> f64 {
        bin as f64 * 360.0 / self.n_bins as f64
    }

    /// Nearest bin to an angle in degrees.
    pub fn bin(&self, theta_deg: f64) -> usize {
        let t = crate::env::normalize_deg(theta_deg);
        ((t * self.n_bins as f64 / 360.0).round() as usize) % self.n_bins
    }
}

impl Default for ActionGrid {
    fn default() -> Self {
        Self { n_bins: 72 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayKind {
    Linear,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonSchedule {
    pub kind: DecayKind,
    pub eps0: f64,
    pub eps_min: f64,
    /// Steps for the linear ramp to reach `eps_min`.
    pub horizon: u64,
    /// Time constant of the exponential decay, steps.
    pub tau: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            kind: DecayKind::Linear,
            eps0: 1.0,
            eps_min: 0.05,
            horizon: 20_000,
            tau: 5000.0,
        }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.eps_min && self.eps_min <= self.eps0 && self.eps0 <= 1.0) {
            return Err(Error::Config(format!(
                "epsilon schedule needs 0 <= eps_min <= eps0 <= 1, got eps_min={} eps0={}",
                self.eps_min, self.eps0
            )));
        }
        if self.horizon == 0 || !(self.tau > 0.0) {
            return Err(Error::Config("epsilon horizon and tau must be > 0".into()));
        }
        Ok(())
    }
}

pub fn epsilon_at(s: &EpsilonSchedule, t: u64) -> f64 {
    match s.kind {
        DecayKind::Linear if t >= s.horizon => s.eps_min,
        DecayKind::Linear => {
            let slope = (s.eps0 - s.eps_min) / s.horizon as f64;
            (s.eps0 - t as f64 * slope).max(s.eps_min)
        }
        DecayKind::Exponential => (s.eps0 * (-(t as f64) / s.tau).exp()).max(s.eps_min),
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Flux unit for network inputs; spreads the ±0.9 pu range across the softplus knee.
pub const STATE_UNIT_PU: f64 = 0.25;

/// Network input for a state: the three remanent fluxes in units of [`STATE_UNIT_PU`].
pub fn state_row(s: &RemanentFlux) -> [f64; 3] {
    s.phi().map(|v| v / STATE_UNIT_PU)
}

pub(crate) fn state_batch<'a>(states: impl Iterator<Item = &'a RemanentFlux>) -> Tensor {
    let rows: Vec<Vec<f64>> = states.map(|s| state_row(s).to_vec()).collect();
    if rows.is_empty() {
        return Tensor::zeros(&[0, 3]);
    }
    Tensor::from_rows(&rows).expect("state rows share width 3")
}

pub(crate) fn uniform_bin<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    rng.random_range(0..n)
}
