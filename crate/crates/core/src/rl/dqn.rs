use rand::Rng;
use serde::{Deserialize, Serialize};

use super::replay::ReplayBuffer;
use super::{argmax, epsilon_at, state_batch, state_row, uniform_bin, ActionGrid, EpsilonSchedule};
use crate::env::RemanentFlux;
use crate::error::{Error, Result};
use crate::nn::{Activation, LossKind, Network, NetworkSpec, Sgd, SgdConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub hidden: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Target network copy interval, in updates.
    pub sync_every: u64,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Environment steps between gradient updates.
    pub update_every: u64,
    pub epsilon: EpsilonSchedule,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            replay_capacity: 10_000,
            batch_size: 64,
            sync_every: 250,
            learning_rate: 1e-2,
            momentum: 0.9,
            update_every: 1,
            epsilon: EpsilonSchedule::default(),
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        self.epsilon.validate()?;
        self.sgd().validate()?;
        if self.hidden == 0 || self.replay_capacity == 0 || self.sync_every == 0 || self.update_every == 0 {
            return Err(Error::Config(
                "dqn hidden, replay_capacity, sync_every and update_every must be >= 1".into(),
            ));
        }
        if self.batch_size > self.replay_capacity {
            return Err(Error::Config("dqn batch_size exceeds replay_capacity".into()));
        }
        Ok(())
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            seed: 0,
        }
    }

    pub fn q_spec(&self, grid: ActionGrid) -> NetworkSpec {
        NetworkSpec::mlp(
            &[3, self.hidden, self.hidden, grid.n_bins()],
            Activation::Softplus,
            LossKind::Mse,
        )
    }
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub cfg: DqnConfig,
    pub grid: ActionGrid,
    pub q_net: Network,
    pub target_net: Network,
    pub replay: ReplayBuffer,
    opt: Sgd,
    updates: u64,
}

impl DqnAgent {
    pub fn new(cfg: DqnConfig, grid: ActionGrid, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let q_net = Network::new(cfg.q_spec(grid), seed)?;
        Ok(Self {
            cfg,
            grid,
            target_net: q_net.clone(),
            q_net,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            opt: Sgd::new(cfg.sgd())?,
            updates: 0,
        })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn q_values(&self, s: &RemanentFlux) -> Result<Vec<f64>> {
        let x = Tensor::new(vec![1, 3], state_row(s).to_vec())?;
        Ok(self.q_net.predict(&x)?.into_data())
    }
}

/// ε-greedy action at step `t`; greedy ties go to the lowest bin.
pub fn dqn_select<R: Rng + ?Sized>(agent: &DqnAgent, s: &RemanentFlux, t: u64, rng: &mut R) -> Result<usize> {
    select_with_epsilon(agent, s, epsilon_at(&agent.cfg.epsilon, t), rng)
}

pub(crate) fn select_with_epsilon<R: Rng + ?Sized>(
    agent: &DqnAgent,
    s: &RemanentFlux,
    eps: f64,
    rng: &mut R,
) -> Result<usize> {
    if eps > 0.0 && rng.random::<f64>() < eps {
        return Ok(uniform_bin(rng, agent.grid.n_bins()));
    }
    Ok(argmax(&agent.q_values(s)?))
}

/// One gradient step on a replay batch. Episodes are terminal, so the target is `y = r`.
pub fn dqn_update<R: Rng + ?Sized>(agent: &mut DqnAgent, rng: &mut R) -> Result<f64> {
    let n = agent.cfg.batch_size;
    if agent.replay.len() < n {
        return Err(Error::State(format!(
            "replay holds {} transitions, need {n} before updating",
            agent.replay.len()
        )));
    }
    let batch = agent.replay.sample(n, rng);
    let x = state_batch(batch.iter().map(|b| &b.state));
    let q = agent.q_net.forward(&x)?;
    let width = q.row_len();
    let mut grad = Tensor::zeros(q.shape());
    let mut loss = 0.0;
    for (i, b) in batch.iter().enumerate() {
        let err = q.data()[i * width + b.action] - b.reward;
        loss += err * err;
        grad.data_mut()[i * width + b.action] = 2.0 * err / n as f64;
    }
    loss /= n as f64;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("non-finite DQN loss {loss}")));
    }
    let g = agent.q_net.backward_from_output(&grad)?;
    agent.opt.step(&mut agent.q_net, &g)?;
    agent.q_net.clear_cache();
    agent.updates += 1;
    if agent.updates % agent.cfg.sync_every == 0 {
        agent.target_net = agent.q_net.clone();
    }
    Ok(loss)
}
