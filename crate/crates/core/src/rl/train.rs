use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dqn::{dqn_select, dqn_update, DqnAgent, DqnConfig};
use super::ppo::{ppo_collect, ppo_update, PpoAgent, PpoConfig, PpoStats};
use super::replay::ReplayItem;
use super::{argmax, epsilon_at, state_batch, uniform_bin, ActionGrid, DecayKind};
use crate::env::{oracle_best_angle, peak_inrush, reward, sample_remanence_with, CoreModel, Env, EnvConfig, RemanentFlux};
use crate::error::{Error, Result};
use crate::harness::{summarize, Summary};
use crate::nn::Network;
use crate::seed;

/// Fine grid used by the oracle policy, degrees.
pub const ORACLE_GRID_DEG: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    DqnLinear,
    DqnExp,
    Ppo,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::DqnLinear, Algo::DqnExp, Algo::Ppo];

    pub fn name(self) -> &'static str {
        match self {
            Algo::DqnLinear => "dqn-linear",
            Algo::DqnExp => "dqn-exp",
            Algo::Ppo => "ppo",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}; expected dqn-linear, dqn-exp or ppo")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub core: CoreModel,
    pub env: EnvConfig,
    pub dqn: DqnConfig,
    pub ppo: PpoConfig,
    pub steps: u64,
    pub eval_episodes: usize,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            core: CoreModel::default(),
            env: EnvConfig::default(),
            dqn: DqnConfig::default(),
            ppo: PpoConfig::default(),
            steps: 50_000,
            eval_episodes: 200,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        self.core.validate()?;
        self.env.validate()?;
        self.dqn.validate()?;
        self.ppo.validate()?;
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<ActionGrid> {
        ActionGrid::new(self.env.action_bins)
    }
}

/// Per-episode training trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RlRecord {
    pub algo: String,
    pub seed: u64,
    pub steps: u64,
    pub reward: Vec<f64>,
    pub i_max: Vec<f64>,
    /// Exploration rate at each episode (DQN only).
    pub epsilon: Vec<f64>,
    /// DQN batch loss per update.
    pub loss: Vec<f64>,
    /// PPO statistics per iteration.
    pub ppo: Vec<PpoStats>,
}

/// Training stopped early; the trace up to the failure is kept.
#[derive(Debug)]
pub struct TrainAborted {
    pub error: Error,
    pub record: RlRecord,
}

#[derive(Debug, Clone)]
pub enum Policy {
    /// Argmax over the network output (Q-values or action probabilities).
    Greedy { net: Network, grid: ActionGrid },
    Random { grid: ActionGrid },
    Oracle { grid_deg: f64 },
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Greedy { .. } => "greedy",
            Policy::Random { .. } => "random",
            Policy::Oracle { .. } => "oracle",
        }
    }
}

type Outcome = std::result::Result<(Policy, RlRecord), Box<TrainAborted>>;

fn abort(error: Error, record: RlRecord) -> Box<TrainAborted> {
    Box::new(TrainAborted { error, record })
}

/// Trains `algo` for `steps` environment steps. Deterministic in `(cfg, steps, seed)`.
pub fn train(algo: Algo, cfg: &RlConfig, steps: u64, seed: u64) -> Outcome {
    let mut record = RlRecord {
        algo: algo.name().into(),
        seed,
        steps,
        ..RlRecord::default()
    };
    if let Err(e) = cfg.validate() {
        return Err(abort(e, record));
    }
    let grid = cfg.grid().map_err(|e| abort(e, RlRecord::default()))?;
    let env_cfg = EnvConfig {
        seed: seed::derive_named(seed, "train-env"),
        ..cfg.env
    };
    let env = match Env::new(cfg.core, env_cfg) {
        Ok(e) => e,
        Err(e) => return Err(abort(e, record)),
    };
    match algo {
        Algo::DqnLinear | Algo::DqnExp => {
            let mut dcfg = cfg.dqn;
            dcfg.epsilon.kind = if algo == Algo::DqnLinear {
                DecayKind::Linear
            } else {
                DecayKind::Exponential
            };
            train_dqn(dcfg, grid, env, steps, seed, &mut record).map_err(|e| abort(e, record.clone()))
        }
        Algo::Ppo => train_ppo(cfg.ppo, grid, env, steps, seed, &mut record).map_err(|e| abort(e, record.clone())),
    }
    .map(|p| (p, record.clone()))
}

fn train_dqn(cfg: DqnConfig, grid: ActionGrid, mut env: Env, steps: u64, seed: u64, rec: &mut RlRecord) -> Result<Policy> {
    let mut agent = DqnAgent::new(cfg, grid, seed::derive_named(seed, "q-net"))?;
    let mut explore = ChaCha8Rng::seed_from_u64(seed::derive_named(seed, "dqn-explore"));
    let mut replay_rng = ChaCha8Rng::seed_from_u64(seed::derive_named(seed, "dqn-replay"));
    for t in 0..steps {
        let s = env.reset();
        let a = dqn_select(&agent, &s, t, &mut explore)?;
        let tr = env.step(grid.angle(a))?;
        agent.replay.push(ReplayItem {
            state: s,
            action: a,
            reward: tr.reward,
            next_state: s,
            done: tr.done,
        });
        rec.reward.push(tr.reward);
        rec.i_max.push(tr.i_max);
        rec.epsilon.push(epsilon_at(&cfg.epsilon, t));
        if agent.replay.len() >= cfg.batch_size && t % cfg.update_every == 0 {
            rec.loss.push(dqn_update(&mut agent, &mut replay_rng)?);
        }
    }
    Ok(Policy::Greedy { net: agent.q_net, grid })
}

fn train_ppo(cfg: PpoConfig, grid: ActionGrid, mut env: Env, steps: u64, seed: u64, rec: &mut RlRecord) -> Result<Policy> {
    let mut agent = PpoAgent::new(
        cfg,
        grid,
        seed::derive_named(seed, "actor"),
        seed::derive_named(seed, "critic"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_named(seed, "ppo"));
    let mut done = 0u64;
    while done < steps {
        let n = (steps - done).min(cfg.rollout_size as u64) as usize;
        if cfg.anneal_lr {
            agent.set_lr_fraction(1.0 - done as f64 / steps as f64);
        }
        let roll = ppo_collect(&agent, &mut env, n, &mut rng)?;
        rec.reward.extend(&roll.rewards);
        rec.i_max.extend(&roll.i_max);
        rec.ppo.push(ppo_update(&mut agent, &roll, &mut rng)?);
        done += n as u64;
    }
    Ok(Policy::Greedy { net: agent.actor, grid })
}

/// The shared evaluation remanence set for `seed`.
pub fn eval_fluxes(seed: u64, n: usize, flux_max: f64) -> Vec<RemanentFlux> {
    let root = seed::derive_named(seed, "eval");
    (0..n)
        .map(|i| sample_remanence_with(seed::derive(root, i as u64, 0), flux_max))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub theta_deg: Vec<f64>,
    pub i_max: Vec<f64>,
    pub reward: Vec<f64>,
    pub summary: Summary,
    /// Fraction of episodes above rated current.
    pub frac_over_rated: f64,
}

/// Greedy evaluation over the shared flux set.
pub fn evaluate(policy: &Policy, core: &CoreModel, env: &EnvConfig, n_episodes: usize, seed: u64) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(Error::Validation("n_episodes must be >= 1".into()));
    }
    core.validate()?;
    let fluxes = eval_fluxes(seed, n_episodes, env.flux_max);
    let theta: Vec<f64> = match policy {
        Policy::Greedy { net, grid } => {
            if net.spec().input_shape != [3] || net.spec().layers.is_empty() {
                return Err(Error::Dimension("policy network must take 3 inputs".into()));
            }
            let out = net.predict(&state_batch(fluxes.iter()))?;
            if out.row_len() != grid.n_bins() {
                return Err(Error::Dimension(format!(
                    "policy network has {} outputs, action grid has {} bins",
                    out.row_len(),
                    grid.n_bins()
                )));
            }
            (0..out.rows()).map(|i| grid.angle(argmax(out.row(i)))).collect()
        }
        Policy::Random { grid } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_named(seed, "random-policy"));
            (0..n_episodes).map(|_| grid.angle(uniform_bin(&mut rng, grid.n_bins()))).collect()
        }
        Policy::Oracle { grid_deg } => fluxes
            .iter()
            .map(|f| oracle_best_angle(f, core, *grid_deg).map(|(t, _)| t))
            .collect::<Result<_>>()?,
    };
    let i_max: Vec<f64> = fluxes.iter().zip(&theta).map(|(f, &t)| peak_inrush(f, t, core)).collect();
    let reward = i_max.iter().map(|&i| reward(i)).collect::<Result<Vec<_>>>()?;
    let over = i_max.iter().filter(|&&i| i > 1.0).count();
    Ok(EvalReport {
        policy: policy.name().into(),
        summary: summarize(&i_max)?,
        frac_over_rated: over as f64 / n_episodes as f64,
        theta_deg: theta,
        i_max,
        reward,
    })
}
