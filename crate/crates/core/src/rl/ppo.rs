use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{state_batch, ActionGrid};
use crate::env::{Env, RemanentFlux};
use crate::error::{Error, Result};
use crate::nn::{Activation, Layer, LossKind, Network, NetworkSpec, Sgd, SgdConfig, PROB_FLOOR};
use crate::tensor::Tensor;

const ADV_STD_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub hidden: usize,
    pub clip_eps: f64,
    pub epochs_per_iter: usize,
    pub rollout_size: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Decay the learning rate linearly to zero over the training budget.
    pub anneal_lr: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            clip_eps: 0.2,
            epochs_per_iter: 4,
            rollout_size: 512,
            minibatch_size: 64,
            entropy_coef: 0.01,
            learning_rate: 3e-3,
            momentum: 0.9,
            anneal_lr: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgd().validate()?;
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::Config(format!("ppo clip_eps must lie in (0, 1), got {}", self.clip_eps)));
        }
        if self.hidden == 0 || self.epochs_per_iter == 0 || self.rollout_size == 0 {
            return Err(Error::Config("ppo hidden, epochs_per_iter and rollout_size must be >= 1".into()));
        }
        if !(self.entropy_coef >= 0.0) {
            return Err(Error::Config("ppo entropy_coef must be >= 0".into()));
        }
        Ok(())
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.minibatch_size,
            seed: 0,
        }
    }

    pub fn actor_spec(&self, grid: ActionGrid) -> NetworkSpec {
        NetworkSpec::mlp(
            &[3, self.hidden, self.hidden, grid.n_bins()],
            Activation::Softplus,
            LossKind::CrossEntropy,
        )
    }

    pub fn critic_spec(&self) -> NetworkSpec {
        NetworkSpec::mlp(&[3, self.hidden, self.hidden, 1], Activation::Softplus, LossKind::Mse)
    }
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub cfg: PpoConfig,
    pub grid: ActionGrid,
    pub actor: Network,
    pub critic: Network,
    actor_opt: Sgd,
    critic_opt: Sgd,
}

impl PpoAgent {
    /// Scales both optimizers' learning rate to `frac` of the configured value.
    pub fn set_lr_fraction(&mut self, frac: f64) {
        let lr = self.cfg.learning_rate * frac;
        self.actor_opt.cfg.learning_rate = lr;
        self.critic_opt.cfg.learning_rate = lr;
    }

    /// Glorot-initialized networks with a zeroed policy head, so the initial policy is uniform.
    pub fn new(cfg: PpoConfig, grid: ActionGrid, actor_seed: u64, critic_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut actor = Network::new(cfg.actor_spec(grid), actor_seed)?;
        if let Some((w, b)) = actor.layers_mut().last_mut().and_then(Layer::params_mut) {
            w.data_mut().fill(0.0);
            b.data_mut().fill(0.0);
        }
        let critic = Network::new(cfg.critic_spec(), critic_seed)?;
        Self::from_networks(cfg, grid, actor, critic)
    }

    pub fn from_networks(cfg: PpoConfig, grid: ActionGrid, actor: Network, critic: Network) -> Result<Self> {
        cfg.validate()?;
        if actor.spec() != &cfg.actor_spec(grid) || critic.spec() != &cfg.critic_spec() {
            return Err(Error::Dimension("actor/critic shapes do not match the PPO config".into()));
        }
        Ok(Self {
            cfg,
            grid,
            actor,
            critic,
            actor_opt: Sgd::new(cfg.sgd())?,
            critic_opt: Sgd::new(cfg.sgd())?,
        })
    }
}

/// One-step episodes gathered under the current policy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rollout {
    pub states: Vec<RemanentFlux>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub i_max: Vec<f64>,
    pub values: Vec<f64>,
    /// `r - V(s)` before normalization.
    pub raw_advantages: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the cumulative sum
    p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1)
}

pub fn ppo_collect<R: Rng + ?Sized>(agent: &PpoAgent, env: &mut Env, n: usize, rng: &mut R) -> Result<Rollout> {
    if n == 0 {
        return Err(Error::Validation("rollout size must be >= 1".into()));
    }
    let states: Vec<RemanentFlux> = (0..n).map(|_| env.reset()).collect();
    let x = state_batch(states.iter());
    let probs = agent.actor.predict(&x)?;
    let values = agent.critic.predict(&x)?.into_data();
    let mut r = Rollout {
        states,
        values,
        ..Rollout::default()
    };
    for (i, s) in r.states.iter().enumerate() {
        let p = probs.row(i);
        let a = sample_categorical(p, rng);
        env.reset_to(*s);
        let t = env.step(agent.grid.angle(a))?;
        r.actions.push(a);
        r.log_probs.push(p[a].max(PROB_FLOOR).ln());
        r.rewards.push(t.reward);
        r.i_max.push(t.i_max);
        r.raw_advantages.push(t.reward - r.values[i]);
    }
    r.advantages = normalize(&r.raw_advantages);
    Ok(r)
}

/// Zero mean, unit population variance; left as is when the spread is negligible.
fn normalize(a: &[f64]) -> Vec<f64> {
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let std = (a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if std < ADV_STD_GUARD {
        return a.to_vec();
    }
    a.iter().map(|v| (v - mean) / std).collect()
}

/// Clipped surrogate term `min(ρ Â, clip(ρ, 1 - ε, 1 + ε) Â)`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// One rollout entry as seen by the policy loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySample {
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyObjective {
    /// `-mean(clipped surrogate) - c * mean(entropy)`.
    pub loss: f64,
    /// Gradient of `loss` w.r.t. the policy logits.
    pub logit_grad: Tensor,
    pub entropy: f64,
    pub ratio_sum: f64,
    pub clipped: usize,
}

/// Clipped-surrogate policy loss with entropy bonus for a batch of action probabilities.
pub fn policy_objective(probs: &Tensor, samples: &[PolicySample], eps: f64, c: f64) -> Result<PolicyObjective> {
    if probs.rows() != samples.len() {
        return Err(Error::Dimension(format!(
            "{} probability rows for {} samples",
            probs.rows(),
            samples.len()
        )));
    }
    let m = samples.len().max(1) as f64;
    let k = probs.row_len();
    let mut grad = Tensor::zeros(probs.shape());
    let mut out = PolicyObjective {
        loss: 0.0,
        logit_grad: Tensor::zeros(&[0]),
        entropy: 0.0,
        ratio_sum: 0.0,
        clipped: 0,
    };
    for (row, s) in samples.iter().enumerate() {
        let pr = probs.row(row);
        let a = s.action;
        let adv = s.advantage;
        let ratio = (pr[a].max(PROB_FLOOR).ln() - s.old_log_prob).exp();
        if !ratio.is_finite() {
            return Err(Error::Divergence(format!("non-finite PPO ratio {ratio}")));
        }
        let h: f64 = -pr.iter().map(|&q| q * q.max(PROB_FLOOR).ln()).sum::<f64>();
        out.loss -= clipped_surrogate(ratio, adv, eps) / m;
        out.entropy += h / m;
        out.ratio_sum += ratio;
        // the unclipped branch carries the gradient unless the clip bound is the minimum
        let active = ratio * adv <= ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        out.clipped += usize::from(!active);
        let g = &mut grad.data_mut()[row * k..(row + 1) * k];
        for (j, gj) in g.iter_mut().enumerate() {
            let pj = pr[j];
            let mut d = c / m * pj * (pj.max(PROB_FLOOR).ln() + h);
            if active {
                let delta = if j == a { 1.0 } else { 0.0 };
                d -= adv * ratio * (delta - pj) / m;
            }
            *gj = d;
        }
    }
    out.loss -= c * out.entropy;
    out.logit_grad = grad;
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
}

/// `epochs_per_iter` shuffled passes over the rollout, stepping actor and critic per minibatch.
/// Returned losses are averaged over the minibatches of the first epoch.
pub fn ppo_update<R: Rng + ?Sized>(agent: &mut PpoAgent, rollout: &Rollout, rng: &mut R) -> Result<PpoStats> {
    let n = rollout.len();
    if n == 0 {
        return Err(Error::Validation("cannot update on an empty rollout".into()));
    }
    let mb = agent.cfg.minibatch_size.clamp(1, n);
    let (eps, c) = (agent.cfg.clip_eps, agent.cfg.entropy_coef);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = PpoStats::default();
    let mut first_batches = 0usize;
    let mut ratios_seen = 0usize;
    for epoch in 0..agent.cfg.epochs_per_iter {
        order.shuffle(rng);
        for idx in order.chunks(mb) {
            let m = idx.len() as f64;
            let x = state_batch(idx.iter().map(|&i| &rollout.states[i]));
            let p = agent.actor.forward(&x)?;
            let samples: Vec<PolicySample> = idx
                .iter()
                .map(|&i| PolicySample {
                    action: rollout.actions[i],
                    old_log_prob: rollout.log_probs[i],
                    advantage: rollout.advantages[i],
                })
                .collect();
            let obj = policy_objective(&p, &samples, eps, c)?;
            if epoch == 0 {
                stats.mean_ratio += obj.ratio_sum;
                stats.clip_fraction += obj.clipped as f64;
                ratios_seen += idx.len();
            }
            let (pl, ent) = (obj.loss, obj.entropy);
            let grad = obj.logit_grad;
            let g = agent.actor.backward_from_logits(&grad)?;
            agent.actor_opt.step(&mut agent.actor, &g)?;
            agent.actor.clear_cache();

            let v = agent.critic.forward(&x)?;
            let mut vg = Tensor::zeros(v.shape());
            let mut vl = 0.0;
            for (row, &i) in idx.iter().enumerate() {
                let err = v.data()[row] - rollout.rewards[i];
                vl += err * err / m;
                vg.data_mut()[row] = 2.0 * err / m;
            }
            if !vl.is_finite() || !pl.is_finite() {
                return Err(Error::Divergence(format!("non-finite PPO losses {pl} / {vl}")));
            }
            let g = agent.critic.backward_from_output(&vg)?;
            agent.critic_opt.step(&mut agent.critic, &g)?;
            agent.critic.clear_cache();
            if epoch == 0 {
                stats.policy_loss += pl;
                stats.value_loss += vl;
                stats.entropy += ent;
                first_batches += 1;
            }
        }
    }
    let b = first_batches.max(1) as f64;
    stats.policy_loss /= b;
    stats.value_loss /= b;
    stats.entropy /= b;
    stats.mean_ratio /= ratios_seen.max(1) as f64;
    stats.clip_fraction /= ratios_seen.max(1) as f64;
    Ok(stats)
}
