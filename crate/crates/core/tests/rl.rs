mod common;

use common::rng;
use proptest::prelude::*;
use trafo_nn::env::{sample_remanence, CoreModel, Env, EnvConfig, RemanentFlux};
use trafo_nn::nn::Network;
use trafo_nn::rl::{
    argmax, clipped_surrogate, dqn_select, dqn_update, epsilon_at, evaluate, policy_objective, ppo_collect,
    ppo_update, train, ActionGrid, Algo, DecayKind, DqnAgent, DqnConfig, EpsilonSchedule, PolicySample, Policy,
    PpoAgent, PpoConfig, ReplayBuffer, ReplayItem, RlConfig, Rollout,
};
use trafo_nn::seed;
use trafo_nn::{Error, Tensor};

fn grid() -> ActionGrid {
    ActionGrid::default()
}

fn fixed_eps(e: f64) -> EpsilonSchedule {
    EpsilonSchedule {
        eps0: e,
        eps_min: e,
        ..EpsilonSchedule::default()
    }
}

/// Makes the network output `row` for every input.
fn set_constant_output(net: &mut Network, row: &[f64]) {
    let last = net.layers_mut().last_mut().unwrap();
    let (w, b) = last.params_mut().unwrap();
    w.data_mut().iter_mut().for_each(|v| *v = 0.0);
    b.data_mut().copy_from_slice(row);
}

fn item(s: RemanentFlux, a: usize, r: f64) -> ReplayItem {
    ReplayItem {
        state: s,
        action: a,
        reward: r,
        next_state: s,
        done: true,
    }
}

#[test]
fn epsilon_examples() {
    let lin = EpsilonSchedule::default();
    assert_eq!(epsilon_at(&lin, 0), 1.0);
    assert_eq!(epsilon_at(&lin, 20_000), 0.05);
    let exp = EpsilonSchedule {
        kind: DecayKind::Exponential,
        ..lin
    };
    assert!((epsilon_at(&exp, 5000) - (-1f64).exp()).abs() < 1e-15);
}

#[test]
fn full_exploration_is_uniform() {
    let cfg = DqnConfig {
        epsilon: fixed_eps(1.0),
        ..DqnConfig::default()
    };
    let agent = DqnAgent::new(cfg, grid(), 1).unwrap();
    let mut r = rng(61);
    let s = sample_remanence(3);
    let n = 10_000;
    let mut hist = vec![0usize; 72];
    for t in 0..n {
        hist[dqn_select(&agent, &s, t, &mut r).unwrap()] += 1;
    }
    let e = n as f64 / 72.0;
    let chi2: f64 = hist.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    // chi-square 99th percentile, 71 degrees of freedom
    assert!(chi2 < 101.62, "chi2 = {chi2}");
}

#[test]
fn greedy_selection_follows_hand_set_q() {
    let cfg = DqnConfig {
        epsilon: fixed_eps(0.0),
        ..DqnConfig::default()
    };
    let mut agent = DqnAgent::new(cfg, grid(), 2).unwrap();
    let mut q = vec![0.0; 72];
    q[7] = 1.0;
    set_constant_output(&mut agent.q_net, &q);
    let mut r = rng(1);
    for k in 0..20 {
        assert_eq!(dqn_select(&agent, &sample_remanence(k), k, &mut r).unwrap(), 7);
    }
    set_constant_output(&mut agent.q_net, &[0.5; 72]);
    assert_eq!(dqn_select(&agent, &sample_remanence(9), 0, &mut r).unwrap(), 0);
}

#[test]
fn single_transition_converges_to_reward() {
    let cfg = DqnConfig::default();
    let mut agent = DqnAgent::new(cfg, grid(), 3).unwrap();
    let s = sample_remanence(17);
    let (a, target) = (11, -1.7);
    for _ in 0..cfg.batch_size {
        agent.replay.push(item(s, a, target));
    }
    let mut r = rng(5);
    let first = dqn_update(&mut agent, &mut r).unwrap();
    let mut last = first;
    for _ in 1..2000 {
        last = dqn_update(&mut agent, &mut r).unwrap();
    }
    assert!((agent.q_values(&s).unwrap()[a] - target).abs() < 0.01);
    assert!(last < first);
}

#[test]
fn update_needs_warm_replay() {
    let mut agent = DqnAgent::new(DqnConfig::default(), grid(), 3).unwrap();
    agent.replay.push(item(RemanentFlux::zero(), 0, 0.5));
    assert!(matches!(dqn_update(&mut agent, &mut rng(1)), Err(Error::State(_))));
}

#[test]
fn next_state_does_not_enter_targets() {
    let cfg = DqnConfig {
        batch_size: 8,
        ..DqnConfig::default()
    };
    let mut a = DqnAgent::new(cfg, grid(), 4).unwrap();
    let mut b = DqnAgent::new(cfg, grid(), 4).unwrap();
    for k in 0..16 {
        let s = sample_remanence(k);
        a.replay.push(item(s, k as usize, 0.1 * k as f64));
        let mut it = item(s, k as usize, 0.1 * k as f64);
        it.next_state = sample_remanence(1000 + k);
        b.replay.push(it);
    }
    let la = dqn_update(&mut a, &mut rng(8)).unwrap();
    let lb = dqn_update(&mut b, &mut rng(8)).unwrap();
    assert_eq!(la, lb);
    let x = Tensor::new(vec![1, 3], vec![0.3, -1.0, 0.7]).unwrap();
    assert_eq!(a.q_net.predict(&x).unwrap(), b.q_net.predict(&x).unwrap());
}

fn env(seed: u64) -> Env {
    Env::new(
        CoreModel::default(),
        EnvConfig {
            seed,
            ..EnvConfig::default()
        },
    )
    .unwrap()
}

#[test]
fn uniform_actor_and_zero_critic_rollout() {
    let mut agent = PpoAgent::new(PpoConfig::default(), grid(), 1, 2).unwrap();
    set_constant_output(&mut agent.critic, &[0.0]);
    let roll = ppo_collect(&agent, &mut env(9), 512, &mut rng(10)).unwrap();
    assert_eq!(roll.len(), 512);
    let uniform = (1.0f64 / 72.0).ln();
    assert!(roll.log_probs.iter().all(|l| (l - uniform).abs() < 1e-6));
    assert_eq!(roll.raw_advantages, roll.rewards);
    let n = roll.advantages.len() as f64;
    let mean = roll.advantages.iter().sum::<f64>() / n;
    let std = (roll.advantages.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 1e-9);
    assert!((std - 1.0).abs() < 1e-6);
}

#[test]
fn first_epoch_ratio_is_one() {
    let actor = Network::new(PpoConfig::default().actor_spec(grid()), 5).unwrap();
    let critic = Network::new(PpoConfig::default().critic_spec(), 6).unwrap();
    let agent = PpoAgent::from_networks(PpoConfig::default(), grid(), actor, critic).unwrap();
    let roll = ppo_collect(&agent, &mut env(11), 64, &mut rng(12)).unwrap();
    let rows: Vec<Vec<f64>> = roll.states.iter().map(|s| trafo_nn::rl::state_row(s).to_vec()).collect();
    let probs = agent.actor.predict(&Tensor::from_rows(&rows).unwrap()).unwrap();
    let samples: Vec<PolicySample> = (0..roll.len())
        .map(|i| PolicySample {
            action: roll.actions[i],
            old_log_prob: roll.log_probs[i],
            advantage: roll.advantages[i],
        })
        .collect();
    let c = 0.01;
    let obj = policy_objective(&probs, &samples, 0.2, c).unwrap();
    assert_eq!(obj.ratio_sum, roll.len() as f64);
    assert_eq!(obj.clipped, 0);
    let mean_adv = roll.advantages.iter().sum::<f64>() / roll.len() as f64;
    assert!((obj.loss - (-mean_adv - c * obj.entropy)).abs() < 1e-12);
    assert_eq!(clipped_surrogate(2.0, 1.0, 0.2), 1.2);
}

#[test]
fn zero_advantage_moves_actor_toward_uniform() {
    let cfg = PpoConfig {
        anneal_lr: false,
        entropy_coef: 0.05,
        ..PpoConfig::default()
    };
    let actor = Network::new(cfg.actor_spec(grid()), 21).unwrap();
    let critic = Network::new(cfg.critic_spec(), 22).unwrap();
    let mut agent = PpoAgent::from_networks(cfg, grid(), actor, critic).unwrap();
    let mut roll: Rollout = ppo_collect(&agent, &mut env(13), 256, &mut rng(14)).unwrap();
    roll.advantages = vec![0.0; roll.len()];
    let x = Tensor::from_rows(&roll.states.iter().map(|s| trafo_nn::rl::state_row(s).to_vec()).collect::<Vec<_>>())
        .unwrap();
    let entropy = |net: &Network| {
        let p = net.predict(&x).unwrap();
        (0..p.rows())
            .map(|i| -p.row(i).iter().map(|q| q * q.max(1e-300).ln()).sum::<f64>())
            .sum::<f64>()
            / p.rows() as f64
    };
    let before = entropy(&agent.actor);
    ppo_update(&mut agent, &roll, &mut rng(15)).unwrap();
    let after = entropy(&agent.actor);
    assert!(after > before, "{before} -> {after}");
    let p = agent.actor.predict(&x).unwrap();
    for i in 0..p.rows() {
        assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.row(i).iter().all(|&v| v >= 0.0));
    }
}

fn small_rl() -> RlConfig {
    RlConfig {
        steps: 1500,
        eval_episodes: 200,
        ..RlConfig::default()
    }
}

#[test]
fn zero_steps_returns_initial_policy() {
    let cfg = small_rl();
    let x = Tensor::new(vec![2, 3], vec![0.1, 0.2, -0.3, 1.0, -2.0, 1.0]).unwrap();
    let Ok((Policy::Greedy { net, .. }, rec)) = train(Algo::DqnExp, &cfg, 0, 42) else {
        panic!("expected a greedy policy");
    };
    let init = DqnAgent::new(cfg.dqn, grid(), seed::derive_named(42, "q-net")).unwrap();
    assert_eq!(net.predict(&x).unwrap(), init.q_net.predict(&x).unwrap());
    assert!(rec.reward.is_empty());
    let Ok((Policy::Greedy { net, .. }, _)) = train(Algo::Ppo, &cfg, 0, 42) else {
        panic!("expected a greedy policy");
    };
    let init = PpoAgent::new(cfg.ppo, grid(), seed::derive_named(42, "actor"), seed::derive_named(42, "critic")).unwrap();
    assert_eq!(net.predict(&x).unwrap(), init.actor.predict(&x).unwrap());
}

#[test]
fn training_is_deterministic_and_beats_random() {
    let cfg = small_rl();
    for algo in Algo::ALL {
        let (p1, r1) = train(algo, &cfg, cfg.steps, 7).unwrap();
        let (p2, r2) = train(algo, &cfg, cfg.steps, 7).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.reward.len(), cfg.steps as usize);
        let e1 = evaluate(&p1, &cfg.core, &cfg.env, 200, 42).unwrap();
        let e2 = evaluate(&p2, &cfg.core, &cfg.env, 200, 42).unwrap();
        assert_eq!(e1, e2);
        let oracle = evaluate(&Policy::Oracle { grid_deg: 0.5 }, &cfg.core, &cfg.env, 200, 42).unwrap();
        assert!(oracle.summary.mean <= e1.summary.mean);
    }
    let oracle = evaluate(&Policy::Oracle { grid_deg: 0.5 }, &cfg.core, &cfg.env, 200, 42).unwrap();
    let random = evaluate(&Policy::Random { grid: grid() }, &cfg.core, &cfg.env, 200, 42).unwrap();
    assert!(random.summary.mean > oracle.summary.mean);
}

#[test]
fn divergence_keeps_partial_record() {
    let mut cfg = small_rl();
    cfg.dqn.learning_rate = 1e200;
    let err = train(Algo::DqnLinear, &cfg, 500, 1).unwrap_err();
    assert!(matches!(err.error, Error::Divergence(_)), "{:?}", err.error);
    assert!(!err.record.reward.is_empty());
}

proptest! {
    #[test]
    fn replay_keeps_newest_four(n in 0usize..20) {
        let mut buf = ReplayBuffer::new(4);
        for k in 0..n {
            buf.push(item(RemanentFlux::zero(), k, k as f64));
        }
        prop_assert_eq!(buf.len(), n.min(4));
        let kept: Vec<usize> = buf.ordered().iter().map(|i| i.action).collect();
        prop_assert_eq!(kept, (n.saturating_sub(4)..n).collect::<Vec<_>>());
    }

    #[test]
    fn epsilon_is_bounded_and_non_increasing(
        t in 0u64..100_000,
        dt in 0u64..10_000,
        eps0 in 0.05f64..1.0,
        exp in any::<bool>(),
    ) {
        let s = EpsilonSchedule {
            kind: if exp { DecayKind::Exponential } else { DecayKind::Linear },
            eps0,
            ..EpsilonSchedule::default()
        };
        let (a, b) = (epsilon_at(&s, t), epsilon_at(&s, t + dt));
        prop_assert!(b <= a);
        prop_assert!((s.eps_min..=s.eps0).contains(&a));
    }

    #[test]
    fn greedy_choice_is_affine_invariant(
        q in prop::collection::vec(-100i32..100, 8..80),
        a in 0.1f64..10.0,
        b in -10.0f64..10.0,
    ) {
        let q: Vec<f64> = q.into_iter().map(f64::from).collect();
        let t: Vec<f64> = q.iter().map(|v| a * v + b).collect();
        prop_assert_eq!(argmax(&q), argmax(&t));
    }
}

#[test]
fn greedy_evaluation_is_affine_invariant() {
    let cfg = DqnConfig::default();
    let mut net = DqnAgent::new(cfg, grid(), 1).unwrap().q_net;
    let q: Vec<f64> = (0..72).map(|k| ((k * 37) % 72) as f64 * 0.25).collect();
    set_constant_output(&mut net, &q);
    let mut scaled = net.clone();
    let t: Vec<f64> = q.iter().map(|v| 3.5 * v - 2.0).collect();
    set_constant_output(&mut scaled, &t);
    let (core, env) = (CoreModel::default(), EnvConfig::default());
    let a = evaluate(&Policy::Greedy { net, grid: grid() }, &core, &env, 50, 42).unwrap();
    let b = evaluate(&Policy::Greedy { net: scaled, grid: grid() }, &core, &env, 50, 42).unwrap();
    assert_eq!(a.theta_deg, b.theta_deg);
}
