//! Multi-agent PPO with a centralised critic: rollout collection, GAE,
//! clipped-surrogate actor updates and Huber value regression.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::{derive_seed, make_rng, ScenarioConfig, SimRng};
use crate::env::{ApAction, CellFreeEnv};
use crate::error::{CheckpointError, TrainError};
use crate::eval::Policy;
use crate::nn::{clip_grad_norm, Adam, Cache, FactoredCategorical, Mlp, POLICY_OUTPUTS};

/// Advantages and returns by the backward recursion
/// `A_t = delta_t + gamma psi A_{t+1}`, `delta_t = R_t + gamma V_{t+1} - V_t`,
/// with `V_T = bootstrap`.
pub fn compute_gae(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, psi: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        acc = delta + gamma * psi * acc;
        adv[t] = acc;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shift and scale to zero mean and unit standard deviation.
pub fn normalize(xs: &mut [f64]) {
    if xs.len() < 2 {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
}

/// `e^2 / 2` inside `|e| <= delta`, `delta (|e| - delta / 2)` outside.
pub fn huber(e: f64, delta: f64) -> f64 {
    if e.abs() <= delta {
        0.5 * e * e
    } else {
        delta * (e.abs() - 0.5 * delta)
    }
}

pub fn huber_grad(e: f64, delta: f64) -> f64 {
    e.clamp(-delta, delta)
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Derivative of [`clipped_surrogate`] with respect to the ratio: `A` when
/// the unclipped term is the minimum, otherwise 0.
pub fn clipped_surrogate_grad(ratio: f64, adv: f64, eps: f64) -> f64 {
    if ratio * adv <= ratio.clamp(1.0 - eps, 1.0 + eps) * adv {
        adv
    } else {
        0.0
    }
}

/// Batch objective `mean(min(r A, clip(r) A)) + c_e mean(H)` (maximised).
pub fn surrogate_objective(ratios: &[f64], advs: &[f64], entropies: &[f64], eps: f64, c_e: f64) -> f64 {
    let n = ratios.len() as f64;
    let s: f64 = ratios.iter().zip(advs).map(|(&r, &a)| clipped_surrogate(r, a, eps)).sum();
    s / n + c_e * entropies.iter().sum::<f64>() / n
}

/// Critic and actor networks.
#[derive(Debug, Clone, PartialEq)]
pub struct MappoAgent {
    pub critic: Mlp,
    /// One network when parameters are shared, otherwise one per AP.
    pub actors: Vec<Mlp>,
}

impl MappoAgent {
    /// Widths of every network, critic first.
    pub fn shapes(cfg: &ScenarioConfig, obs_dim: usize, state_dim: usize) -> Vec<Vec<usize>> {
        let mut critic = vec![state_dim];
        critic.extend(&cfg.rl.critic_hidden);
        critic.push(1);
        let mut actor = vec![obs_dim];
        actor.extend(&cfg.rl.actor_hidden);
        actor.push(POLICY_OUTPUTS);
        let n = if cfg.rl.share_actor { 1 } else { cfg.geometry.num_aps };
        let mut out = vec![critic];
        out.extend(std::iter::repeat_n(actor, n));
        out
    }

    pub fn new<R: Rng + ?Sized>(cfg: &ScenarioConfig, obs_dim: usize, state_dim: usize, rng: &mut R) -> Self {
        let shapes = Self::shapes(cfg, obs_dim, state_dim);
        let gain = 2f64.sqrt();
        let critic = Mlp::orthogonal(&shapes[0], gain, 1.0, rng);
        let actors = shapes[1..].iter().map(|s| Mlp::orthogonal(s, gain, 0.01, rng)).collect();
        Self { critic, actors }
    }

    pub fn actor(&self, ap: usize) -> &Mlp {
        if self.actors.len() == 1 {
            &self.actors[0]
        } else {
            &self.actors[ap]
        }
    }

    fn actor_index(&self, ap: usize) -> usize {
        if self.actors.len() == 1 {
            0
        } else {
            ap
        }
    }

    pub fn to_checkpoint(&self, cfg: &ScenarioConfig, iteration: u64) -> Checkpoint {
        let mut nets = vec![self.critic.clone()];
        nets.extend(self.actors.iter().cloned());
        Checkpoint {
            kind: ModelKind::Mappo,
            iteration,
            config_json: cfg.to_json(),
            nets,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint, cfg: &ScenarioConfig) -> Result<Self, CheckpointError> {
        ck.expect_kind(ModelKind::Mappo)?;
        let env = CellFreeEnv::new(cfg).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        ck.expect_shapes(&Self::shapes(cfg, env.obs_dim(), env.state_dim()))?;
        Ok(Self {
            critic: ck.nets[0].clone(),
            actors: ck.nets[1..].to_vec(),
        })
    }
}

/// Greedy (argmax per head) execution of trained actors.
#[derive(Debug, Clone)]
pub struct MappoPolicy {
    pub agent: MappoAgent,
}

impl Policy for MappoPolicy {
    fn name(&self) -> String {
        "mappo".into()
    }

    fn act(&self, env: &CellFreeEnv, actions: &mut [ApAction]) {
        let mut obs = vec![0.0; env.obs_dim()];
        for (l, a) in actions.iter_mut().enumerate() {
            env.observe(l, &mut obs);
            let logits = self.agent.actor(l).forward(&obs).expect("observation width matches actor");
            *a = ApAction::from_index(FactoredCategorical::from_logits(&logits).greedy());
        }
    }
}

/// One rollout of `T` decision steps over `L` agents.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub agents: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    /// `T * L * obs_dim`
    pub obs: Vec<f64>,
    /// `T * L` joint action indices
    pub actions: Vec<usize>,
    /// `T * L` log-probabilities at collection time
    pub logp: Vec<f64>,
    /// `T * state_dim`
    pub states: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub bootstrap: f64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn obs_of(&self, t: usize, ap: usize) -> &[f64] {
        let o = (t * self.agents + ap) * self.obs_dim;
        &self.obs[o..o + self.obs_dim]
    }

    pub fn state_of(&self, t: usize) -> &[f64] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }
}

/// Actor gradient of `-(surrogate + c_e H)` over the samples at `steps`.
#[derive(Debug, Clone)]
pub struct ActorGrad {
    /// One gradient per actor network.
    pub grads: Vec<Vec<f64>>,
    pub objective: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Gradient of the negated clipped objective for the (t, l) samples with
/// `t` in `steps`, using `adv[t]` for every agent.
pub fn actor_gradient(
    agent: &MappoAgent,
    rollout: &Rollout,
    steps: &[usize],
    adv: &[f64],
    clip_eps: f64,
    entropy_coef: f64,
) -> ActorGrad {
    let mut grads: Vec<Vec<f64>> = agent.actors.iter().map(|a| vec![0.0; a.num_params()]).collect();
    let n = (steps.len() * rollout.agents) as f64;
    let mut cache = Cache::default();
    let mut g_logits = [0.0; POLICY_OUTPUTS];
    let (mut obj, mut ent, mut clipped, mut kl) = (0.0, 0.0, 0usize, 0.0);
    for &t in steps {
        for l in 0..rollout.agents {
            let net = agent.actor(l);
            net.forward_cached(rollout.obs_of(t, l), &mut cache).expect("rollout obs width");
            let dist = FactoredCategorical::from_logits(cache.output());
            let a = rollout.actions[t * rollout.agents + l];
            let logp_old = rollout.logp[t * rollout.agents + l];
            let logp = dist.log_prob(a);
            let ratio = (logp - logp_old).exp();
            let h = dist.entropy();
            let a_t = adv[t];
            obj += clipped_surrogate(ratio, a_t, clip_eps);
            ent += h;
            if (ratio - 1.0).abs() > clip_eps {
                clipped += 1;
            }
            kl += logp_old - logp;
            // d/dlogp of the surrogate is (d/dr) * r
            let c_lp = clipped_surrogate_grad(ratio, a_t, clip_eps) * ratio;
            dist.logit_grad(a, -c_lp / n, -entropy_coef / n, &mut g_logits);
            net.backward(&cache, &g_logits, &mut grads[agent.actor_index(l)]);
        }
    }
    ActorGrad {
        grads,
        objective: obj / n + entropy_coef * ent / n,
        entropy: ent / n,
        clip_fraction: clipped as f64 / n,
        approx_kl: kl / n,
    }
}

/// Gradient and value of the mean Huber loss of the critic at `steps`.
pub fn critic_gradient(critic: &Mlp, rollout: &Rollout, steps: &[usize], delta: f64) -> (Vec<f64>, f64) {
    let mut grad = vec![0.0; critic.num_params()];
    let n = steps.len() as f64;
    let mut cache = Cache::default();
    let mut loss = 0.0;
    for &t in steps {
        critic.forward_cached(rollout.state_of(t), &mut cache).expect("rollout state width");
        let e = cache.output()[0] - rollout.returns[t];
        loss += huber(e, delta);
        critic.backward(&cache, &[huber_grad(e, delta) / n], &mut grad);
    }
    (grad, loss / n)
}

/// One row of the learning-curve CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub timesteps: u64,
    pub episode_reward: f64,
    pub entropy: f64,
    pub policy_objective: f64,
    pub value_loss: f64,
    pub mean_p_net_w: f64,
    pub drop_ratio: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Stateful MAPPO training loop.
pub struct MappoTrainer {
    cfg: ScenarioConfig,
    pub agent: MappoAgent,
    actor_opts: Vec<Adam>,
    critic_opt: Adam,
    rng: SimRng,
    env: CellFreeEnv,
    iteration: usize,
    timesteps: u64,
}

impl MappoTrainer {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, TrainError> {
        let env = CellFreeEnv::new(cfg)?;
        let mut rng = make_rng(cfg.rng_seed, "mappo");
        let agent = MappoAgent::new(cfg, env.obs_dim(), env.state_dim(), &mut rng);
        Ok(Self::with_agent(cfg, env, agent, rng, 0))
    }

    /// Continue from a checkpoint. Optimiser moments restart from zero.
    pub fn resume(cfg: &ScenarioConfig, ck: &Checkpoint) -> Result<Self, TrainError> {
        let env = CellFreeEnv::new(cfg)?;
        let agent = MappoAgent::from_checkpoint(ck, cfg)?;
        let rng = make_rng(derive_seed(cfg.rng_seed, "mappo-resume", ck.iteration), "mappo");
        Ok(Self::with_agent(cfg, env, agent, rng, ck.iteration as usize))
    }

    fn with_agent(cfg: &ScenarioConfig, env: CellFreeEnv, agent: MappoAgent, rng: SimRng, iteration: usize) -> Self {
        let actor_opts = agent.actors.iter().map(|a| Adam::new(a.num_params())).collect();
        let critic_opt = Adam::new(agent.critic.num_params());
        Self {
            cfg: cfg.clone(),
            agent,
            actor_opts,
            critic_opt,
            rng,
            env,
            iteration,
            timesteps: 0,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.agent.to_checkpoint(&self.cfg, self.iteration as u64)
    }

    /// Sample one rollout with the current actors, starting at a random
    /// point of the daily profile.
    pub fn collect(&mut self) -> Rollout {
        let rl = &self.cfg.rl;
        let horizon = (rl.rollout_length * self.cfg.sim.decision_period) as u64;
        let seed = derive_seed(self.cfg.rng_seed, "train", self.iteration as u64);
        let start = self.rng.random::<f64>() * self.cfg.traffic.profile_period_s;
        self.env.reset(seed, start, horizon, false);
        let env = &mut self.env;
        let (l, od, sd) = (env.num_agents(), env.obs_dim(), env.state_dim());
        let t_max = rl.rollout_length;
        let mut r = Rollout {
            agents: l,
            obs_dim: od,
            state_dim: sd,
            obs: vec![0.0; t_max * l * od],
            actions: vec![0; t_max * l],
            logp: vec![0.0; t_max * l],
            states: vec![0.0; t_max * sd],
            rewards: Vec::with_capacity(t_max),
            values: Vec::with_capacity(t_max),
            ..Rollout::default()
        };
        let mut actions = vec![ApAction::KEEP_ACTIVE; l];
        let mut state = vec![0.0; sd];
        for t in 0..t_max {
            env.observe_all(&mut r.obs[t * l * od..(t + 1) * l * od]);
            env.global_state(&mut r.states[t * sd..(t + 1) * sd]);
            let v = self.agent.critic.forward(&r.states[t * sd..(t + 1) * sd]).expect("state width")[0];
            r.values.push(v);
            for (ap, act) in actions.iter_mut().enumerate() {
                let o = (t * l + ap) * od;
                let logits = self.agent.actor(ap).forward(&r.obs[o..o + od]).expect("obs width");
                let dist = FactoredCategorical::from_logits(&logits);
                let a = dist.sample(&mut self.rng);
                r.actions[t * l + ap] = a;
                r.logp[t * l + ap] = dist.log_prob(a);
                *act = ApAction::from_index(a);
            }
            let out = env.step(&actions);
            r.rewards.push(out.reward * rl.reward_scale);
        }
        env.global_state(&mut state);
        // the rollout is a truncated slice of a longer day: always bootstrap
        r.bootstrap = self.agent.critic.forward(&state).expect("state width")[0];
        let (adv, ret) = compute_gae(&r.rewards, &r.values, r.bootstrap, rl.gamma, rl.gae_lambda);
        r.advantages = adv;
        r.returns = ret;
        self.timesteps += env.stats().timesteps;
        r
    }

    /// PPO epochs over a collected rollout.
    pub fn update(&mut self, rollout: &Rollout) -> Result<UpdateStats, TrainError> {
        let rl = self.cfg.rl.clone();
        let mut adv = rollout.advantages.clone();
        if rl.normalize_advantages {
            normalize(&mut adv);
        }
        let mut order: Vec<usize> = (0..rollout.len()).collect();
        let mut stats = UpdateStats::default();
        let mut batches = 0;
        for _ in 0..rl.ppo_epochs {
            order.shuffle(&mut self.rng);
            for mb in split_even(&order, rl.minibatches) {
                let ag = actor_gradient(&self.agent, rollout, mb, &adv, rl.clip_eps, rl.entropy_coef);
                let (mut cg, vloss) = critic_gradient(&self.agent.critic, rollout, mb, rl.huber_delta);
                self.guard("policy objective", ag.objective)?;
                self.guard("value loss", vloss)?;
                let mut grads = ag.grads;
                for g in &mut grads {
                    let norm = clip_grad_norm(g, rl.max_grad_norm);
                    self.guard("actor gradient", norm)?;
                }
                for ((net, opt), g) in self.agent.actors.iter_mut().zip(&mut self.actor_opts).zip(&grads) {
                    opt.step(net.params_mut(), g, rl.actor_lr);
                }
                let norm = clip_grad_norm(&mut cg, rl.max_grad_norm);
                self.guard("critic gradient", norm)?;
                self.critic_opt.step(self.agent.critic.params_mut(), &cg, rl.critic_lr);
                stats.policy_objective += ag.objective;
                stats.entropy += ag.entropy;
                stats.value_loss += vloss;
                stats.approx_kl += ag.approx_kl;
                stats.clip_fraction += ag.clip_fraction;
                batches += 1;
            }
        }
        if batches > 0 {
            let b = batches as f64;
            stats.policy_objective /= b;
            stats.entropy /= b;
            stats.value_loss /= b;
            stats.approx_kl /= b;
            stats.clip_fraction /= b;
        }
        Ok(stats)
    }

    fn guard(&self, what: &'static str, v: f64) -> Result<(), TrainError> {
        check_finite(what, v, self.iteration, &self.agent)
    }

    /// Collect, update, and report one iteration.
    pub fn iterate(&mut self) -> Result<CurveRow, TrainError> {
        let rollout = self.collect();
        let stats = self.update(&rollout)?;
        self.iteration += 1;
        Ok(CurveRow {
            iteration: self.iteration,
            timesteps: self.timesteps,
            episode_reward: rollout.rewards.iter().sum::<f64>() / self.cfg.rl.reward_scale,
            entropy: stats.entropy,
            policy_objective: stats.policy_objective,
            value_loss: stats.value_loss,
            mean_p_net_w: self.env.stats().mean_p_net(),
            drop_ratio: self.env.ledger().mean_drop(),
            approx_kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
        })
    }

    /// Run `iterations` more iterations, calling `hook` after each.
    pub fn train(
        &mut self,
        iterations: usize,
        mut hook: impl FnMut(&CurveRow, &MappoTrainer),
    ) -> Result<Vec<CurveRow>, TrainError> {
        let mut rows = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let row = self.iterate()?;
            hook(&row, self);
            rows.push(row);
        }
        Ok(rows)
    }
}

fn check_finite(what: &'static str, v: f64, iteration: usize, agent: &MappoAgent) -> Result<(), TrainError> {
    if v.is_finite() {
        return Ok(());
    }
    let max_abs = |m: &Mlp| m.params().iter().fold(0.0f64, |acc, p| acc.max(p.abs()));
    Err(TrainError::Divergence {
        what,
        iteration,
        diagnostic: format!(
            "value {v}; max |param| critic {:.3e}, actors {:?}",
            max_abs(&agent.critic),
            agent.actors.iter().map(|a| format!("{:.3e}", max_abs(a))).collect::<Vec<_>>()
        ),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_objective: f64,
    pub entropy: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Split into `parts` contiguous chunks whose sizes differ by at most one.
pub fn split_even<T>(xs: &[T], parts: usize) -> impl Iterator<Item = &[T]> {
    let parts = parts.clamp(1, xs.len().max(1));
    let base = xs.len() / parts;
    let extra = xs.len() % parts;
    (0..parts).scan(0, move |start, i| {
        let len = base + usize::from(i < extra);
        let s = &xs[*start..*start + len];
        *start += len;
        Some(s)
    })
}
