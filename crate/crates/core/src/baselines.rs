//! Comparison policies: Always-on, DAC-SM1, and a DQN controller.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::{derive_seed, make_rng, DqnParams, ScenarioConfig, SimRng};
use crate::env::{ApAction, CellFreeEnv, ACTIONS_PER_AGENT};
use crate::error::{CheckpointError, TrainError};
use crate::eval::Policy;
use crate::mappo::{huber, huber_grad};
use crate::nn::{Adam, Cache, Mlp};
use crate::power::SleepMode;

/// Every AP awake with all antennas on.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysOn;

impl Policy for AlwaysOn {
    fn name(&self) -> String {
        "always-on".into()
    }

    fn act(&self, env: &CellFreeEnv, actions: &mut [ApAction]) {
        let m_max = env.config().radio.max_antennas;
        for (a, ap) in actions.iter_mut().zip(env.aps()) {
            *a = ApAction {
                antenna_delta: if ap.antennas < m_max { 1 } else { 0 },
                sleep: SleepMode::Active,
            };
        }
    }
}

/// Dynamic antenna configuration with idle-triggered SM1.
///
/// An AP with no requesting UE goes to SM1, otherwise to SM0. An AP that is
/// currently in SM0 compares the achieved rate of its served UEs with their
/// demand rate: above `upper` it switches one antenna off, below `lower` one
/// on.
#[derive(Debug, Clone, Copy)]
pub struct DacSm1 {
    pub upper: f64,
    pub lower: f64,
}

impl DacSm1 {
    pub fn from_config(cfg: &crate::ScenarioConfig) -> Self {
        Self {
            upper: cfg.dac.upper,
            lower: cfg.dac.lower,
        }
    }

    /// One AP's decision from its local measurements.
    pub fn decide(&self, view: &crate::env::ApView) -> ApAction {
        if view.requesting_ues == 0 {
            return ApAction {
                antenna_delta: 0,
                sleep: SleepMode::Sm1,
            };
        }
        let mut delta = 0;
        if view.mode == SleepMode::Active {
            let ratio = if view.demand_bps > 0.0 {
                view.achieved_bps / view.demand_bps
            } else {
                f64::INFINITY
            };
            if ratio > self.upper {
                delta = -1;
            } else if ratio < self.lower {
                delta = 1;
            }
        }
        ApAction {
            antenna_delta: delta,
            sleep: SleepMode::Active,
        }
    }
}

impl Policy for DacSm1 {
    fn name(&self) -> String {
        "dac-sm1".into()
    }

    fn act(&self, env: &CellFreeEnv, actions: &mut [ApAction]) {
        for (l, a) in actions.iter_mut().enumerate() {
            *a = self.decide(&env.ap_view(l));
        }
    }
}

/// Linearly decayed exploration rate after `step` decisions.
pub fn epsilon(p: &DqnParams, step: u64) -> f64 {
    if p.eps_decay_steps == 0 {
        return p.eps_end;
    }
    if step >= p.eps_decay_steps as u64 {
        return p.eps_end;
    }
    let frac = step as f64 / p.eps_decay_steps as f64;
    p.eps_start + (p.eps_end - p.eps_start) * frac
}

pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..q.len() {
        if q[j] > q[best] {
            best = j;
        }
    }
    best
}

pub fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64], eps: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < eps {
        rng.random_range(0..q.len())
    } else {
        argmax(q)
    }
}

pub fn q_shape(cfg: &ScenarioConfig, obs_dim: usize) -> Vec<usize> {
    let mut s = vec![obs_dim];
    s.extend(&cfg.dqn.hidden);
    s.push(ACTIONS_PER_AGENT);
    s
}

/// Greedy action from a shared Q-network over the 12 joint choices.
#[derive(Debug, Clone)]
pub struct DqnPolicy {
    pub q: Mlp,
}

impl DqnPolicy {
    pub fn from_checkpoint(ck: &Checkpoint, cfg: &ScenarioConfig) -> Result<Self, CheckpointError> {
        ck.expect_kind(ModelKind::Dqn)?;
        let env = CellFreeEnv::new(cfg).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        ck.expect_shapes(&[q_shape(cfg, env.obs_dim())])?;
        Ok(Self { q: ck.nets[0].clone() })
    }
}

impl Policy for DqnPolicy {
    fn name(&self) -> String {
        "dqn".into()
    }

    fn act(&self, env: &CellFreeEnv, actions: &mut [ApAction]) {
        let mut obs = vec![0.0; env.obs_dim()];
        for (l, a) in actions.iter_mut().enumerate() {
            env.observe(l, &mut obs);
            let q = self.q.forward(&obs).expect("observation width matches Q-network");
            *a = ApAction::from_index(argmax(&q));
        }
    }
}

/// Uniform experience replay of per-agent transitions.
#[derive(Debug, Clone)]
pub struct Replay {
    capacity: usize,
    dim: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    len: usize,
    pos: usize,
}

impl Replay {
    pub fn new(capacity: usize, dim: usize) -> Self {
        Self {
            capacity,
            dim,
            obs: vec![0.0; capacity * dim],
            next_obs: vec![0.0; capacity * dim],
            actions: vec![0; capacity],
            rewards: vec![0.0; capacity],
            len: 0,
            pos: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, obs: &[f64], action: usize, reward: f64, next_obs: &[f64]) {
        let d = self.dim;
        let i = self.pos;
        self.obs[i * d..(i + 1) * d].copy_from_slice(obs);
        self.next_obs[i * d..(i + 1) * d].copy_from_slice(next_obs);
        self.actions[i] = action;
        self.rewards[i] = reward;
        self.pos = (self.pos + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    fn obs(&self, i: usize) -> &[f64] {
        &self.obs[i * self.dim..(i + 1) * self.dim]
    }

    fn next_obs(&self, i: usize) -> &[f64] {
        &self.next_obs[i * self.dim..(i + 1) * self.dim]
    }
}

/// Mean Huber TD loss on `batch` and its gradient for the online network.
/// Targets `r + gamma max_a' Q_target(o', a')`; transitions are never
/// terminal because training episodes are truncated slices of a day.
pub fn td_loss(online: &Mlp, target: &Mlp, replay: &Replay, batch: &[usize], gamma: f64, delta: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; online.num_params()];
    let mut cache = Cache::default();
    let mut g_out = vec![0.0; ACTIONS_PER_AGENT];
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for &i in batch {
        let q_next = target.forward(replay.next_obs(i)).expect("replay width");
        let y = replay.rewards[i] + gamma * q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        online.forward_cached(replay.obs(i), &mut cache).expect("replay width");
        let a = replay.actions[i];
        let e = cache.output()[a] - y;
        loss += huber(e, delta);
        g_out.iter_mut().for_each(|g| *g = 0.0);
        g_out[a] = huber_grad(e, delta) / n;
        online.backward(&cache, &g_out, &mut grad);
    }
    (loss / n, grad)
}

/// One row of the DQN learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnCurveRow {
    pub iteration: usize,
    pub timesteps: u64,
    pub episode_reward: f64,
    pub epsilon: f64,
    pub td_loss: f64,
    pub mean_p_net_w: f64,
    pub drop_ratio: f64,
}

/// Independent learners sharing one Q-network, trained from a common
/// replay buffer with a periodically synchronised target network.
pub struct DqnTrainer {
    cfg: ScenarioConfig,
    pub online: Mlp,
    pub target: Mlp,
    opt: Adam,
    replay: Replay,
    rng: SimRng,
    env: CellFreeEnv,
    iteration: usize,
    decisions: u64,
    updates: u64,
    timesteps: u64,
}

impl DqnTrainer {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, TrainError> {
        let env = CellFreeEnv::new(cfg)?;
        let mut rng = make_rng(cfg.rng_seed, "dqn");
        let online = Mlp::orthogonal(&q_shape(cfg, env.obs_dim()), 2f64.sqrt(), 1.0, &mut rng);
        Ok(Self {
            target: online.clone(),
            opt: Adam::new(online.num_params()),
            replay: Replay::new(cfg.dqn.replay_capacity, env.obs_dim()),
            online,
            rng,
            env,
            iteration: 0,
            decisions: 0,
            updates: 0,
            timesteps: 0,
            cfg: cfg.clone(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: ModelKind::Dqn,
            iteration: self.iteration as u64,
            config_json: self.cfg.to_json(),
            nets: vec![self.online.clone()],
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    /// One training episode: a rollout of `rl.rollout_length` decisions with
    /// an update after every decision once the buffer is warm.
    pub fn iterate(&mut self) -> Result<DqnCurveRow, TrainError> {
        let d = self.cfg.dqn.clone();
        let horizon = (self.cfg.rl.rollout_length * self.cfg.sim.decision_period) as u64;
        let seed = derive_seed(self.cfg.rng_seed, "dqn-train", self.iteration as u64);
        let start = self.rng.random::<f64>() * self.cfg.traffic.profile_period_s;
        self.env.reset(seed, start, horizon, false);
        let (l, od) = (self.env.num_agents(), self.env.obs_dim());
        let mut obs = vec![0.0; l * od];
        let mut next = vec![0.0; l * od];
        let mut chosen = vec![0usize; l];
        let mut actions = vec![ApAction::KEEP_ACTIVE; l];
        let (mut ep_reward, mut loss_sum, mut losses) = (0.0, 0.0, 0usize);
        let mut eps = epsilon(&d, self.decisions);
        self.env.observe_all(&mut obs);
        while !self.env.is_done() {
            eps = epsilon(&d, self.decisions);
            for ap in 0..l {
                let q = self.online.forward(&obs[ap * od..(ap + 1) * od]).expect("obs width");
                chosen[ap] = epsilon_greedy(&q, eps, &mut self.rng);
                actions[ap] = ApAction::from_index(chosen[ap]);
            }
            let out = self.env.step(&actions);
            ep_reward += out.reward;
            self.env.observe_all(&mut next);
            let r = out.reward * self.cfg.rl.reward_scale;
            for ap in 0..l {
                self.replay.push(&obs[ap * od..(ap + 1) * od], chosen[ap], r, &next[ap * od..(ap + 1) * od]);
            }
            std::mem::swap(&mut obs, &mut next);
            self.decisions += 1;

            if self.replay.len() >= d.learning_starts.max(d.batch_size) {
                let batch: Vec<usize> = (0..d.batch_size).map(|_| self.rng.random_range(0..self.replay.len())).collect();
                let (loss, grad) = td_loss(&self.online, &self.target, &self.replay, &batch, d.gamma, d.huber_delta);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(TrainError::Divergence {
                        what: "TD loss",
                        iteration: self.iteration,
                        diagnostic: format!("loss {loss} after {} updates", self.updates),
                    });
                }
                self.opt.step(self.online.params_mut(), &grad, d.lr);
                self.updates += 1;
                if self.updates % d.target_sync as u64 == 0 {
                    self.sync_target();
                }
                loss_sum += loss;
                losses += 1;
            }
        }
        self.iteration += 1;
        self.timesteps += self.env.stats().timesteps;
        Ok(DqnCurveRow {
            iteration: self.iteration,
            timesteps: self.timesteps,
            episode_reward: ep_reward,
            epsilon: eps,
            td_loss: if losses > 0 { loss_sum / losses as f64 } else { 0.0 },
            mean_p_net_w: self.env.stats().mean_p_net(),
            drop_ratio: self.env.ledger().mean_drop(),
        })
    }

    pub fn train(
        &mut self,
        iterations: usize,
        mut hook: impl FnMut(&DqnCurveRow, &DqnTrainer),
    ) -> Result<Vec<DqnCurveRow>, TrainError> {
        let mut rows = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let row = self.iterate()?;
            hook(&row, self);
            rows.push(row);
        }
        Ok(rows)
    }

    pub fn policy(&self) -> DqnPolicy {
        DqnPolicy { q: self.online.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ApView;

    fn view(requesting: usize, demand: f64, achieved: f64) -> ApView {
        ApView {
            antennas: 4,
            mode: SleepMode::Active,
            requesting_ues: requesting,
            served_ues: requesting,
            demand_bps: demand,
            achieved_bps: achieved,
            ..ApView::default()
        }
    }

    const DAC: DacSm1 = DacSm1 { upper: 55.0, lower: 45.0 };

    #[test]
    fn idle_ap_goes_to_sm1() {
        assert_eq!(DAC.decide(&view(0, 0.0, 0.0)).sleep, SleepMode::Sm1);
    }

    #[test]
    fn hysteresis_band() {
        assert_eq!(DAC.decide(&view(1, 1.0, 50.0)).antenna_delta, 0);
        assert_eq!(DAC.decide(&view(1, 1.0, 100.0)).antenna_delta, -1);
        assert_eq!(DAC.decide(&view(1, 1.0, 2.0)).antenna_delta, 1);
    }

    #[test]
    fn zero_demand_counts_as_infinite_ratio() {
        assert_eq!(DAC.decide(&view(2, 0.0, 0.0)).antenna_delta, -1);
    }

    #[test]
    fn sleeping_ap_with_requests_wakes_without_antenna_change() {
        let mut v = view(3, 1.0, 0.0);
        v.mode = SleepMode::Sm1;
        let a = DAC.decide(&v);
        assert_eq!(a.sleep, SleepMode::Active);
        assert_eq!(a.antenna_delta, 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = make_rng(1, "eps");
        let q = [0.0, 5.0, -1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let n = 100_000;
        let mut counts = [0usize; ACTIONS_PER_AGENT];
        for _ in 0..n {
            counts[epsilon_greedy(&q, 1.0, &mut rng)] += 1;
        }
        // total variation distance from uniform
        let tv: f64 = counts.iter().map(|&c| (c as f64 / n as f64 - 1.0 / 12.0).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.02, "tv {tv}");
        assert!(counts.iter().all(|&c| c > 0));
        assert_eq!(epsilon_greedy(&q, 0.0, &mut rng), 1);
    }

    #[test]
    fn epsilon_schedule_stays_in_range() {
        let p = DqnParams::default();
        assert_eq!(epsilon(&p, 0), 1.0);
        assert_eq!(epsilon(&p, p.eps_decay_steps as u64), p.eps_end);
        assert_eq!(epsilon(&p, 10 * p.eps_decay_steps as u64), p.eps_end);
        for s in (0..60_000).step_by(997) {
            assert!((0.0..=1.0).contains(&epsilon(&p, s)));
        }
    }

    #[test]
    fn zero_net_zero_reward_has_zero_td_loss() {
        let net = Mlp::zeros(&[3, 4, 12]);
        let mut replay = Replay::new(8, 3);
        for i in 0..8 {
            replay.push(&[i as f64, 1.0, -1.0], i % 12, 0.0, &[0.5, 0.5, 0.5]);
        }
        let (loss, grad) = td_loss(&net, &net, &replay, &[0, 3, 7], 0.99, 10.0);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn target_sync_copies_exactly() {
        let mut cfg = ScenarioConfig::default();
        cfg.geometry.num_aps = 4;
        cfg.geometry.grid_rows = 2;
        cfg.geometry.grid_cols = 2;
        cfg.dqn.hidden = vec![8];
        let mut tr = DqnTrainer::new(&cfg).unwrap();
        tr.online.params_mut()[0] += 0.25;
        assert_ne!(tr.online, tr.target);
        tr.sync_target();
        assert_eq!(tr.online.params(), tr.target.params());
    }

    #[test]
    fn dqn_smoke_run() {
        let mut cfg = ScenarioConfig::default();
        cfg.geometry.num_aps = 4;
        cfg.geometry.grid_rows = 2;
        cfg.geometry.grid_cols = 2;
        cfg.geometry.area_side_km = 0.4;
        cfg.rl.rollout_length = 20;
        cfg.rl.minibatches = 1;
        cfg.dqn.hidden = vec![8];
        cfg.dqn.batch_size = 8;
        cfg.dqn.learning_starts = 16;
        cfg.dqn.target_sync = 5;
        let mut tr = DqnTrainer::new(&cfg).unwrap();
        let rows = tr.train(2, |_, _| {}).unwrap();
        assert!(rows[1].td_loss.is_finite());
        let ck = Checkpoint::from_bytes(&tr.checkpoint().to_bytes()).unwrap();
        assert_eq!(DqnPolicy::from_checkpoint(&ck, &cfg).unwrap().q, tr.online);
    }
}
