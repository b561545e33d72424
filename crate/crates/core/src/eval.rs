//! Policy interface and episode/evaluation runners.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, ScenarioConfig};
use crate::env::{ApAction, CellFreeEnv, TraceRow};
use crate::traffic::DepartureRecord;

/// A controller mapping the environment's local AP information to one
/// action per AP. Implementations only read what [`CellFreeEnv::observe`]
/// and [`CellFreeEnv::ap_view`] expose.
pub trait Policy: Send + Sync {
    fn name(&self) -> String;
    fn act(&self, env: &CellFreeEnv, actions: &mut [ApAction]);
}

/// Per-episode metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub seed: u64,
    pub timesteps: u64,
    pub mean_p_net_w: f64,
    pub mean_p_ap_w: f64,
    pub mean_p_cloud_w: f64,
    /// Mean x_rem / x_max over UEs that departed during the episode.
    pub mean_drop_ratio: f64,
    pub departures: usize,
    /// Whether the mean drop ratio stayed at or below the target threshold.
    pub drop_target_met: bool,
    /// Time-averaged number of APs in SM0..SM3 (waking APs in their target).
    pub mode_counts: [f64; 4],
    /// Time-averaged antennas per AP, counting sleeping APs as zero.
    pub mean_antennas: f64,
    pub total_reward: f64,
    pub clamped_actions: u64,
    pub cloud_overload_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub summary: EpisodeSummary,
    pub trace: Vec<TraceRow>,
    pub departures: Vec<DepartureRecord>,
}

/// Run one episode from `start_s` for `horizon` timesteps.
pub fn run_episode(
    cfg: &ScenarioConfig,
    policy: &dyn Policy,
    episode: usize,
    seed: u64,
    start_s: f64,
    horizon: u64,
    record_trace: bool,
) -> EpisodeResult {
    let mut env = CellFreeEnv::new(cfg).expect("config validated by caller");
    env.reset(seed, start_s, horizon, record_trace);
    let mut actions = vec![ApAction::KEEP_ACTIVE; env.num_agents()];
    while !env.is_done() {
        policy.act(&env, &mut actions);
        env.step(&actions);
    }
    summarize(&mut env, episode, seed)
}

fn summarize(env: &mut CellFreeEnv, episode: usize, seed: u64) -> EpisodeResult {
    let st = env.stats().clone();
    let n = st.timesteps.max(1) as f64;
    let ledger = env.ledger();
    let mean_drop = ledger.mean_drop();
    let summary = EpisodeSummary {
        episode,
        seed,
        timesteps: st.timesteps,
        mean_p_net_w: st.p_net_sum / n,
        mean_p_ap_w: st.p_ap_sum / n,
        mean_p_cloud_w: st.p_cloud_sum / n,
        mean_drop_ratio: mean_drop,
        departures: ledger.len(),
        drop_target_met: mean_drop <= env.config().sim.drop_threshold,
        mode_counts: st.mode_steps.map(|c| c as f64 / n),
        mean_antennas: st.antenna_sum / n,
        total_reward: st.reward_sum,
        clamped_actions: st.clamped_actions,
        cloud_overload_steps: st.cloud_overload_steps,
    };
    let departures = ledger.records.clone();
    EpisodeResult {
        summary,
        trace: env.take_trace(),
        departures,
    }
}

/// Traffic seed of evaluation episode `i`; identical for every policy so
/// that comparisons are paired.
pub fn eval_seed(cfg: &ScenarioConfig, i: usize) -> u64 {
    derive_seed(cfg.rng_seed, "eval", i as u64)
}

/// Full-length episodes from the start of the profile, in parallel, with
/// results in episode order.
pub fn evaluate(cfg: &ScenarioConfig, policy: &dyn Policy, episodes: usize, record_trace: bool) -> Vec<EpisodeResult> {
    let horizon = cfg.sim.episode_timesteps();
    (0..episodes)
        .into_par_iter()
        .map(|i| run_episode(cfg, policy, i, eval_seed(cfg, i), 0.0, horizon, record_trace))
        .collect()
}

/// Apply a fixed action sequence, e.g. to replay a recorded trajectory.
pub struct Scripted {
    pub name: String,
    pub action: ApAction,
}

impl Policy for Scripted {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn act(&self, _env: &CellFreeEnv, actions: &mut [ApAction]) {
        actions.iter_mut().for_each(|a| *a = self.action);
    }
}
