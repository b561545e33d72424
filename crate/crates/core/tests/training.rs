use std::path::Path;

use cellfree_energy::baselines::DqnTrainer;
use cellfree_energy::config::load_scenario;
use cellfree_energy::mappo::MappoTrainer;
use cellfree_energy::ScenarioConfig;

fn small() -> ScenarioConfig {
    let mut cfg = load_scenario(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.toml")).unwrap();
    cfg.sim.episode_duration_s = 20.0;
    cfg.traffic.profile_period_s = 20.0;
    cfg.rl.rollout_length = 64;
    cfg.rl.minibatches = 4;
    cfg.rl.ppo_epochs = 4;
    cfg.rl.reward_power_unit_w = 10.0;
    cfg
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn mappo_learns_on_small_scenario() {
    let episodes = 40;
    let mut improved = 0;
    let mut sharpened = 0;
    for seed in [1, 2, 3] {
        let mut cfg = small();
        cfg.rng_seed = seed;
        let rows = MappoTrainer::new(&cfg).unwrap().train(episodes, |_, _| {}).unwrap();
        let reward: Vec<f64> = rows.iter().map(|r| r.episode_reward).collect();
        let entropy: Vec<f64> = rows.iter().map(|r| r.entropy).collect();
        improved += (mean(&reward[episodes - 10..]) > mean(&reward[..10])) as usize;
        sharpened += (mean(&entropy[episodes - 10..]) < mean(&entropy[..10])) as usize;
        assert!(rows.iter().all(|r| r.value_loss.is_finite() && r.policy_objective.is_finite()));
    }
    assert!(improved >= 2, "reward improved for {improved}/3 seeds");
    assert!(sharpened >= 2, "entropy fell for {sharpened}/3 seeds");
}

#[test]
fn dqn_explores_then_exploits() {
    let mut cfg = small();
    cfg.dqn.eps_decay_steps = 200;
    let mut t = DqnTrainer::new(&cfg).unwrap();
    let rows = t.train(6, |_, _| {}).unwrap();
    assert!(rows[0].epsilon > rows[5].epsilon);
    assert_eq!(rows[5].epsilon, cfg.dqn.eps_end);
    assert!(rows.iter().skip(1).all(|r| r.td_loss.is_finite() && r.td_loss >= 0.0));
    assert_eq!(rows[5].timesteps, 6 * 64 * cfg.sim.decision_period as u64);
}

#[test]
fn resumed_training_continues_from_checkpoint() {
    let cfg = small();
    let mut t = MappoTrainer::new(&cfg).unwrap();
    t.train(2, |_, _| {}).unwrap();
    let ck = t.checkpoint();
    let resumed = MappoTrainer::resume(&cfg, &ck).unwrap();
    assert_eq!(resumed.iteration(), 2);
    assert_eq!(resumed.agent, t.agent);
}
