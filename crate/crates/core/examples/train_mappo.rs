//! Train MAPPO, print the learning curve, and compare the greedy policy
//! with the rule-based baselines on paired evaluation seeds.
//!
//!     cargo run --release --example train_mappo [config.toml] [episodes] [eval_episodes]

use cellfree_energy::baselines::{AlwaysOn, DacSm1};
use cellfree_energy::config::load_scenario;
use cellfree_energy::eval::{evaluate, Policy};
use cellfree_energy::mappo::{MappoPolicy, MappoTrainer};
use cellfree_energy::metrics::EvalSummary;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).map_or("crates/core/configs/smoke.toml", String::as_str);
    let mut cfg = load_scenario(path).unwrap_or_else(|e| panic!("{path}: {e}"));
    cfg.apply_env_overrides().unwrap();
    let episodes: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(cfg.rl.episodes);
    let eval_episodes: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(3);

    let mut trainer = MappoTrainer::new(&cfg).unwrap();
    println!("episode  timesteps      reward  entropy   P_net   drop");
    trainer
        .train(episodes, |r, _| {
            println!(
                "{:7}  {:9}  {:10.1}  {:7.3}  {:6.1}  {:.2e}",
                r.iteration, r.timesteps, r.episode_reward, r.entropy, r.mean_p_net_w, r.drop_ratio
            );
        })
        .unwrap();

    let learned = MappoPolicy {
        agent: trainer.agent.clone(),
    };
    let policies: Vec<Box<dyn Policy>> = vec![Box::new(learned), Box::new(AlwaysOn), Box::new(DacSm1::from_config(&cfg))];
    println!("\npolicy      P_net (W)   drop ratio   mean antennas   modes");
    for p in &policies {
        let eps: Vec<_> = evaluate(&cfg, p.as_ref(), eval_episodes, false).into_iter().map(|r| r.summary).collect();
        let s = EvalSummary::from_episodes(&p.name(), &cfg, &eps);
        println!(
            "{:10}  {:9.2}   {:10.2e}   {:13.2}   {:?}",
            s.policy,
            s.mean_p_net_w,
            s.mean_drop_ratio,
            s.mean_antennas,
            s.mode_counts.map(|c| (c * 100.0).round() / 100.0)
        );
    }
}
