//! Train the shared-Q DQN baseline and save its checkpoint.
//!
//!     cargo run --release --example train_dqn [config.toml] [episodes] [checkpoint.bin]

use cellfree_energy::baselines::DqnTrainer;
use cellfree_energy::config::load_scenario;
use cellfree_energy::eval::evaluate;
use cellfree_energy::metrics::EvalSummary;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).map_or("crates/core/configs/smoke.toml", String::as_str);
    let cfg = load_scenario(path).unwrap_or_else(|e| panic!("{path}: {e}"));
    let episodes: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(cfg.rl.episodes);

    let mut trainer = DqnTrainer::new(&cfg).unwrap();
    println!("episode  timesteps      reward  epsilon   td loss   P_net");
    trainer
        .train(episodes, |r, _| {
            println!(
                "{:7}  {:9}  {:10.1}  {:7.3}  {:8.4}  {:6.1}",
                r.iteration, r.timesteps, r.episode_reward, r.epsilon, r.td_loss, r.mean_p_net_w
            );
        })
        .unwrap();

    let eps: Vec<_> = evaluate(&cfg, &trainer.policy(), 2, false).into_iter().map(|r| r.summary).collect();
    let s = EvalSummary::from_episodes("dqn", &cfg, &eps);
    println!("\ngreedy policy: P_net {:.2} W, drop ratio {:.2e}", s.mean_p_net_w, s.mean_drop_ratio);
    if let Some(out) = args.get(3) {
        trainer.checkpoint().save(out).unwrap();
        println!("saved {out}");
    }
}
