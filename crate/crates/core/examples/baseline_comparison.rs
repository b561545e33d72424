//! Always-on against DAC-SM1 on paired seeds.
//!
//!     cargo run --release --example baseline_comparison [config.toml] [episodes]

use cellfree_energy::baselines::{AlwaysOn, DacSm1};
use cellfree_energy::config::load_scenario;
use cellfree_energy::eval::{evaluate, Policy};
use cellfree_energy::metrics::{pc_savings_pct, EvalSummary};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).map_or("crates/core/configs/smoke.toml", String::as_str);
    let episodes: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4);
    let cfg = load_scenario(path).unwrap_or_else(|e| panic!("{path}: {e}"));

    let policies: Vec<Box<dyn Policy>> = vec![Box::new(AlwaysOn), Box::new(DacSm1::from_config(&cfg))];
    let mut rows = Vec::new();
    for p in &policies {
        let eps: Vec<_> = evaluate(&cfg, p.as_ref(), episodes, false).into_iter().map(|r| r.summary).collect();
        rows.push(EvalSummary::from_episodes(&p.name(), &cfg, &eps));
    }
    let reference = rows[0].mean_p_net_w;
    println!("policy      P_net (W)   AP (W)   cloud (W)   drop ratio   SM0   SM1   SM2   SM3   saving");
    for s in &rows {
        let m = s.mode_counts;
        println!(
            "{:10}  {:9.2}  {:7.2}  {:9.2}   {:10.2e}  {:4.1}  {:4.1}  {:4.1}  {:4.1}  {:5.1}%",
            s.policy,
            s.mean_p_net_w,
            s.mean_p_ap_w,
            s.mean_p_cloud_w,
            s.mean_drop_ratio,
            m[0],
            m[1],
            m[2],
            m[3],
            pc_savings_pct(reference, s.mean_p_net_w)
        );
    }
}
