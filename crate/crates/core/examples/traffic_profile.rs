//! The synthetic diurnal demand profile, the per-timestep Poisson arrival
//! rate it implies, and an empirical check of one hour's arrival counts.
//!
//!     cargo run --release --example traffic_profile [out.csv]

use cellfree_energy::config::make_rng;
use cellfree_energy::traffic::{profile_for, sample_count, Category, TrafficModel, BINS_PER_DAY};
use cellfree_energy::ScenarioConfig;

fn main() {
    let cfg = ScenarioConfig::default();
    let profile = profile_for(&cfg.traffic).unwrap();
    let model = TrafficModel::new(&cfg).unwrap();

    println!("hour  stringent  sensitive  tolerant   (Mbit/s/km^2)   lambda/step");
    for h in (0..24).step_by(2) {
        let hour = h as f64;
        let t = hour / 24.0 * cfg.traffic.profile_period_s;
        println!(
            "{h:4}  {:9.1}  {:9.1}  {:8.1}                   {:.4}",
            profile.density(Category::DelayStringent, hour),
            profile.density(Category::DelaySensitive, hour),
            profile.density(Category::DelayTolerant, hour),
            model.total_rate(t)
        );
    }

    let t_peak = 14.0 / 24.0 * cfg.traffic.profile_period_s;
    let lambda = model.total_rate(t_peak);
    let steps = 100_000;
    let mut rng = make_rng(cfg.rng_seed, "traffic-example");
    let total: usize = (0..steps).map(|_| sample_count(lambda, &mut rng)).sum();
    println!(
        "\npeak hour: lambda {lambda:.5}, empirical mean over {steps} steps {:.5}",
        total as f64 / steps as f64
    );

    if let Some(path) = std::env::args().nth(1) {
        profile.write_csv(&path).unwrap();
        println!("wrote {BINS_PER_DAY} bins x 3 classes to {path}");
    }
}
