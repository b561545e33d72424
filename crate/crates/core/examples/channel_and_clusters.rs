//! Drop a handful of UEs into the default 5x5 deployment, assign pilots,
//! estimate channels and print the user-centric clusters.
//!
//!     cargo run --release --example channel_and_clusters [num_ues]

use cellfree_energy::channel::{
    assign_pilots, build_clusters, estimate_gains, ApUeTable, ClusterParams, Point, UmiNlos,
};
use cellfree_energy::config::{ap_positions, make_rng};
use cellfree_energy::ScenarioConfig;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn main() {
    let ues: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let cfg = ScenarioConfig::default();
    let aps = ap_positions(&cfg);
    let pl = UmiNlos::from_config(&cfg);
    let mut rng = make_rng(cfg.rng_seed, "example-ues");
    let shadow = Normal::new(0.0, cfg.radio.shadow_std_db).unwrap();
    let side = cfg.geometry.area_side_km;

    let ue_pos: Vec<Point> = (0..ues)
        .map(|_| Point { x: rng.random_range(0.0..side), y: rng.random_range(0.0..side) })
        .collect();
    let mut beta = ApUeTable::zeros(aps.len(), ues);
    for (k, u) in ue_pos.iter().enumerate() {
        for (l, a) in aps.iter().enumerate() {
            beta.set(l, k, pl.large_scale_gain(*a, *u, shadow.sample(&mut rng)));
        }
    }

    let pilots = assign_pilots(&beta, cfg.radio.pilot_length);
    let chi = estimate_gains(&beta, &pilots, cfg.radio.pilot_power_w, cfg.radio.noise_variance());
    let antennas = vec![cfg.radio.max_antennas; aps.len()];
    let params = ClusterParams {
        energy_fraction: cfg.radio.cluster_energy_fraction,
        strong_threshold: cfg.radio.strong_threshold,
        tau_p: cfg.radio.pilot_length,
    };
    let clusters = build_clusters(&beta, &chi, &pilots, &antennas, &params);

    println!("ue  pos(km)        pilot  serving APs (strongest first)");
    for k in 0..ues {
        println!(
            "{k:2}  ({:.2}, {:.2})   {:5}  {:?}",
            ue_pos[k].x,
            ue_pos[k].y,
            pilots.pilot_of(k),
            clusters.serving_aps[k]
        );
    }
    println!("\nap  served  strong  tau_str");
    for l in 0..aps.len() {
        if !clusters.served_ues[l].is_empty() {
            println!(
                "{l:2}  {:6}  {:6}  {:7}",
                clusters.served_ues[l].len(),
                clusters.strong_set[l].len(),
                clusters.tau_str[l]
            );
        }
    }
}
