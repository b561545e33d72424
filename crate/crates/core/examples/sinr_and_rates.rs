//! Effect of the antenna budget on PPZF SINR: the same UE drop is evaluated
//! with every AP running m = 2..8 antennas, and the fast SINR routine is
//! compared with the dense reference at each point.
//!
//!     cargo run --release --example sinr_and_rates

use cellfree_energy::channel::{
    assign_pilots, build_clusters, estimate_gains, ApUeTable, ClusterParams, Point, UmiNlos,
};
use cellfree_energy::config::{ap_positions, make_rng};
use cellfree_energy::phy::{allocate_power, compute_sinr, sinr_oracle, LinkParams};
use cellfree_energy::ScenarioConfig;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn main() {
    let mut cfg = ScenarioConfig::default();
    cfg.geometry.area_side_km = 0.6;
    cfg.geometry.num_aps = 9;
    cfg.geometry.grid_rows = 3;
    cfg.geometry.grid_cols = 3;
    let aps = ap_positions(&cfg);
    let pl = UmiNlos::from_config(&cfg);
    let link = LinkParams::from_config(&cfg);
    let mut rng = make_rng(3, "sinr-example");
    let shadow = Normal::new(0.0, cfg.radio.shadow_std_db).unwrap();

    let ues = 10;
    let side = cfg.geometry.area_side_km;
    let mut beta = ApUeTable::zeros(aps.len(), ues);
    for k in 0..ues {
        let u = Point {
            x: rng.random_range(0.0..side),
            y: rng.random_range(0.0..side),
        };
        for (l, a) in aps.iter().enumerate() {
            beta.set(l, k, pl.large_scale_gain(*a, u, shadow.sample(&mut rng)));
        }
    }
    let pilots = assign_pilots(&beta, cfg.radio.pilot_length);
    let chi = estimate_gains(&beta, &pilots, cfg.radio.pilot_power_w, link.noise_variance);
    let params = ClusterParams {
        energy_fraction: cfg.radio.cluster_energy_fraction,
        strong_threshold: cfg.radio.strong_threshold,
        tau_p: cfg.radio.pilot_length,
    };

    println!(" m   mean SINR (dB)   sum rate (Mbit/s)   min rate (Mbit/s)   |fast - oracle|");
    for m in 2..=cfg.radio.max_antennas {
        let antennas = vec![m; aps.len()];
        let clusters = build_clusters(&beta, &chi, &pilots, &antennas, &params);
        let alloc = allocate_power(&clusters, &chi, &antennas, cfg.radio.per_antenna_power_w);
        let fast = compute_sinr(&clusters, &chi, &beta, &alloc, &antennas, &pilots, &link).unwrap();
        let slow = sinr_oracle(&clusters, &chi, &beta, &alloc, &antennas, &pilots, &link);
        let gap = fast
            .sinr
            .iter()
            .zip(&slow.sinr)
            .map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        let mean_db = fast.sinr.iter().map(|s| 10.0 * s.log10()).sum::<f64>() / ues as f64;
        let sum: f64 = fast.rate.iter().sum();
        let min = fast.rate.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("{m:2}   {mean_db:14.2}   {:17.1}   {:17.1}   {gap:.1e}", sum / 1e6, min / 1e6);
    }
}
