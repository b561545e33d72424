//! Power drawn by one AP and by the whole network across sleep modes and
//! antenna counts, with the AP/cloud split.
//!
//!     cargo run --example power_breakdown

use cellfree_energy::config::PowerParams;
use cellfree_energy::power::{ap_gops, ap_power, network_power, ApLoad, SleepMode};

fn main() {
    let p = PowerParams::default();
    let m_max = 8;

    println!("single AP, no traffic");
    println!("mode     m=8 (W)   m=4 (W)   discount   wake latency");
    for mode in SleepMode::ALL {
        let at = |m| {
            let gops = if mode.is_sleeping() { p.ap_gops_idle } else { ap_gops(m, 0, p.bandwidth_frac, &p, m_max) };
            ap_power(m, &[], gops, mode, &p).unwrap()
        };
        println!(
            "{:7}  {:8.3}  {:8.3}   {:8.3}   {:9.0} us",
            format!("{mode:?}"),
            at(8),
            at(4),
            p.sleep_discounts[mode.index()],
            p.sleep_latencies_s[mode.index()] * 1e6
        );
    }

    println!("\nactive AP serving n UEs at full transmit power");
    println!("  n   m=8 (W)   m=2 (W)");
    for n in [1, 2, 5, 10] {
        let at = |m: usize| {
            let gops = ap_gops(m, n, p.bandwidth_frac, &p, m_max);
            ap_power(m, &[m as f64 * 0.25], gops, SleepMode::Active, &p).unwrap()
        };
        println!("{n:3}  {:8.3}  {:8.3}", at(8), at(2));
    }

    // nine APs: three busy, three idle but awake, three in deep sleep
    let mut aps = Vec::new();
    for l in 0..9 {
        aps.push(match l / 3 {
            0 => ApLoad { antennas: 8, mode: SleepMode::Active, waking: false, tx_power_w: 2.0, served_ues: 4 },
            1 => ApLoad { antennas: 4, mode: SleepMode::Active, waking: false, tx_power_w: 0.0, served_ues: 0 },
            _ => ApLoad { antennas: 4, mode: SleepMode::Sm3, waking: false, tx_power_w: 0.0, served_ues: 0 },
        });
    }
    let b = network_power(&aps, 12, &p, m_max).unwrap();
    println!("\nnetwork snapshot with 12 active UEs");
    for (l, w) in b.per_ap.iter().enumerate() {
        println!("  AP {l}: {w:7.3} W");
    }
    println!("  APs total {:.3} W, cloud {:.3} W, P_net {:.3} W", b.ap_total(), b.cloud, b.total);
}
