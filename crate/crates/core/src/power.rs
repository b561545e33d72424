//! Network power consumption: load-dependent AP power with sleep-mode
//! discounting, and cloud-side processing power.

use serde::{Deserialize, Serialize};

use crate::config::PowerParams;
use crate::error::PowerError;

/// Advanced sleep modes; `Active` is SM0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub enum SleepMode {
    #[default]
    Active,
    Sm1,
    Sm2,
    Sm3,
}

impl SleepMode {
    pub const ALL: [SleepMode; 4] = [SleepMode::Active, SleepMode::Sm1, SleepMode::Sm2, SleepMode::Sm3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_sleeping(self) -> bool {
        self != SleepMode::Active
    }
}

/// AP processing load in GOPS: `c0 + bw * (c1 m + c2 m n)`.
pub fn ap_gops(antennas: usize, num_served: usize, bandwidth_frac: f64, params: &PowerParams, max_antennas: usize) -> f64 {
    let m = antennas as f64;
    let c2 = params.ap_gops_per_ue_antenna(max_antennas);
    params.ap_gops_idle + bandwidth_frac * (params.ap_gops_per_antenna * m + c2 * m * num_served as f64)
}

/// Power drawn by one AP.
///
/// Active: `m P_st + D_tr sum_k p_lk + P0 + D_proc C/C_max`.
/// Asleep: the same without the transmit term, scaled by the mode's discount.
pub fn ap_power(
    antennas: usize,
    alloc_row: &[f64],
    gops: f64,
    mode: SleepMode,
    params: &PowerParams,
) -> Result<f64, PowerError> {
    if gops < 0.0 {
        return Err(PowerError::Negative("gops"));
    }
    if alloc_row.iter().any(|&p| p < 0.0) {
        return Err(PowerError::Negative("alloc_row"));
    }
    let tx: f64 = alloc_row.iter().sum();
    let base = antennas as f64 * params.ap_static_w
        + (params.ap_proc_idle_w + params.ap_proc_slope_w * gops / params.ap_gops_max);
    if mode.is_sleeping() {
        if tx > 0.0 {
            return Err(PowerError::SleepingTransmit(tx));
        }
        Ok(params.sleep_discounts[mode.index()] * base)
    } else {
        Ok(base + params.tx_slope * tx)
    }
}

/// Cloud power and whether the requested load exceeded the GPP capacity
/// (power is then evaluated at full utilisation).
pub fn cloud_power(total_gops: f64, params: &PowerParams) -> Result<(f64, bool), PowerError> {
    if total_gops < 0.0 {
        return Err(PowerError::Negative("total_gops"));
    }
    let overload = total_gops > params.cloud_gops_max;
    let util = (total_gops / params.cloud_gops_max).min(1.0);
    let p = params.cloud_fixed_w
        + (params.cloud_proc_idle_w + params.cloud_proc_slope_w * util) / params.cooling_eff;
    Ok((p, overload))
}

/// Cloud GOPS for `active_ues` concurrently served UEs.
pub fn cloud_gops(active_ues: usize, params: &PowerParams) -> f64 {
    params.cloud_gops_per_ue * active_ues as f64 * params.bandwidth_frac
}

/// Snapshot of one AP as seen by the power model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApLoad {
    pub antennas: usize,
    /// Target mode; see `waking`.
    pub mode: SleepMode,
    /// Wake-up in progress: billed as an active AP that radiates nothing.
    pub waking: bool,
    pub tx_power_w: f64,
    pub served_ues: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub per_ap: Vec<f64>,
    pub cloud: f64,
    pub total: f64,
    pub cloud_overload: bool,
}

impl PowerBreakdown {
    pub fn ap_total(&self) -> f64 {
        self.per_ap.iter().sum()
    }
}

/// Assemble per-AP and cloud power for one network snapshot.
pub fn network_power(
    aps: &[ApLoad],
    active_ues: usize,
    params: &PowerParams,
    max_antennas: usize,
) -> Result<PowerBreakdown, PowerError> {
    let mut per_ap = Vec::with_capacity(aps.len());
    for a in aps {
        let p = if a.waking {
            let gops = ap_gops(a.antennas, 0, params.bandwidth_frac, params, max_antennas);
            ap_power(a.antennas, &[], gops, SleepMode::Active, params)?
        } else if a.mode.is_sleeping() {
            ap_power(a.antennas, &[], params.ap_gops_idle, a.mode, params)?
        } else {
            let gops = ap_gops(a.antennas, a.served_ues, params.bandwidth_frac, params, max_antennas);
            ap_power(a.antennas, &[a.tx_power_w], gops, SleepMode::Active, params)?
        };
        per_ap.push(p);
    }
    let (cloud, cloud_overload) = cloud_power(cloud_gops(active_ues, params), params)?;
    let total = per_ap.iter().sum::<f64>() + cloud;
    Ok(PowerBreakdown {
        per_ap,
        cloud,
        total,
        cloud_overload,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> PowerParams {
        PowerParams::default()
    }

    #[test]
    fn discount_factors_from_table() {
        assert_eq!(params().sleep_discounts, [1.0, 0.675, 0.55, 0.23]);
        assert_eq!(params().sleep_latencies_s, [0.0, 37e-6, 500e-6, 5000e-6]);
    }

    #[test]
    fn sm1_scales_non_transmit_power() {
        let p = params();
        let w = 8.0 * p.ap_static_w + p.ap_proc_idle_w + p.ap_proc_slope_w * p.ap_gops_idle / p.ap_gops_max;
        let got = ap_power(8, &[], p.ap_gops_idle, SleepMode::Sm1, &p).unwrap();
        assert_eq!(got, 0.675 * w);
    }

    #[test]
    fn idle_active_ap_has_no_transmit_term() {
        let p = params();
        let gops = ap_gops(8, 0, 1.0, &p, 8);
        let got = ap_power(8, &[], gops, SleepMode::Active, &p).unwrap();
        assert_eq!(got, 8.0 * 0.2 + 1.0 + 10.0 * 100.0 / 200.0);
    }

    #[test]
    fn deeper_sleep_draws_less() {
        let p = params();
        let w: Vec<f64> = SleepMode::ALL
            .iter()
            .map(|&m| ap_power(6, &[], p.ap_gops_idle, m, &p).unwrap())
            .collect();
        assert!(w[3] < w[2] && w[2] < w[1] && w[1] < w[0]);
    }

    #[test]
    fn gops_model() {
        let p = params();
        assert_eq!(ap_gops(0, 5, 1.0, &p, 8), p.ap_gops_idle);
        let c2 = p.ap_gops_per_ue_antenna(8);
        let a = ap_gops(4, 3, 1.0, &p, 8);
        let b = ap_gops(4, 6, 1.0, &p, 8);
        assert!((b - a - c2 * 4.0 * 3.0).abs() < 1e-12);
        assert_eq!(ap_gops(8, 10, 1.0, &p, 8), p.ap_gops_max);
    }

    #[test]
    fn cloud_endpoints() {
        let p = params();
        assert_eq!(cloud_power(0.0, &p).unwrap().0, p.cloud_fixed_w + p.cloud_proc_idle_w / p.cooling_eff);
        assert_eq!(
            cloud_power(p.cloud_gops_max, &p).unwrap(),
            (p.cloud_fixed_w + (p.cloud_proc_idle_w + p.cloud_proc_slope_w) / p.cooling_eff, false)
        );
        let (capped, flag) = cloud_power(3.0 * p.cloud_gops_max, &p).unwrap();
        assert!(flag);
        assert_eq!(capped, cloud_power(p.cloud_gops_max, &p).unwrap().0);
        let mut q = p.clone();
        q.cooling_eff = 1.0;
        let mut r = p.clone();
        r.cooling_eff = 2.0;
        let proc = |x: &PowerParams| cloud_power(500.0, x).unwrap().0 - x.cloud_fixed_w;
        assert!((proc(&r) - proc(&q) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_inputs_rejected() {
        let p = params();
        assert_eq!(ap_power(2, &[-1.0], 20.0, SleepMode::Active, &p), Err(PowerError::Negative("alloc_row")));
        assert_eq!(ap_power(2, &[], -1.0, SleepMode::Active, &p), Err(PowerError::Negative("gops")));
        assert!(matches!(ap_power(2, &[0.5], 20.0, SleepMode::Sm2, &p), Err(PowerError::SleepingTransmit(_))));
        assert!(cloud_power(-1.0, &p).is_err());
    }

    #[test]
    fn all_asleep_floor() {
        let p = params();
        let aps = vec![
            ApLoad {
                antennas: 8,
                mode: SleepMode::Sm3,
                waking: false,
                tx_power_w: 0.0,
                served_ues: 0
            };
            25
        ];
        let b = network_power(&aps, 0, &p, 8).unwrap();
        // hand sum: 25 * 0.23 * (1.6 + 1 + 10 * 20/200) + 20 + 20/0.9
        let expect_ap = 0.23 * (8.0 * 0.2 + 1.0 + 1.0);
        assert!((b.per_ap[0] - expect_ap).abs() < 1e-12);
        assert!((b.total - (25.0 * expect_ap + 20.0 + 20.0 / 0.9)).abs() < 1e-9);
    }

    #[test]
    fn single_ap_additivity() {
        let p = params();
        let a = ApLoad {
            antennas: 5,
            mode: SleepMode::Active,
            waking: false,
            tx_power_w: 1.25,
            served_ues: 3,
        };
        let b = network_power(&[a], 3, &p, 8).unwrap();
        let ap = ap_power(5, &[1.25], ap_gops(5, 3, 1.0, &p, 8), SleepMode::Active, &p).unwrap();
        let cloud = cloud_power(cloud_gops(3, &p), &p).unwrap().0;
        assert_eq!(b.total, ap + cloud);
    }

    #[test]
    fn power_neutral_sleep_when_degenerate() {
        let mut p = params();
        p.sleep_discounts = [1.0; 4];
        p.sleep_latencies_s = [0.0; 4];
        let w: Vec<f64> = SleepMode::ALL
            .iter()
            .map(|&m| ap_power(8, &[], p.ap_gops_idle, m, &p).unwrap())
            .collect();
        assert!(w.iter().all(|&x| x == w[0]));
    }

    fn load_strategy() -> impl Strategy<Value = ApLoad> {
        (0usize..=8, 0usize..4, any::<bool>(), 0.0f64..2.0, 0usize..15).prop_map(|(m, s, waking, tx, n)| {
            let mode = SleepMode::from_index(s).unwrap();
            let idle = mode.is_sleeping() || waking;
            ApLoad {
                antennas: m,
                mode,
                waking,
                tx_power_w: if idle { 0.0 } else { tx },
                served_ues: if idle { 0 } else { n },
            }
        })
    }

    proptest! {
        #[test]
        fn breakdown_sums_exactly(aps in prop::collection::vec(load_strategy(), 1..30), ues in 0usize..200) {
            let b = network_power(&aps, ues, &params(), 8).unwrap();
            prop_assert_eq!(b.total, b.per_ap.iter().sum::<f64>() + b.cloud);
        }

        #[test]
        fn antenna_activation_raises_total(aps in prop::collection::vec(load_strategy(), 1..10), which in 0usize..10, ues in 0usize..50) {
            let which = which % aps.len();
            prop_assume!(aps[which].antennas < 8);
            let before = network_power(&aps, ues, &params(), 8).unwrap().total;
            let mut more = aps.clone();
            more[which].antennas += 1;
            let after = network_power(&more, ues, &params(), 8).unwrap().total;
            prop_assert!(after > before);
        }

        #[test]
        fn sleep_depth_never_increases_power(m in 0usize..=8, n in 0usize..15, tx in 0.0f64..2.0) {
            let p = params();
            let active = ap_power(m, &[tx], ap_gops(m, n, 1.0, &p, 8), SleepMode::Active, &p).unwrap();
            let mut prev = active;
            for mode in [SleepMode::Sm1, SleepMode::Sm2, SleepMode::Sm3] {
                let w = ap_power(m, &[], p.ap_gops_idle, mode, &p).unwrap();
                prop_assert!(w <= prev);
                prev = w;
            }
        }
    }
}
