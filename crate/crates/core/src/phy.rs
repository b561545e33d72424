//! Transmit-power allocation, hardened PPZF SINR and achievable rates.

use crate::channel::{ApUeTable, ClusterMap, PilotAssignment};
use crate::error::PhyError;

/// Per AP-UE transmit powers in watts; zero outside `K_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub p: ApUeTable,
}

impl PowerAllocation {
    /// Total power radiated by AP `l`.
    pub fn ap_total(&self, ap: usize) -> f64 {
        self.p.row(ap).iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub sinr: Vec<f64>,
    /// Bits per second.
    pub rate: Vec<f64>,
    pub prelog: f64,
}

/// Static radio inputs shared by every SINR evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub noise_variance: f64,
    pub bandwidth_hz: f64,
    pub prelog: f64,
}

impl LinkParams {
    pub fn from_config(cfg: &crate::config::ScenarioConfig) -> Self {
        Self {
            noise_variance: cfg.radio.noise_variance(),
            bandwidth_hz: cfg.radio.bandwidth_hz,
            prelog: cfg.radio.prelog(),
        }
    }

    pub fn rate(&self, sinr: f64) -> f64 {
        self.prelog * self.bandwidth_hz * (1.0 + sinr).log2()
    }
}

/// `p_{l,k} = m_l p_a chi_{l,k} / sum_{j in K_l} chi_{l,j}`.
///
/// APs with no usable antennas (asleep, waking, or m_l = 0) have empty
/// `K_l` in the cluster map and therefore allocate nothing.
pub fn allocate_power(
    clusters: &ClusterMap,
    chi: &ApUeTable,
    antennas: &[usize],
    per_antenna_power: f64,
) -> PowerAllocation {
    let mut p = ApUeTable::zeros(chi.num_aps(), chi.num_ues());
    for (l, served) in clusters.served_ues.iter().enumerate() {
        if served.is_empty() || antennas[l] == 0 {
            continue;
        }
        let budget = antennas[l] as f64 * per_antenna_power;
        let norm: f64 = served.iter().map(|&k| chi.get(l, k)).sum();
        for &k in served {
            p.set(l, k, budget * chi.get(l, k) / norm);
        }
    }
    PowerAllocation { p }
}

fn check_shapes(
    clusters: &ClusterMap,
    chi: &ApUeTable,
    beta: &ApUeTable,
    alloc: &PowerAllocation,
    antennas: &[usize],
    pilots: &PilotAssignment,
) -> Result<(), PhyError> {
    let (l, k) = (beta.num_aps(), beta.num_ues());
    let ok = chi.num_aps() == l
        && chi.num_ues() == k
        && alloc.p.num_aps() == l
        && alloc.p.num_ues() == k
        && antennas.len() == l
        && clusters.num_aps() == l
        && clusters.num_ues() == k
        && pilots.num_ues() == k;
    if ok {
        Ok(())
    } else {
        Err(PhyError::Shape(format!("expected {l} APs x {k} UEs")))
    }
}

/// Spatial degrees of freedom `m_l - tau_str_l` of each AP, failing if an
/// AP radiates toward anybody without at least one left.
fn spatial_dof(
    clusters: &ClusterMap,
    alloc: &PowerAllocation,
    antennas: &[usize],
) -> Result<Vec<f64>, PhyError> {
    let mut dof = vec![0.0; antennas.len()];
    for l in 0..antennas.len() {
        let m = antennas[l];
        let ts = clusters.tau_str[l];
        if m > ts {
            dof[l] = (m - ts) as f64;
        } else if let Some(k) = alloc.p.row(l).iter().position(|&p| p > 0.0) {
            return Err(PhyError::NoSpatialDegrees {
                ap: l,
                ue: k,
                antennas: m,
                tau_str: ts,
            });
        }
    }
    Ok(dof)
}

/// Effective SINR with protective partial zero-forcing and the resulting
/// rates. Sleeping APs simply contribute zero power to every sum.
pub fn compute_sinr(
    clusters: &ClusterMap,
    chi: &ApUeTable,
    beta: &ApUeTable,
    alloc: &PowerAllocation,
    antennas: &[usize],
    pilots: &PilotAssignment,
    link: &LinkParams,
) -> Result<RateReport, PhyError> {
    check_shapes(clusters, chi, beta, alloc, antennas, pilots)?;
    let dof = spatial_dof(clusters, alloc, antennas)?;
    let aps = beta.num_aps();
    let ues = beta.num_ues();
    let ap_power: Vec<f64> = (0..aps).map(|l| alloc.ap_total(l)).collect();

    let mut sinr = vec![0.0; ues];
    for k in 0..ues {
        // coherent beam toward UE t as seen by UE k: only APs serving t radiate it
        let coherent = |t: usize| -> f64 {
            clusters.serving_aps[t]
                .iter()
                .map(|&l| (dof[l] * alloc.p.get(l, t) * chi.get(l, k)).sqrt())
                .sum::<f64>()
        };
        let signal = coherent(k).powi(2);
        if signal == 0.0 {
            continue;
        }
        let mut interference = 0.0;
        for &t in pilots.cocontaminators(k) {
            if t != k {
                interference += coherent(t).powi(2);
            }
        }
        for l in 0..aps {
            if ap_power[l] > 0.0 {
                let residual = if clusters.is_strong(l, k) {
                    beta.get(l, k) - chi.get(l, k)
                } else {
                    beta.get(l, k)
                };
                interference += ap_power[l] * residual;
            }
        }
        sinr[k] = signal / (interference + link.noise_variance);
    }
    let rate = sinr.iter().map(|&s| link.rate(s)).collect();
    Ok(RateReport {
        sinr,
        rate,
        prelog: link.prelog,
    })
}

/// Unoptimised reference for [`compute_sinr`]: dense loops over every AP and
/// UE index, written term by term from the SINR expression. Only used to
/// cross-check the fast path.
pub fn sinr_oracle(
    clusters: &ClusterMap,
    chi: &ApUeTable,
    beta: &ApUeTable,
    alloc: &PowerAllocation,
    antennas: &[usize],
    pilots: &PilotAssignment,
    link: &LinkParams,
) -> RateReport {
    let aps = beta.num_aps();
    let ues = beta.num_ues();
    let dof = |l: usize| -> f64 {
        let m = antennas[l] as f64;
        let ts = clusters.tau_str[l] as f64;
        (m - ts).max(0.0)
    };
    let delta = |l: usize, k: usize| -> f64 {
        if clusters.strong_set[l].contains(&k) {
            1.0
        } else {
            0.0
        }
    };
    let mut sinr = vec![0.0; ues];
    for k in 0..ues {
        let mut num = 0.0;
        for l in 0..aps {
            num += (dof(l) * alloc.p.get(l, k) * chi.get(l, k)).sqrt();
        }
        num *= num;

        let mut coherent = 0.0;
        for t in 0..ues {
            if t == k || pilots.pilot_of(t) != pilots.pilot_of(k) {
                continue;
            }
            let mut s = 0.0;
            for l in 0..aps {
                s += (dof(l) * alloc.p.get(l, t) * chi.get(l, k)).sqrt();
            }
            coherent += s * s;
        }

        let mut noncoherent = 0.0;
        for t in 0..ues {
            for l in 0..aps {
                noncoherent += alloc.p.get(l, t) * (beta.get(l, k) - delta(l, k) * chi.get(l, k));
            }
        }

        sinr[k] = num / (coherent + noncoherent + link.noise_variance);
    }
    let rate = sinr
        .iter()
        .map(|&s| link.prelog * link.bandwidth_hz * (1.0 + s).log2())
        .collect();
    RateReport {
        sinr,
        rate,
        prelog: link.prelog,
    }
}
