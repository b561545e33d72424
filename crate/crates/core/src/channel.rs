//! Large-scale fading, pilot assignment, channel-estimate gains and
//! user-centric clustering with the PPZF strong/weak split.
//!
//! All tables are indexed `[ap][ue]` and stored row-major (one row per AP).

use serde::{Deserialize, Serialize};

/// A position in the service area, in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Dense `L x K` matrix of per AP-UE quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ApUeTable {
    aps: usize,
    ues: usize,
    data: Vec<f64>,
}

impl ApUeTable {
    pub fn zeros(aps: usize, ues: usize) -> Self {
        Self {
            aps,
            ues,
            data: vec![0.0; aps * ues],
        }
    }

    /// Build from per-UE columns (each of length `aps`).
    pub fn from_columns<'a, I>(aps: usize, columns: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let cols: Vec<&[f64]> = columns.into_iter().collect();
        let mut t = Self::zeros(aps, cols.len());
        for (k, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), aps, "column {k} has wrong length");
            for (l, &v) in col.iter().enumerate() {
                t.set(l, k, v);
            }
        }
        t
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let aps = rows.len();
        let ues = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(aps * ues);
        for r in rows {
            assert_eq!(r.len(), ues, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { aps, ues, data }
    }

    pub fn num_aps(&self) -> usize {
        self.aps
    }

    pub fn num_ues(&self) -> usize {
        self.ues
    }

    #[inline]
    pub fn get(&self, ap: usize, ue: usize) -> f64 {
        self.data[ap * self.ues + ue]
    }

    #[inline]
    pub fn set(&mut self, ap: usize, ue: usize, v: f64) {
        self.data[ap * self.ues + ue] = v;
    }

    pub fn row(&self, ap: usize) -> &[f64] {
        &self.data[ap * self.ues..(ap + 1) * self.ues]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

/// 3GPP TR 38.901 UMi street-canyon NLOS parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UmiNlos {
    pub carrier_ghz: f64,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
}

impl UmiNlos {
    pub fn from_config(cfg: &crate::config::ScenarioConfig) -> Self {
        Self {
            carrier_ghz: cfg.radio.carrier_freq_hz / 1e9,
            ap_height_m: cfg.geometry.ap_height_m,
            ue_height_m: cfg.geometry.ue_height_m,
        }
    }

    /// Path loss in dB for a 3D distance in metres (clamped to at least 1 m).
    pub fn path_loss_db(&self, d3d_m: f64) -> f64 {
        35.3 * d3d_m.max(1.0).log10() + 22.4 + 21.3 * self.carrier_ghz.log10()
    }

    pub fn distance_3d_m(&self, ap: Point, ue: Point) -> f64 {
        let d2 = ap.dist(&ue) * 1000.0;
        d2.hypot(self.ap_height_m - self.ue_height_m)
    }

    /// Linear large-scale gain beta for one AP-UE pair with a shadowing draw in dB.
    pub fn large_scale_gain(&self, ap: Point, ue: Point, shadow_db: f64) -> f64 {
        let pl = self.path_loss_db(self.distance_3d_m(ap, ue));
        10f64.powf(-(pl + shadow_db) / 10.0)
    }
}

/// Pilot index per UE and the induced co-pilot groups.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotAssignment {
    pilot_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl PilotAssignment {
    pub fn from_indices(pilot_of: Vec<usize>, tau_p: usize) -> Self {
        let mut members = vec![Vec::new(); tau_p];
        for (k, &p) in pilot_of.iter().enumerate() {
            assert!(p < tau_p, "pilot {p} out of range");
            members[p].push(k);
        }
        Self { pilot_of, members }
    }

    pub fn tau_p(&self) -> usize {
        self.members.len()
    }

    pub fn num_ues(&self) -> usize {
        self.pilot_of.len()
    }

    pub fn pilot_of(&self, ue: usize) -> usize {
        self.pilot_of[ue]
    }

    pub fn pilots(&self) -> &[usize] {
        &self.pilot_of
    }

    /// P_k: all UEs sharing UE k's pilot, k included, in index order.
    pub fn cocontaminators(&self, ue: usize) -> &[usize] {
        &self.members[self.pilot_of[ue]]
    }

    pub fn users_of_pilot(&self, pilot: usize) -> &[usize] {
        &self.members[pilot]
    }

    pub fn distinct_pilots(&self) -> usize {
        self.members.iter().filter(|m| !m.is_empty()).count()
    }
}

/// Greedy least-contamination choice for one incoming UE.
///
/// `load[p]` is the summed gain, at the UE's strongest AP, of the UEs already
/// holding pilot `p`, and `users[p]` their count. An unused pilot is always
/// preferred (lowest index first); otherwise the lowest load wins.
pub fn choose_pilot(load: &[f64], users: &[usize]) -> usize {
    if let Some(p) = users.iter().position(|&u| u == 0) {
        return p;
    }
    let mut best = 0;
    for p in 1..load.len() {
        if load[p] < load[best] {
            best = p;
        }
    }
    best
}

/// Assign pilots to UEs in index order with [`choose_pilot`].
pub fn assign_pilots(beta: &ApUeTable, tau_p: usize) -> PilotAssignment {
    assert!(tau_p >= 1);
    let mut pilot_of = Vec::with_capacity(beta.num_ues());
    for k in 0..beta.num_ues() {
        let strongest = strongest_ap(beta, k);
        let mut load = vec![0.0; tau_p];
        let mut users = vec![0usize; tau_p];
        for (t, &p) in pilot_of.iter().enumerate() {
            load[p] += beta.get(strongest, t);
            users[p] += 1;
        }
        pilot_of.push(choose_pilot(&load, &users));
    }
    PilotAssignment::from_indices(pilot_of, tau_p)
}

/// Index of the AP with the largest gain toward `ue` (lowest index on ties).
pub fn strongest_ap(beta: &ApUeTable, ue: usize) -> usize {
    let mut best = 0;
    for l in 1..beta.num_aps() {
        if beta.get(l, ue) > beta.get(best, ue) {
            best = l;
        }
    }
    best
}

/// MMSE channel-estimate gains
/// `chi = tau_p p_p beta^2 / (tau_p p_p sum_{t in P_k} beta_t + sigma^2)`.
pub fn estimate_gains(
    beta: &ApUeTable,
    pilots: &PilotAssignment,
    pilot_power: f64,
    noise_variance: f64,
) -> ApUeTable {
    assert!(pilot_power > 0.0);
    let (aps, ues) = (beta.num_aps(), beta.num_ues());
    let scale = pilots.tau_p() as f64 * pilot_power;
    let mut chi = ApUeTable::zeros(aps, ues);
    let mut per_pilot = vec![0.0; pilots.tau_p()];
    for l in 0..aps {
        per_pilot.iter_mut().for_each(|s| *s = 0.0);
        for k in 0..ues {
            per_pilot[pilots.pilot_of(k)] += beta.get(l, k);
        }
        for k in 0..ues {
            let b = beta.get(l, k);
            let denom = scale * per_pilot[pilots.pilot_of(k)] + noise_variance;
            chi.set(l, k, scale * b * b / denom);
        }
    }
    chi
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub energy_fraction: f64,
    pub strong_threshold: f64,
    pub tau_p: usize,
}

/// User-centric association and PPZF interference-suppression sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterMap {
    /// M_k, ordered by decreasing gain.
    pub serving_aps: Vec<Vec<usize>>,
    /// K_l in increasing UE order.
    pub served_ues: Vec<Vec<usize>>,
    /// Strong-channel subset of K_l.
    pub strong_set: Vec<Vec<usize>>,
    /// Distinct pilots among `strong_set[l]`.
    pub tau_str: Vec<usize>,
    strong: Vec<bool>,
    ues: usize,
}

impl ClusterMap {
    /// delta_{l,k}
    #[inline]
    pub fn is_strong(&self, ap: usize, ue: usize) -> bool {
        self.strong[ap * self.ues + ue]
    }

    pub fn num_aps(&self) -> usize {
        self.served_ues.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ues
    }
}

/// Shortest prefix of `candidates` (sorted by decreasing gain) whose gain sum
/// reaches `fraction` of the total over all candidates.
pub fn energy_prefix(gains: &[f64], candidates: &[usize], fraction: f64) -> usize {
    let mut sorted: Vec<usize> = candidates.to_vec();
    sort_by_gain_desc(&mut sorted, gains);
    let total: f64 = sorted.iter().map(|&l| gains[l]).sum();
    if total <= 0.0 {
        return 0;
    }
    let target = fraction * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (i, &l) in sorted.iter().enumerate() {
        acc += gains[l];
        if acc >= target {
            return i + 1;
        }
    }
    sorted.len()
}

fn sort_by_gain_desc(idx: &mut [usize], gains: &[f64]) {
    idx.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
}

/// Cluster of one UE among the APs listed in `candidates`, strongest first.
pub fn cluster_for(gains: &[f64], candidates: &[usize], fraction: f64) -> Vec<usize> {
    let mut sorted: Vec<usize> = candidates.to_vec();
    sort_by_gain_desc(&mut sorted, gains);
    let n = energy_prefix(gains, candidates, fraction);
    sorted.truncate(n);
    sorted
}

/// Build M_k, K_l and the strong sets.
///
/// `antennas[l]` is the number of usable antennas at AP l; APs with zero
/// (asleep, waking, or all antennas off) are excluded from every cluster.
/// The strong set of AP l holds the served UEs with chi/beta at or above the
/// threshold, trimmed (lowest ratio first) until its distinct pilot count is
/// at most `min(tau_p, m_l - 1)`.
pub fn build_clusters(
    beta: &ApUeTable,
    chi: &ApUeTable,
    pilots: &PilotAssignment,
    antennas: &[usize],
    params: &ClusterParams,
) -> ClusterMap {
    let (aps, ues) = (beta.num_aps(), beta.num_ues());
    assert_eq!(antennas.len(), aps);
    let available: Vec<usize> = (0..aps).filter(|&l| antennas[l] > 0).collect();

    let mut serving_aps = Vec::with_capacity(ues);
    let mut served_ues = vec![Vec::new(); aps];
    let mut column = vec![0.0; aps];
    for k in 0..ues {
        for (l, c) in column.iter_mut().enumerate() {
            *c = beta.get(l, k);
        }
        let m_k = cluster_for(&column, &available, params.energy_fraction);
        for &l in &m_k {
            served_ues[l].push(k);
        }
        serving_aps.push(m_k);
    }

    let mut strong = vec![false; aps * ues];
    let mut strong_set = Vec::with_capacity(aps);
    let mut tau_str = Vec::with_capacity(aps);
    for l in 0..aps {
        let mut cands: Vec<(usize, f64)> = served_ues[l]
            .iter()
            .map(|&k| (k, chi.get(l, k) / beta.get(l, k)))
            .filter(|&(_, ratio)| ratio >= params.strong_threshold)
            .collect();
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let cap = params.tau_p.min(antennas[l].saturating_sub(1));
        while distinct_pilots(&cands, pilots) > cap {
            cands.pop();
        }
        let mut set: Vec<usize> = cands.iter().map(|&(k, _)| k).collect();
        set.sort_unstable();
        for &k in &set {
            strong[l * ues + k] = true;
        }
        tau_str.push(distinct_pilots(&cands, pilots));
        strong_set.push(set);
    }

    ClusterMap {
        serving_aps,
        served_ues,
        strong_set,
        tau_str,
        strong,
        ues,
    }
}

fn distinct_pilots(set: &[(usize, f64)], pilots: &PilotAssignment) -> usize {
    let mut seen: Vec<usize> = set.iter().map(|&(k, _)| pilots.pilot_of(k)).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::make_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_beta(aps: usize, ues: usize, seed: u64) -> ApUeTable {
        let mut rng = make_rng(seed, "beta");
        let mut t = ApUeTable::zeros(aps, ues);
        for l in 0..aps {
            for k in 0..ues {
                t.set(l, k, 10f64.powf(-rng.random_range(9.0..13.0)));
            }
        }
        t
    }

    #[test]
    fn umi_nlos_at_100_m() {
        let m = UmiNlos {
            carrier_ghz: 5.0,
            ap_height_m: 10.0,
            ue_height_m: 1.5,
        };
        let pl = 35.3 * 2.0 + 22.4 + 21.3 * 5f64.log10();
        assert!((m.path_loss_db(100.0) - pl).abs() < 1e-12);
        // place the UE so that the 3D distance is exactly 100 m
        let d2 = (100.0f64.powi(2) - 8.5f64.powi(2)).sqrt() / 1000.0;
        let g = m.large_scale_gain(Point::new(0.0, 0.0), Point::new(d2, 0.0), 0.0);
        let expect = 10f64.powf(-pl / 10.0);
        assert!((g / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gain_monotone_and_shadow_additive() {
        let m = UmiNlos {
            carrier_ghz: 5.0,
            ap_height_m: 10.0,
            ue_height_m: 1.5,
        };
        let ap = Point::new(0.0, 0.0);
        let near = m.large_scale_gain(ap, Point::new(0.1, 0.0), 0.0);
        let far = m.large_scale_gain(ap, Point::new(0.2, 0.0), 0.0);
        assert!(far < near);
        let shadowed = m.large_scale_gain(ap, Point::new(0.1, 0.0), 10.0);
        assert!((near / shadowed - 10.0).abs() < 1e-9);
    }

    #[test]
    fn sub_metre_distance_is_clamped() {
        let m = UmiNlos {
            carrier_ghz: 5.0,
            ap_height_m: 1.5,
            ue_height_m: 1.5,
        };
        assert_eq!(m.path_loss_db(0.01), m.path_loss_db(1.0));
    }

    #[test]
    fn few_ues_get_orthogonal_pilots() {
        let beta = random_beta(4, 3, 1);
        let p = assign_pilots(&beta, 7);
        for k in 0..3 {
            assert_eq!(p.cocontaminators(k), &[k]);
        }
        assert_eq!(p.distinct_pilots(), 3);
    }

    #[test]
    fn eight_ues_on_seven_pilots_share_exactly_once() {
        let beta = random_beta(4, 8, 2);
        let p = assign_pilots(&beta, 7);
        let sizes: Vec<usize> = (0..7).map(|q| p.users_of_pilot(q).len()).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 2).count(), 1);
        assert_eq!(sizes.iter().filter(|&&s| s == 1).count(), 6);
        // greedy trace: UE 7 joins the pilot whose holder is weakest at UE 7's best AP
        let best = strongest_ap(&beta, 7);
        let expect = (0..7)
            .min_by(|&a, &b| beta.get(best, a).total_cmp(&beta.get(best, b)))
            .unwrap();
        assert_eq!(p.pilot_of(7), p.pilot_of(expect));
    }

    #[test]
    fn estimate_limits() {
        // single UE, huge pilot SNR -> chi ~ beta
        let beta = ApUeTable::from_rows(&[vec![1e-9]]);
        let p = PilotAssignment::from_indices(vec![0], 1);
        let chi = estimate_gains(&beta, &p, 0.1, 1e-20);
        assert!((chi.get(0, 0) / 1e-9 - 1.0).abs() < 1e-9);
        // two equal UEs on one pilot, no noise -> chi = beta / 2
        let beta = ApUeTable::from_rows(&[vec![2e-9, 2e-9]]);
        let p = PilotAssignment::from_indices(vec![0, 0], 1);
        let chi = estimate_gains(&beta, &p, 0.1, 0.0);
        assert!((chi.get(0, 0) - 1e-9).abs() < 1e-21);
    }

    #[test]
    fn ninety_percent_prefix() {
        let gains = [0.5, 0.4, 0.1];
        assert_eq!(energy_prefix(&gains, &[0, 1, 2], 0.9), 2);
        assert_eq!(energy_prefix(&gains, &[0, 1, 2], 1.0), 3);
        assert_eq!(cluster_for(&gains, &[2, 1, 0], 0.9), vec![0, 1]);
    }

    #[test]
    fn sleeping_aps_are_skipped() {
        let beta = random_beta(4, 5, 3);
        let pilots = assign_pilots(&beta, 7);
        let chi = estimate_gains(&beta, &pilots, 0.1, 1e-13);
        let params = ClusterParams {
            energy_fraction: 1.0,
            strong_threshold: 0.5,
            tau_p: 7,
        };
        let c = build_clusters(&beta, &chi, &pilots, &[8, 0, 8, 0], &params);
        assert!(c.served_ues[1].is_empty() && c.served_ues[3].is_empty());
        for m in &c.serving_aps {
            assert_eq!(m.len(), 2);
        }
        let none = build_clusters(&beta, &chi, &pilots, &[0; 4], &params);
        assert!(none.serving_aps.iter().all(Vec::is_empty));
    }

    proptest! {
        #[test]
        fn cluster_invariants(aps in 1usize..7, ues in 0usize..12, seed in 0u64..1000,
                              fraction in 0.05f64..=1.0, tau_p in 1usize..8) {
            let beta = random_beta(aps, ues, seed);
            let pilots = assign_pilots(&beta, tau_p);
            let chi = estimate_gains(&beta, &pilots, 0.1, 4e-13);
            let mut rng = make_rng(seed, "antennas");
            let antennas: Vec<usize> = (0..aps).map(|_| rng.random_range(0..=8)).collect();
            let params = ClusterParams { energy_fraction: fraction, strong_threshold: 0.5, tau_p };
            let c = build_clusters(&beta, &chi, &pilots, &antennas, &params);
            let available: Vec<usize> = (0..aps).filter(|&l| antennas[l] > 0).collect();

            for k in 0..ues {
                // pilot relation symmetric and reflexive
                prop_assert!(pilots.cocontaminators(k).contains(&k));
                for &t in pilots.cocontaminators(k) {
                    prop_assert!(pilots.cocontaminators(t).contains(&k));
                }
                for l in 0..aps {
                    let (b, x) = (beta.get(l, k), chi.get(l, k));
                    prop_assert!(x > 0.0 && x <= b);
                    // K_l / M_k duality by brute force
                    prop_assert_eq!(c.served_ues[l].contains(&k), c.serving_aps[k].contains(&l));
                }
                if available.is_empty() { prop_assert!(c.serving_aps[k].is_empty()); continue; }
                let total: f64 = available.iter().map(|&l| beta.get(l, k)).sum();
                let sum: f64 = c.serving_aps[k].iter().map(|&l| beta.get(l, k)).sum();
                prop_assert!(sum >= fraction * total * (1.0 - 1e-9));
                let short: f64 = c.serving_aps[k][..c.serving_aps[k].len() - 1].iter().map(|&l| beta.get(l, k)).sum();
                prop_assert!(short < fraction * total);
            }
            prop_assert!(pilots.distinct_pilots() <= tau_p);
            for l in 0..aps {
                prop_assert!(c.tau_str[l] <= tau_p);
                if antennas[l] > 0 { prop_assert!(c.tau_str[l] < antennas[l]); }
                for &k in &c.strong_set[l] {
                    prop_assert!(c.served_ues[l].contains(&k));
                    prop_assert!(c.is_strong(l, k));
                }
            }
        }
    }
}
