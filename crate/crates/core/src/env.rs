//! The control MDP: per-AP antenna and sleep-mode actions applied every
//! decision period, a millisecond-resolution traffic/service simulation in
//! between, and the rate-satisfaction reward.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::{
    build_clusters, choose_pilot, cluster_for, estimate_gains, ApUeTable, ClusterParams, PilotAssignment, Point,
    UmiNlos,
};
use crate::config::{ap_positions, make_rng, ScenarioConfig, SimRng};
use crate::phy::{allocate_power, compute_sinr, LinkParams};
use crate::power::{network_power, ApLoad, PowerBreakdown, SleepMode};
use crate::traffic::{advance_sessions, Category, DropLedger, TrafficModel, UeSession};

/// Joint choices per agent: 3 antenna deltas x 4 sleep modes.
pub const ACTIONS_PER_AGENT: usize = 12;

/// Local features before the neighbour block.
pub const OWN_FEATURES: usize = 9;
/// Features per neighbour: (m / M, s / 3).
pub const NEIGHBOR_FEATURES: usize = 2;
/// Global features before the per-AP block.
pub const GLOBAL_FEATURES: usize = 5;
/// Per-AP features in the global state: (m / M, s / 3, waking).
pub const GLOBAL_AP_FEATURES: usize = 3;

// Observation scales. Every feature is divided by its scale and clipped
// to [-1, 1].
const UE_COUNT_SCALE: f64 = 10.0;
const DEMAND_SCALE_BPS: f64 = 300e6;
const ACHIEVED_SCALE_BPS: f64 = 300e6;
/// Mean estimate SNR 10 log10(chi / sigma^2) is divided by this many dB.
const CHI_DB_SCALE: f64 = 60.0;

/// Per-agent action: antenna delta in {-1, 0, +1} and requested sleep mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApAction {
    pub antenna_delta: i8,
    pub sleep: SleepMode,
}

impl ApAction {
    pub const KEEP_ACTIVE: ApAction = ApAction {
        antenna_delta: 0,
        sleep: SleepMode::Active,
    };

    /// Index layout: `(delta + 1) * 4 + sleep`.
    pub fn from_index(i: usize) -> Self {
        assert!(i < ACTIONS_PER_AGENT, "action index {i} out of range");
        ApAction {
            antenna_delta: (i / 4) as i8 - 1,
            sleep: SleepMode::from_index(i % 4).unwrap(),
        }
    }

    pub fn index(self) -> usize {
        (self.antenna_delta.clamp(-1, 1) + 1) as usize * 4 + self.sleep.index()
    }
}

/// Controllable state of one AP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApControl {
    pub antennas: usize,
    /// Current or target sleep mode.
    pub mode: SleepMode,
    /// Seconds until the AP finishes leaving its previous, deeper mode.
    pub wake_timer_s: f64,
}

impl ApControl {
    pub fn is_transitioning(&self) -> bool {
        self.wake_timer_s > 0.0
    }

    pub fn operational(&self) -> bool {
        self.mode == SleepMode::Active && !self.is_transitioning()
    }

    pub fn usable_antennas(&self) -> usize {
        if self.operational() {
            self.antennas
        } else {
            0
        }
    }

    /// Apply one action; returns true when the antenna delta was clamped.
    pub fn apply(&mut self, action: ApAction, max_antennas: usize, latencies_s: &[f64; 4]) -> bool {
        let target = self.antennas as i64 + action.antenna_delta as i64;
        let clamped = target < 0 || target > max_antennas as i64;
        self.antennas = target.clamp(0, max_antennas as i64) as usize;
        if action.sleep < self.mode {
            self.wake_timer_s = latencies_s[self.mode.index()];
            self.mode = action.sleep;
        } else if action.sleep > self.mode {
            self.wake_timer_s = 0.0;
            self.mode = action.sleep;
        }
        clamped
    }
}

/// `xi(rho)`: linear penalty below the requirement, attenuated bonus above.
pub fn rs_score(rho: f64, phi: f64) -> f64 {
    if rho < 1.0 {
        rho - 1.0
    } else {
        phi * (1.0 - 1.0 / rho)
    }
}

/// Per-timestep reward `w_rs mean(xi) - w_pc P_net / unit`.
pub fn reward(mean_xi: f64, p_net_w: f64, w_rs: f64, w_pc: f64, power_unit_w: f64) -> f64 {
    w_rs * mean_xi - w_pc * p_net_w / power_unit_w
}

/// Raw local quantities an AP can measure; observations and the DAC-SM1
/// rule are both derived from this.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ApView {
    pub antennas: usize,
    pub mode: SleepMode,
    pub transitioning: bool,
    pub power_w: f64,
    /// UEs whose service request reached this AP.
    pub requesting_ues: usize,
    /// UEs actually in the AP's serving set right now.
    pub served_ues: usize,
    /// Sum of required rates x_max / D_max of the requesting UEs (bit/s).
    pub demand_bps: f64,
    /// Sum of current rates of the served UEs (bit/s).
    pub achieved_bps: f64,
    /// Mean chi of the requesting UEs (W-normalised linear gain), 0 if none.
    pub mean_chi: f64,
}

/// What happened during one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimestepRecord {
    pub p_net: f64,
    pub p_ap: f64,
    pub p_cloud: f64,
    pub ues: usize,
    pub mean_xi: f64,
    pub reward: f64,
    pub arrivals: usize,
    pub departures: usize,
}

/// Outcome of one decision period.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepOutcome {
    /// Sum of the per-timestep rewards.
    pub reward: f64,
    pub done: bool,
    pub mean_p_net: f64,
    pub departures: usize,
    /// Mean drop fraction of this period's departures (0 if none).
    pub period_drop: f64,
    pub clamped_actions: usize,
}

/// One row of the step trace, averaged over `trace_interval_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time_s: f64,
    pub duration_s: f64,
    pub p_net_w: f64,
    pub p_ap_w: f64,
    pub p_cloud_w: f64,
    pub ues: f64,
    /// Expected offered load kappa(t) A, Mbit/s.
    pub offered_mbps: f64,
    /// Realised arrivals times x_max over the interval, Mbit/s.
    pub arrived_mbps: f64,
    /// Running mean drop ratio over all departures so far.
    pub drop_ratio: f64,
    pub departures: u64,
    pub sm0: f64,
    pub sm1: f64,
    pub sm2: f64,
    pub sm3: f64,
    pub mean_antennas: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, Default)]
struct TraceAcc {
    steps: u64,
    start_s: f64,
    p_net: f64,
    p_ap: f64,
    p_cloud: f64,
    ues: f64,
    offered: f64,
    arrivals: u64,
    departures: u64,
    modes: [f64; 4],
    antennas: f64,
    reward: f64,
}

#[derive(Debug, Clone)]
struct ActiveUe {
    session: UeSession,
    gains: Vec<f64>,
    pilot: usize,
    /// 90 %-energy AP prefix over all APs regardless of their state.
    request_set: Vec<usize>,
}

/// Cached radio and power state, valid until the next event.
#[derive(Debug, Clone, Default)]
struct RadioState {
    rates: Vec<f64>,
    chi: Option<ApUeTable>,
    served_by: Vec<Vec<usize>>,
    power: Option<PowerBreakdown>,
}

/// Episode statistics accumulated across decision periods.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeStats {
    pub timesteps: u64,
    pub p_net_sum: f64,
    pub p_ap_sum: f64,
    pub p_cloud_sum: f64,
    pub reward_sum: f64,
    pub clamped_actions: u64,
    pub cloud_overload_steps: u64,
    pub mode_steps: [u64; 4],
    pub antenna_sum: f64,
}

impl EpisodeStats {
    pub fn mean_p_net(&self) -> f64 {
        if self.timesteps == 0 {
            0.0
        } else {
            self.p_net_sum / self.timesteps as f64
        }
    }
}

/// One simulated network.
#[derive(Debug, Clone)]
pub struct CellFreeEnv {
    cfg: ScenarioConfig,
    pathloss: UmiNlos,
    link: LinkParams,
    traffic: TrafficModel,
    ap_pos: Vec<Point>,
    neighbors: Vec<Vec<usize>>,
    shadow: Normal<f64>,
    power_norm_ap: f64,
    power_norm_net: f64,
    peak_rate: f64,

    aps: Vec<ApControl>,
    ues: Vec<ActiveUe>,
    rng: SimRng,
    step: u64,
    start_s: f64,
    horizon: u64,
    next_id: u64,
    dirty: bool,
    radio: RadioState,
    ledger: DropLedger,
    last: TimestepRecord,
    last_period: StepOutcome,
    stats: EpisodeStats,
    trace: Option<(Vec<TraceRow>, TraceAcc)>,
}

impl CellFreeEnv {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, crate::error::ConfigError> {
        cfg.validate()?;
        let traffic = TrafficModel::new(cfg)?;
        let ap_pos = ap_positions(cfg);
        let neighbors = nearest_neighbors(&ap_pos, cfg.sim.neighbors);
        let p = &cfg.power;
        let m = cfg.radio.max_antennas as f64;
        let power_norm_ap = m * p.ap_static_w
            + p.tx_slope * m * cfg.radio.per_antenna_power_w
            + p.ap_proc_idle_w
            + p.ap_proc_slope_w;
        let power_norm_net = cfg.geometry.num_aps as f64 * power_norm_ap
            + p.cloud_fixed_w
            + (p.cloud_proc_idle_w + p.cloud_proc_slope_w) / p.cooling_eff;
        let peak_rate = traffic.peak_total_rate();
        let mut env = Self {
            pathloss: UmiNlos::from_config(cfg),
            link: LinkParams::from_config(cfg),
            shadow: Normal::new(0.0, cfg.radio.shadow_std_db).expect("validated shadow std"),
            traffic,
            ap_pos,
            neighbors,
            power_norm_ap,
            power_norm_net,
            peak_rate,
            aps: Vec::new(),
            ues: Vec::new(),
            rng: make_rng(cfg.rng_seed, "traffic"),
            step: 0,
            start_s: 0.0,
            horizon: cfg.sim.episode_timesteps(),
            next_id: 0,
            dirty: true,
            radio: RadioState::default(),
            ledger: DropLedger::default(),
            last: TimestepRecord::default(),
            last_period: StepOutcome::default(),
            stats: EpisodeStats::default(),
            trace: None,
            cfg: cfg.clone(),
        };
        env.reset(cfg.rng_seed, 0.0, env.horizon, false);
        Ok(env)
    }

    /// Start a new episode at `start_s` into the traffic profile lasting
    /// `horizon` timesteps. All APs start fully on.
    pub fn reset(&mut self, seed: u64, start_s: f64, horizon: u64, record_trace: bool) {
        self.aps = vec![
            ApControl {
                antennas: self.cfg.radio.max_antennas,
                mode: SleepMode::Active,
                wake_timer_s: 0.0,
            };
            self.cfg.geometry.num_aps
        ];
        self.ues.clear();
        self.rng = make_rng(seed, "traffic");
        self.step = 0;
        self.start_s = start_s;
        self.horizon = horizon;
        self.next_id = 0;
        self.dirty = true;
        self.radio = RadioState::default();
        self.ledger = DropLedger::default();
        self.last = TimestepRecord::default();
        self.last_period = StepOutcome::default();
        self.stats = EpisodeStats::default();
        self.trace = record_trace.then(|| {
            (
                Vec::new(),
                TraceAcc {
                    start_s: 0.0,
                    ..TraceAcc::default()
                },
            )
        });
        self.refresh_radio();
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn num_agents(&self) -> usize {
        self.aps.len()
    }

    pub fn obs_dim(&self) -> usize {
        OWN_FEATURES + NEIGHBOR_FEATURES * self.cfg.sim.neighbors
    }

    pub fn state_dim(&self) -> usize {
        GLOBAL_FEATURES + GLOBAL_AP_FEATURES * self.aps.len()
    }

    pub fn aps(&self) -> &[ApControl] {
        &self.aps
    }

    pub fn num_ues(&self) -> usize {
        self.ues.len()
    }

    pub fn ue_sessions(&self) -> impl Iterator<Item = &UeSession> {
        self.ues.iter().map(|u| &u.session)
    }

    pub fn current_rates(&self) -> &[f64] {
        &self.radio.rates
    }

    pub fn timestep(&self) -> u64 {
        self.step
    }

    /// Seconds since the start of the episode.
    pub fn elapsed_s(&self) -> f64 {
        self.step as f64 * self.cfg.sim.timestep_s
    }

    /// Position within the traffic profile, in seconds.
    pub fn profile_time_s(&self) -> f64 {
        self.start_s + self.elapsed_s()
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.horizon
    }

    pub fn ledger(&self) -> &DropLedger {
        &self.ledger
    }

    pub fn stats(&self) -> &EpisodeStats {
        &self.stats
    }

    pub fn last_timestep(&self) -> &TimestepRecord {
        &self.last
    }

    pub fn power(&self) -> &PowerBreakdown {
        self.radio.power.as_ref().expect("radio state refreshed on reset")
    }

    pub fn ap_positions(&self) -> &[Point] {
        &self.ap_pos
    }

    pub fn neighbors(&self, ap: usize) -> &[usize] {
        &self.neighbors[ap]
    }

    /// Force the AP control state; used by tests and scripted scenarios.
    pub fn set_ap(&mut self, ap: usize, control: ApControl) {
        self.aps[ap] = control;
        self.dirty = true;
        self.refresh_radio();
    }

    /// Insert a UE at a given position with explicit shadowing (dB per AP).
    pub fn insert_ue(&mut self, position: Point, category: Category, shadow_db: &[f64]) {
        self.admit(position, category, shadow_db);
        self.refresh_radio();
    }

    /// Remove every trace row recorded so far and return them, flushing any
    /// partial interval.
    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        let (dt, demand, drop, now) = (
            self.cfg.sim.timestep_s,
            self.cfg.traffic.demand_mb,
            self.ledger.mean_drop(),
            self.elapsed_s(),
        );
        let Some((rows, acc)) = self.trace.as_mut() else {
            return Vec::new();
        };
        if acc.steps > 0 {
            rows.push(finish_row(acc, dt, demand, drop));
            *acc = TraceAcc {
                start_s: now,
                ..TraceAcc::default()
            };
        }
        std::mem::take(rows)
    }

    /// Local measurements of one AP.
    pub fn ap_view(&self, ap: usize) -> ApView {
        let c = &self.aps[ap];
        let chi = self.radio.chi.as_ref();
        let mut v = ApView {
            antennas: c.antennas,
            mode: c.mode,
            transitioning: c.is_transitioning(),
            power_w: self.power().per_ap[ap],
            ..ApView::default()
        };
        let mut chi_sum = 0.0;
        for (k, ue) in self.ues.iter().enumerate() {
            if ue.request_set.contains(&ap) {
                v.requesting_ues += 1;
                v.demand_bps += ue.session.required_rate_bps();
                if let Some(chi) = chi {
                    chi_sum += chi.get(ap, k);
                }
            }
        }
        for &k in &self.radio.served_by[ap] {
            v.served_ues += 1;
            v.achieved_bps += self.radio.rates[k];
        }
        if v.requesting_ues > 0 {
            v.mean_chi = chi_sum / v.requesting_ues as f64;
        }
        v
    }

    /// Local observation of `ap`, written into `out` (length `obs_dim`).
    ///
    /// Layout and scales: own power / max AP power, m / M, s / 3,
    /// transitioning flag, requesting UEs / 10, served UEs / 10, demand
    /// / 300 Mbit/s, achieved / 300 Mbit/s, mean estimate SNR dB / 60, then
    /// (m / M, s / 3) of the nearest neighbours, zero-padded.
    pub fn observe(&self, ap: usize, out: &mut [f64]) {
        assert_eq!(out.len(), self.obs_dim());
        let v = self.ap_view(ap);
        let m_max = self.cfg.radio.max_antennas as f64;
        let chi_db = if v.mean_chi > 0.0 {
            10.0 * (v.mean_chi / self.link.noise_variance).log10()
        } else {
            0.0
        };
        out[0] = v.power_w / self.power_norm_ap;
        out[1] = v.antennas as f64 / m_max;
        out[2] = v.mode.index() as f64 / 3.0;
        out[3] = if v.transitioning { 1.0 } else { 0.0 };
        out[4] = v.requesting_ues as f64 / UE_COUNT_SCALE;
        out[5] = v.served_ues as f64 / UE_COUNT_SCALE;
        out[6] = v.demand_bps / DEMAND_SCALE_BPS;
        out[7] = v.achieved_bps / ACHIEVED_SCALE_BPS;
        out[8] = chi_db / CHI_DB_SCALE;
        let rest = &mut out[OWN_FEATURES..];
        rest.iter_mut().for_each(|x| *x = 0.0);
        for (i, &n) in self.neighbors[ap].iter().enumerate() {
            rest[2 * i] = self.aps[n].antennas as f64 / m_max;
            rest[2 * i + 1] = self.aps[n].mode.index() as f64 / 3.0;
        }
        for x in out.iter_mut() {
            *x = x.clamp(-1.0, 1.0);
        }
    }

    /// Observations of every agent, concatenated.
    pub fn observe_all(&self, out: &mut [f64]) {
        let d = self.obs_dim();
        for (l, chunk) in out.chunks_mut(d).enumerate() {
            self.observe(l, chunk);
        }
    }

    /// Global state for the critic: P_net / max network power, arrival rate
    /// / peak rate, last period's drop ratio, mean elapsed-delay ratio of
    /// current UEs, K / (10 L), then (m / M, s / 3, transitioning) per AP.
    pub fn global_state(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.state_dim());
        let m_max = self.cfg.radio.max_antennas as f64;
        out[0] = self.power().total / self.power_norm_net;
        out[1] = if self.peak_rate > 0.0 {
            self.traffic.total_rate(self.profile_time_s()) / self.peak_rate
        } else {
            0.0
        };
        out[2] = self.last_period.period_drop;
        out[3] = if self.ues.is_empty() {
            0.0
        } else {
            self.ues.iter().map(|u| u.session.delay_ratio()).sum::<f64>() / self.ues.len() as f64
        };
        out[4] = self.ues.len() as f64 / (UE_COUNT_SCALE * self.aps.len() as f64);
        for (l, a) in self.aps.iter().enumerate() {
            let o = GLOBAL_FEATURES + GLOBAL_AP_FEATURES * l;
            out[o] = a.antennas as f64 / m_max;
            out[o + 1] = a.mode.index() as f64 / 3.0;
            out[o + 2] = if a.is_transitioning() { 1.0 } else { 0.0 };
        }
        for x in out.iter_mut() {
            *x = x.clamp(-1.0, 1.0);
        }
    }

    /// Apply one action per AP, then simulate one decision period.
    pub fn step(&mut self, actions: &[ApAction]) -> StepOutcome {
        assert_eq!(actions.len(), self.aps.len());
        let mut clamped = 0;
        for (ap, &a) in self.aps.iter_mut().zip(actions) {
            let before = *ap;
            if ap.apply(a, self.cfg.radio.max_antennas, &self.cfg.power.sleep_latencies_s) {
                clamped += 1;
            }
            if *ap != before {
                self.dirty = true;
            }
        }
        self.stats.clamped_actions += clamped as u64;
        self.refresh_radio();

        let mut out = StepOutcome {
            clamped_actions: clamped,
            ..StepOutcome::default()
        };
        let mut drop_sum = 0.0;
        let mut steps = 0;
        for _ in 0..self.cfg.sim.decision_period {
            if self.is_done() {
                break;
            }
            let before = self.ledger.len();
            let rec = self.advance_timestep();
            for r in &self.ledger.records[before..] {
                drop_sum += r.drop_fraction;
            }
            out.reward += rec.reward;
            out.mean_p_net += rec.p_net;
            out.departures += rec.departures;
            steps += 1;
        }
        if steps > 0 {
            out.mean_p_net /= steps as f64;
        }
        if out.departures > 0 {
            out.period_drop = drop_sum / out.departures as f64;
        }
        out.done = self.is_done();
        self.last_period = out.clone();
        out
    }

    /// One timestep: arrivals, service at the current rates, departures,
    /// reward, wake-up progress.
    fn advance_timestep(&mut self) -> TimestepRecord {
        let dt = self.cfg.sim.timestep_s;
        let t = self.profile_time_s();

        let rates_c: [f64; 3] = Category::ALL.map(|c| self.traffic.arrival_rate(c, t));
        let total_rate: f64 = rates_c.iter().sum();
        let arrivals = crate::traffic::sample_count(total_rate, &mut self.rng);
        for _ in 0..arrivals {
            let u: f64 = self.rng.random::<f64>() * total_rate;
            let category = if u < rates_c[0] {
                Category::DelayStringent
            } else if u < rates_c[0] + rates_c[1] {
                Category::DelaySensitive
            } else {
                Category::DelayTolerant
            };
            let side = self.traffic.side_km;
            let pos = Point::new(self.rng.random::<f64>() * side, self.rng.random::<f64>() * side);
            let shadow: Vec<f64> = (0..self.aps.len()).map(|_| self.shadow.sample(&mut self.rng)).collect();
            self.admit(pos, category, &shadow);
        }
        self.refresh_radio();

        let (p_total, p_ap, p_cloud, overload) = {
            let p = self.power();
            (p.total, p.ap_total(), p.cloud, p.cloud_overload)
        };
        let k = self.ues.len();
        let mut sessions: Vec<UeSession> = self.ues.iter().map(|u| u.session.clone()).collect();
        let departed = advance_sessions(&mut sessions, &self.radio.rates, dt, self.step, &mut self.ledger);
        let phi = self.cfg.rl.reward_phi;
        let mut xi_sum: f64 = departed.iter().map(|d| rs_score(d.rho, phi)).sum();
        xi_sum += sessions
            .iter()
            .map(|s| rs_score(s.rate_ratio().unwrap_or(0.0), phi))
            .sum::<f64>();
        let mean_xi = if k == 0 { 0.0 } else { xi_sum / k as f64 };
        if departed.is_empty() {
            for (ue, s) in self.ues.iter_mut().zip(sessions) {
                ue.session = s;
            }
        } else {
            let mut it = sessions.into_iter().peekable();
            let mut kept = Vec::with_capacity(self.ues.len() - departed.len());
            for mut ue in self.ues.drain(..) {
                if it.peek().is_some_and(|s| s.id == ue.session.id) {
                    ue.session = it.next().unwrap();
                    kept.push(ue);
                }
            }
            self.ues = kept;
            self.dirty = true;
        }

        let rl = &self.cfg.rl;
        let r = reward(mean_xi, p_total, rl.reward_w_rs, rl.reward_w_pc, rl.reward_power_unit_w);
        let rec = TimestepRecord {
            p_net: p_total,
            p_ap,
            p_cloud,
            ues: k,
            mean_xi,
            reward: r,
            arrivals,
            departures: departed.len(),
        };

        self.stats.timesteps += 1;
        self.stats.p_net_sum += rec.p_net;
        self.stats.p_ap_sum += rec.p_ap;
        self.stats.p_cloud_sum += rec.p_cloud;
        self.stats.reward_sum += r;
        if overload {
            self.stats.cloud_overload_steps += 1;
        }
        let mut modes = [0u64; 4];
        let mut antennas = 0usize;
        for a in &self.aps {
            modes[a.mode.index()] += 1;
            if a.mode == SleepMode::Active {
                antennas += a.antennas;
            }
        }
        for (s, m) in self.stats.mode_steps.iter_mut().zip(modes) {
            *s += m;
        }
        self.stats.antenna_sum += antennas as f64 / self.aps.len() as f64;

        if self.trace.is_some() {
            let offered = self.traffic.profile.total_density(self.traffic.hour_of_day(t)) * self.traffic.area_km2;
            let interval = (self.cfg.sim.trace_interval_s / dt).round().max(1.0) as u64;
            let drop_now = self.ledger.mean_drop();
            let (rows, acc) = self.trace.as_mut().unwrap();
            acc.steps += 1;
            acc.p_net += rec.p_net;
            acc.p_ap += rec.p_ap;
            acc.p_cloud += rec.p_cloud;
            acc.ues += k as f64;
            acc.offered += offered;
            acc.arrivals += arrivals as u64;
            acc.departures += rec.departures as u64;
            for (s, m) in acc.modes.iter_mut().zip(modes) {
                *s += m as f64;
            }
            acc.antennas += antennas as f64 / self.aps.len() as f64;
            acc.reward += r;
            if acc.steps == interval {
                let demand = self.cfg.traffic.demand_mb;
                rows.push(finish_row(acc, dt, demand, drop_now));
                *acc = TraceAcc {
                    start_s: (self.step + 1) as f64 * dt,
                    ..TraceAcc::default()
                };
            }
        }

        for a in &mut self.aps {
            if a.wake_timer_s > 0.0 {
                a.wake_timer_s -= dt;
                if a.wake_timer_s <= dt * 1e-9 {
                    a.wake_timer_s = 0.0;
                    self.dirty = true;
                }
            }
        }
        self.step += 1;
        self.last = rec;
        rec
    }

    fn admit(&mut self, position: Point, category: Category, shadow_db: &[f64]) {
        let gains: Vec<f64> = self
            .ap_pos
            .iter()
            .zip(shadow_db)
            .map(|(&ap, &s)| self.pathloss.large_scale_gain(ap, position, s))
            .collect();
        let strongest = (0..gains.len())
            .reduce(|b, l| if gains[l] > gains[b] { l } else { b })
            .unwrap_or(0);
        let tau_p = self.cfg.radio.pilot_length;
        let mut load = vec![0.0; tau_p];
        let mut users = vec![0usize; tau_p];
        for ue in &self.ues {
            load[ue.pilot] += ue.gains[strongest];
            users[ue.pilot] += 1;
        }
        let pilot = choose_pilot(&load, &users);
        let all: Vec<usize> = (0..gains.len()).collect();
        let request_set = cluster_for(&gains, &all, self.cfg.radio.cluster_energy_fraction);
        let budget = self.traffic.delay_budgets_s[category.index()];
        let session = UeSession::new(self.next_id, position, category, self.traffic.demand_mb, budget, self.step);
        self.next_id += 1;
        self.ues.push(ActiveUe {
            session,
            gains,
            pilot,
            request_set,
        });
        self.dirty = true;
    }

    /// Recompute estimates, clusters, rates and power if anything changed.
    fn refresh_radio(&mut self) {
        if !self.dirty {
            return;
        }
        self.dirty = false;
        let aps = self.aps.len();
        let k = self.ues.len();
        let antennas: Vec<usize> = self.aps.iter().map(|a| a.usable_antennas()).collect();
        let mut served_by = vec![Vec::new(); aps];
        let mut rates = vec![0.0; k];
        let mut tx = vec![0.0; aps];
        let mut chi_out = None;
        let mut served_ues = 0;
        if k > 0 {
            let beta = ApUeTable::from_columns(aps, self.ues.iter().map(|u| u.gains.as_slice()));
            let pilots = PilotAssignment::from_indices(self.ues.iter().map(|u| u.pilot).collect(), self.cfg.radio.pilot_length);
            let chi = estimate_gains(&beta, &pilots, self.cfg.radio.pilot_power_w, self.link.noise_variance);
            let params = ClusterParams {
                energy_fraction: self.cfg.radio.cluster_energy_fraction,
                strong_threshold: self.cfg.radio.strong_threshold,
                tau_p: self.cfg.radio.pilot_length,
            };
            let clusters = build_clusters(&beta, &chi, &pilots, &antennas, &params);
            let alloc = allocate_power(&clusters, &chi, &antennas, self.cfg.radio.per_antenna_power_w);
            let report = compute_sinr(&clusters, &chi, &beta, &alloc, &antennas, &pilots, &self.link)
                .expect("strong sets leave every serving AP a spare antenna");
            rates = report.rate;
            for (l, t) in tx.iter_mut().enumerate() {
                *t = alloc.ap_total(l);
            }
            served_ues = clusters.serving_aps.iter().filter(|m| !m.is_empty()).count();
            served_by = clusters.served_ues;
            chi_out = Some(chi);
        }
        let loads: Vec<ApLoad> = self
            .aps
            .iter()
            .enumerate()
            .map(|(l, a)| ApLoad {
                antennas: a.antennas,
                mode: a.mode,
                waking: a.mode == SleepMode::Active && a.is_transitioning(),
                tx_power_w: tx[l],
                served_ues: served_by[l].len(),
            })
            .collect();
        let power = network_power(&loads, served_ues, &self.cfg.power, self.cfg.radio.max_antennas)
            .expect("power inputs are non-negative by construction");
        self.radio = RadioState {
            rates,
            chi: chi_out,
            served_by,
            power: Some(power),
        };
    }
}

fn finish_row(acc: &TraceAcc, dt: f64, demand_mb: f64, drop_ratio: f64) -> TraceRow {
    let n = acc.steps as f64;
    let duration = n * dt;
    TraceRow {
        time_s: acc.start_s,
        duration_s: duration,
        p_net_w: acc.p_net / n,
        p_ap_w: acc.p_ap / n,
        p_cloud_w: acc.p_cloud / n,
        ues: acc.ues / n,
        offered_mbps: acc.offered / n,
        arrived_mbps: acc.arrivals as f64 * demand_mb / duration,
        drop_ratio,
        departures: acc.departures,
        sm0: acc.modes[0] / n,
        sm1: acc.modes[1] / n,
        sm2: acc.modes[2] / n,
        sm3: acc.modes[3] / n,
        mean_antennas: acc.antennas / n,
        reward: acc.reward,
    }
}

/// The `g` nearest other APs of every AP (ties broken by index).
pub fn nearest_neighbors(positions: &[Point], g: usize) -> Vec<Vec<usize>> {
    (0..positions.len())
        .map(|l| {
            let mut others: Vec<usize> = (0..positions.len()).filter(|&j| j != l).collect();
            others.sort_by(|&a, &b| {
                positions[l]
                    .dist(&positions[a])
                    .total_cmp(&positions[l].dist(&positions[b]))
                    .then(a.cmp(&b))
            });
            others.truncate(g);
            others
        })
        .collect()
}
