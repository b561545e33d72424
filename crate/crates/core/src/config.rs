//! Scenario description: geometry, radio, power, traffic and learning
//! parameters, plus seeding.
//!
//! Every section of the TOML file is optional; missing keys take the
//! defaults defined by the `Default` impls below. Unknown keys are rejected
//! so that typos surface as parse errors instead of silently using defaults.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::Point;
use crate::error::ConfigError;

/// Environment variable that, when set, replaces `rng_seed` after loading.
pub const SEED_ENV_VAR: &str = "CELLFREE_SEED";

/// Random stream used by every stochastic component of the crate.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub rng_seed: u64,
    pub geometry: Geometry,
    pub radio: RadioParams,
    pub sim: SimParams,
    pub power: PowerParams,
    pub traffic: TrafficParams,
    pub rl: RlParams,
    pub dqn: DqnParams,
    pub dac: DacParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            rng_seed: 7,
            geometry: Geometry::default(),
            radio: RadioParams::default(),
            sim: SimParams::default(),
            power: PowerParams::default(),
            traffic: TrafficParams::default(),
            rl: RlParams::default(),
            dqn: DqnParams::default(),
            dac: DacParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    /// Side of the square service area in km.
    pub area_side_km: f64,
    pub num_aps: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            area_side_km: 1.0,
            num_aps: 25,
            grid_rows: 5,
            grid_cols: 5,
            ap_height_m: 10.0,
            ue_height_m: 1.5,
        }
    }
}

impl Geometry {
    pub fn area_km2(&self) -> f64 {
        self.area_side_km * self.area_side_km
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub max_antennas: usize,
    /// Average transmit power per active antenna (W).
    pub per_antenna_power_w: f64,
    pub bandwidth_hz: f64,
    pub carrier_freq_hz: f64,
    /// Coherence block length in symbols.
    pub coherence_block: usize,
    /// Pilot length in symbols.
    pub pilot_length: usize,
    /// Noise power in W. When absent it is derived from thermal noise,
    /// bandwidth and `noise_figure_db`.
    pub noise_variance_w: Option<f64>,
    pub noise_figure_db: f64,
    pub pilot_power_w: f64,
    pub shadow_std_db: f64,
    pub cluster_energy_fraction: f64,
    /// Minimum chi/beta for a served UE to count as strong at an AP.
    pub strong_threshold: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            max_antennas: 8,
            per_antenna_power_w: 0.25,
            bandwidth_hz: 20e6,
            carrier_freq_hz: 5e9,
            coherence_block: 200,
            pilot_length: 7,
            noise_variance_w: None,
            noise_figure_db: 7.0,
            pilot_power_w: 0.1,
            shadow_std_db: 7.82,
            cluster_energy_fraction: 0.9,
            strong_threshold: 0.5,
        }
    }
}

impl RadioParams {
    /// sigma^2 in watts: explicit value, or -174 dBm/Hz + 10 log10(B) + NF.
    pub fn noise_variance(&self) -> f64 {
        self.noise_variance_w.unwrap_or_else(|| {
            let dbm = -174.0 + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db;
            10f64.powf((dbm - 30.0) / 10.0)
        })
    }

    /// Fraction of the coherence block carrying downlink data.
    pub fn prelog(&self) -> f64 {
        (self.coherence_block - self.pilot_length) as f64 / self.coherence_block as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub timestep_s: f64,
    /// Timesteps between two agent decisions.
    pub decision_period: usize,
    pub episode_duration_s: f64,
    /// Target bound on the average drop ratio (reported, not enforced).
    pub drop_threshold: f64,
    /// Number of neighbouring APs whose (m, s) enter each observation.
    pub neighbors: usize,
    /// Aggregation window of the step trace.
    pub trace_interval_s: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            timestep_s: 1e-3,
            decision_period: 20,
            episode_duration_s: 7200.0,
            drop_threshold: 1e-3,
            neighbors: 4,
            trace_interval_s: 10.0,
        }
    }
}

impl SimParams {
    pub fn decision_duration_s(&self) -> f64 {
        self.timestep_s * self.decision_period as f64
    }

    pub fn episode_timesteps(&self) -> u64 {
        (self.episode_duration_s / self.timestep_s).round() as u64
    }
}

/// Power model coefficients. The numeric defaults are artifact choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerParams {
    /// Static power per active antenna (W).
    pub ap_static_w: f64,
    /// Slope applied to radiated power.
    pub tx_slope: f64,
    pub ap_proc_idle_w: f64,
    pub ap_proc_slope_w: f64,
    pub ap_gops_max: f64,
    /// AP processing load with nothing active (GOPS); also the sleep floor.
    pub ap_gops_idle: f64,
    pub ap_gops_per_antenna: f64,
    /// UEs per AP at which a fully equipped AP reaches `ap_gops_max`.
    pub ap_full_load_ues: usize,
    pub cloud_fixed_w: f64,
    pub cooling_eff: f64,
    pub cloud_proc_idle_w: f64,
    pub cloud_proc_slope_w: f64,
    pub cloud_gops_max: f64,
    pub cloud_gops_per_ue: f64,
    /// Fraction of the band in use; scales the load-dependent GOPS terms.
    pub bandwidth_frac: f64,
    pub sleep_discounts: [f64; 4],
    pub sleep_latencies_s: [f64; 4],
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            ap_static_w: 0.2,
            tx_slope: 4.0,
            ap_proc_idle_w: 1.0,
            ap_proc_slope_w: 10.0,
            ap_gops_max: 200.0,
            ap_gops_idle: 20.0,
            ap_gops_per_antenna: 10.0,
            ap_full_load_ues: 10,
            cloud_fixed_w: 20.0,
            cooling_eff: 0.9,
            cloud_proc_idle_w: 20.0,
            cloud_proc_slope_w: 100.0,
            cloud_gops_max: 2000.0,
            cloud_gops_per_ue: 20.0,
            bandwidth_frac: 1.0,
            sleep_discounts: [1.0, 0.675, 0.55, 0.23],
            sleep_latencies_s: [0.0, 37e-6, 500e-6, 5000e-6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficParams {
    /// Flow size x_max in megabits.
    pub demand_mb: f64,
    /// Delay budgets of the stringent, sensitive and tolerant classes.
    pub delay_budgets_s: [f64; 3],
    pub category_mix: [f64; 3],
    /// Simulated seconds spanned by one 24 h profile cycle.
    pub profile_period_s: f64,
    /// Optional CSV profile; overrides `synthetic` when set.
    pub profile_csv: Option<String>,
    pub synthetic: SyntheticProfile,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self {
            demand_mb: 1.5,
            delay_budgets_s: [0.05, 0.10, 0.15],
            category_mix: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            profile_period_s: 7200.0,
            profile_csv: None,
            synthetic: SyntheticProfile::default(),
        }
    }
}

/// Shape of the synthetic diurnal density curve (Mbit/s/km^2, all classes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticProfile {
    pub peak_density: f64,
    pub trough_density: f64,
    pub peak_hour: f64,
    pub trough_hour: f64,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        Self {
            peak_density: 600.0,
            trough_density: 75.0,
            peak_hour: 14.0,
            trough_hour: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlParams {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub ppo_epochs: usize,
    pub minibatches: usize,
    pub huber_delta: f64,
    pub reward_w_rs: f64,
    pub reward_w_pc: f64,
    pub reward_phi: f64,
    /// P_net is divided by this before weighting (1000 = kilowatts).
    pub reward_power_unit_w: f64,
    /// Multiplier applied to decision rewards before advantage and return
    /// estimation. Reported curves are unscaled.
    pub reward_scale: f64,
    /// Training episodes; each is one rollout started at a random phase of
    /// the daily profile.
    pub episodes: usize,
    /// Decision steps per training episode.
    pub rollout_length: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// One actor for all APs (true) or one actor per AP.
    pub share_actor: bool,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    /// Write an intermediate checkpoint every this many episodes (0 = off).
    pub checkpoint_every: usize,
}

impl Default for RlParams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            entropy_coef: 0.01,
            actor_lr: 5e-4,
            critic_lr: 5e-4,
            ppo_epochs: 10,
            minibatches: 32,
            huber_delta: 10.0,
            reward_w_rs: 60.0,
            reward_w_pc: 0.4,
            reward_phi: 5e-3,
            reward_power_unit_w: 1000.0,
            reward_scale: 1.0,
            episodes: 200,
            rollout_length: 512,
            actor_hidden: vec![128, 128],
            critic_hidden: vec![256, 256],
            share_actor: true,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnParams {
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Gradient updates between target-network copies.
    pub target_sync: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Decision steps over which epsilon decays linearly.
    pub eps_decay_steps: usize,
    pub lr: f64,
    pub gamma: f64,
    pub hidden: Vec<usize>,
    /// Transitions collected before the first update.
    pub learning_starts: usize,
    pub huber_delta: f64,
}

impl Default for DqnParams {
    fn default() -> Self {
        Self {
            replay_capacity: 100_000,
            batch_size: 128,
            target_sync: 1000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 50_000,
            lr: 5e-4,
            gamma: 0.99,
            hidden: vec![128, 128],
            learning_starts: 1000,
            huber_delta: 10.0,
        }
    }
}

/// Dual thresholds of the DAC-SM1 baseline on the achieved/demand rate
/// ratio of an AP's connected UEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DacParams {
    /// Above this ratio one antenna is switched off.
    pub upper: f64,
    /// Below this ratio one antenna is switched on.
    pub lower: f64,
}

impl Default for DacParams {
    fn default() -> Self {
        Self { upper: 55.0, lower: 45.0 }
    }
}

/// Parse a scenario from TOML text and validate it.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|span| line_col(text, span.start))
            .unwrap_or((0, 0));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Read, parse and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

impl ScenarioConfig {
    /// Replace `rng_seed` with `CELLFREE_SEED` when that variable parses.
    pub fn apply_env_overrides(&mut self) -> Result<(), ConfigError> {
        if let Ok(raw) = std::env::var(SEED_ENV_VAR) {
            self.rng_seed = raw
                .trim()
                .parse()
                .map_err(|_| ConfigError::invalid("rng_seed", format!("{SEED_ENV_VAR}={raw:?} is not a u64")))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Canonical JSON echo written next to every artifact.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes to JSON")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        use ConfigError as E;
        let g = &self.geometry;
        let r = &self.radio;
        let s = &self.sim;
        let p = &self.power;
        let t = &self.traffic;
        let rl = &self.rl;
        let d = &self.dqn;

        positive("geometry.area_side_km", g.area_side_km)?;
        if g.num_aps == 0 {
            return Err(E::invalid("geometry.num_aps", "must be at least 1"));
        }
        if g.grid_rows * g.grid_cols != g.num_aps {
            return Err(E::invalid(
                "geometry.grid_rows",
                format!(
                    "grid_rows x grid_cols = L violated ({} x {} != {})",
                    g.grid_rows, g.grid_cols, g.num_aps
                ),
            ));
        }
        positive("geometry.ap_height_m", g.ap_height_m)?;
        positive("geometry.ue_height_m", g.ue_height_m)?;

        if r.max_antennas == 0 {
            return Err(E::invalid("radio.max_antennas", "must be at least 1"));
        }
        positive("radio.per_antenna_power_w", r.per_antenna_power_w)?;
        positive("radio.bandwidth_hz", r.bandwidth_hz)?;
        positive("radio.carrier_freq_hz", r.carrier_freq_hz)?;
        if r.pilot_length == 0 {
            return Err(E::invalid("radio.pilot_length", "tau_p >= 1 violated"));
        }
        if r.pilot_length >= r.coherence_block {
            return Err(E::invalid(
                "radio.pilot_length",
                format!(
                    "tau_p < tau_c violated ({} >= {})",
                    r.pilot_length, r.coherence_block
                ),
            ));
        }
        if let Some(n) = r.noise_variance_w {
            positive("radio.noise_variance_w", n)?;
        }
        positive("radio.pilot_power_w", r.pilot_power_w)?;
        non_negative("radio.shadow_std_db", r.shadow_std_db)?;
        let f = r.cluster_energy_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(E::invalid(
                "radio.cluster_energy_fraction",
                format!("must lie in (0, 1], got {f}"),
            ));
        }
        if !(0.0..=1.0).contains(&r.strong_threshold) {
            return Err(E::invalid("radio.strong_threshold", "must lie in [0, 1]"));
        }

        positive("sim.timestep_s", s.timestep_s)?;
        if s.decision_period == 0 {
            return Err(E::invalid("sim.decision_period", "must be at least 1"));
        }
        positive("sim.episode_duration_s", s.episode_duration_s)?;
        non_negative("sim.drop_threshold", s.drop_threshold)?;
        positive("sim.trace_interval_s", s.trace_interval_s)?;

        for (name, v) in [
            ("power.ap_static_w", p.ap_static_w),
            ("power.tx_slope", p.tx_slope),
            ("power.ap_proc_idle_w", p.ap_proc_idle_w),
            ("power.ap_proc_slope_w", p.ap_proc_slope_w),
            ("power.ap_gops_idle", p.ap_gops_idle),
            ("power.ap_gops_per_antenna", p.ap_gops_per_antenna),
            ("power.cloud_fixed_w", p.cloud_fixed_w),
            ("power.cloud_proc_idle_w", p.cloud_proc_idle_w),
            ("power.cloud_proc_slope_w", p.cloud_proc_slope_w),
            ("power.cloud_gops_per_ue", p.cloud_gops_per_ue),
            ("power.bandwidth_frac", p.bandwidth_frac),
        ] {
            non_negative(name, v)?;
        }
        positive("power.ap_gops_max", p.ap_gops_max)?;
        positive("power.cloud_gops_max", p.cloud_gops_max)?;
        positive("power.cooling_eff", p.cooling_eff)?;
        if p.ap_full_load_ues == 0 {
            return Err(E::invalid("power.ap_full_load_ues", "must be at least 1"));
        }
        if p.ap_gops_per_ue_antenna(r.max_antennas) < 0.0 {
            return Err(E::invalid(
                "power.ap_gops_max",
                "idle and per-antenna load already exceed the capacity at full load",
            ));
        }
        if p.sleep_discounts.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
            return Err(E::invalid("power.sleep_discounts", "factors must lie in [0, 1]"));
        }
        if p.sleep_latencies_s.iter().any(|&l| !(l >= 0.0)) {
            return Err(E::invalid("power.sleep_latencies_s", "latencies must be >= 0"));
        }

        positive("traffic.demand_mb", t.demand_mb)?;
        if t.delay_budgets_s.iter().any(|&b| !(b > 0.0)) {
            return Err(E::invalid("traffic.delay_budgets_s", "budgets must be positive"));
        }
        if t.category_mix.iter().any(|&m| !(m >= 0.0)) || t.category_mix.iter().sum::<f64>() <= 0.0 {
            return Err(E::invalid("traffic.category_mix", "weights must be >= 0 with positive sum"));
        }
        positive("traffic.profile_period_s", t.profile_period_s)?;
        non_negative("traffic.synthetic.peak_density", t.synthetic.peak_density)?;
        non_negative("traffic.synthetic.trough_density", t.synthetic.trough_density)?;
        if t.synthetic.trough_density > t.synthetic.peak_density {
            return Err(E::invalid("traffic.synthetic.trough_density", "must not exceed peak_density"));
        }
        for (name, h) in [
            ("traffic.synthetic.peak_hour", t.synthetic.peak_hour),
            ("traffic.synthetic.trough_hour", t.synthetic.trough_hour),
        ] {
            if !(0.0..24.0).contains(&h) {
                return Err(E::invalid(name, "must lie in [0, 24)"));
            }
        }
        if t.synthetic.peak_hour == t.synthetic.trough_hour {
            return Err(E::invalid("traffic.synthetic.peak_hour", "must differ from trough_hour"));
        }

        if !(rl.gamma > 0.0 && rl.gamma <= 1.0) {
            return Err(E::invalid("rl.gamma", "gamma in (0, 1] violated"));
        }
        if !(0.0..=1.0).contains(&rl.gae_lambda) {
            return Err(E::invalid("rl.gae_lambda", "psi in [0, 1] violated"));
        }
        positive("rl.clip_eps", rl.clip_eps)?;
        non_negative("rl.entropy_coef", rl.entropy_coef)?;
        non_negative("rl.actor_lr", rl.actor_lr)?;
        non_negative("rl.critic_lr", rl.critic_lr)?;
        positive("rl.huber_delta", rl.huber_delta)?;
        non_negative("rl.reward_phi", rl.reward_phi)?;
        positive("rl.reward_power_unit_w", rl.reward_power_unit_w)?;
        positive("rl.reward_scale", rl.reward_scale)?;
        if rl.ppo_epochs == 0 || rl.minibatches == 0 || rl.rollout_length == 0 {
            return Err(E::invalid(
                "rl.rollout_length",
                "ppo_epochs, minibatches and rollout_length must be at least 1",
            ));
        }
        if rl.minibatches > rl.rollout_length {
            return Err(E::invalid("rl.minibatches", "cannot exceed rollout_length"));
        }
        if rl.actor_hidden.contains(&0) || rl.critic_hidden.contains(&0) {
            return Err(E::invalid("rl.actor_hidden", "hidden widths must be positive"));
        }
        positive("rl.max_grad_norm", rl.max_grad_norm)?;

        if d.replay_capacity == 0 || d.batch_size == 0 || d.target_sync == 0 {
            return Err(E::invalid(
                "dqn.batch_size",
                "replay_capacity, batch_size and target_sync must be at least 1",
            ));
        }
        for (name, e) in [("dqn.eps_start", d.eps_start), ("dqn.eps_end", d.eps_end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(E::invalid(name, "epsilon must lie in [0, 1]"));
            }
        }
        if !(d.gamma > 0.0 && d.gamma <= 1.0) {
            return Err(E::invalid("dqn.gamma", "gamma in (0, 1] violated"));
        }
        non_negative("dqn.lr", d.lr)?;
        positive("dqn.huber_delta", d.huber_delta)?;
        if d.hidden.contains(&0) {
            return Err(E::invalid("dqn.hidden", "hidden widths must be positive"));
        }
        if !(self.dac.lower <= self.dac.upper) {
            return Err(E::invalid("dac.lower", "lower <= upper violated"));
        }
        Ok(())
    }
}

impl PowerParams {
    /// Per-(antenna x UE) GOPS coefficient, solved so that a fully equipped AP
    /// serving `ap_full_load_ues` UEs hits `ap_gops_max`.
    pub fn ap_gops_per_ue_antenna(&self, max_antennas: usize) -> f64 {
        let m = max_antennas as f64;
        (self.ap_gops_max - self.ap_gops_idle - self.ap_gops_per_antenna * m)
            / (m * self.ap_full_load_ues as f64)
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be >= 0 and finite, got {v}")))
    }
}

/// AP sites at the centres of the equal cells tiling the square area (km).
/// Ordered column by column.
pub fn ap_positions(cfg: &ScenarioConfig) -> Vec<Point> {
    let g = &cfg.geometry;
    let w = g.area_side_km / g.grid_cols as f64;
    let h = g.area_side_km / g.grid_rows as f64;
    let mut out = Vec::with_capacity(g.grid_rows * g.grid_cols);
    for c in 0..g.grid_cols {
        for r in 0..g.grid_rows {
            out.push(Point::new((c as f64 + 0.5) * w, (r as f64 + 0.5) * h));
        }
    }
    out
}

/// FNV-1a, used to turn stream tags into ChaCha stream ids.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Independent reproducible stream for one concern (`"traffic"`,
/// `"shadow"`, `"policy"`, ...). Same seed and tag give the same draws.
pub fn make_rng(seed: u64, stream_tag: &str) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(fnv1a(stream_tag.as_bytes()));
    rng
}

/// Deterministic child seed, e.g. one per evaluation episode.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    // splitmix64 finaliser over the mixed inputs
    let mut z = seed ^ fnv1a(tag.as_bytes()).rotate_left(17) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn minimal_override_keeps_table_defaults() {
        let cfg = parse_scenario(
            "[geometry]\nnum_aps = 4\ngrid_rows = 2\ngrid_cols = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.geometry.num_aps, 4);
        assert_eq!(cfg.rl.gamma, 0.99);
        assert_eq!(cfg.rl.clip_eps, 0.2);
    }

    #[test]
    fn pilot_longer_than_block_is_rejected() {
        let err = parse_scenario("[radio]\npilot_length = 300\ncoherence_block = 200\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("tau_p < tau_c"), "{msg}");
        assert!(msg.contains("radio.pilot_length"), "{msg}");
    }

    #[test]
    fn defaults_follow_numerical_setup() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.geometry.num_aps, 25);
        assert_eq!(cfg.radio.max_antennas, 8);
        assert_eq!(cfg.radio.per_antenna_power_w, 0.25);
        assert_eq!(cfg.radio.bandwidth_hz, 20e6);
        assert_eq!(cfg.radio.pilot_length, 7);
        assert_eq!(cfg.radio.cluster_energy_fraction, 0.9);
        assert_eq!(cfg.sim.decision_period, 20);
        assert_eq!(cfg.traffic.demand_mb, 1.5);
        assert_eq!(cfg.rl.reward_w_rs, 60.0);
        assert_eq!(cfg.rl.reward_w_pc, 0.4);
        cfg.validate().unwrap();
    }

    #[test]
    fn noise_floor_from_bandwidth() {
        let r = RadioParams::default();
        // -174 + 73.01 + 7 = -93.99 dBm
        let dbm = 10.0 * (r.noise_variance() * 1e3).log10();
        assert!((dbm - (-93.989_700_043)).abs() < 1e-6, "{dbm}");
    }

    #[test]
    fn parse_error_reports_line() {
        let err = parse_scenario("rng_seed = 3\n[radio]\npilot_length = \"seven\"\n").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        assert!(matches!(
            parse_scenario("[radio]\npilot_lenght = 7\n"),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn single_field_violations_name_the_field() {
        let cases = [
            ("[radio]\ncluster_energy_fraction = 0.0\n", "radio.cluster_energy_fraction"),
            ("[sim]\ntimestep_s = 0.0\n", "sim.timestep_s"),
            ("[sim]\ndecision_period = 0\n", "sim.decision_period"),
            ("[rl]\ngamma = 1.5\n", "rl.gamma"),
            ("[rl]\ngae_lambda = -0.1\n", "rl.gae_lambda"),
            ("[rl]\nclip_eps = 0.0\n", "rl.clip_eps"),
            ("[geometry]\nnum_aps = 24\n", "geometry.grid_rows"),
        ];
        for (text, field) in cases {
            let err = parse_scenario(text).unwrap_err().to_string();
            assert!(err.contains(field), "{text:?} -> {err}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ScenarioConfig::default();
        cfg.radio.noise_variance_w = Some(1e-13);
        cfg.traffic.profile_csv = Some("profile.csv".into());
        let back = parse_scenario(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn grid_two_by_two() {
        let mut cfg = ScenarioConfig::default();
        cfg.geometry.num_aps = 4;
        cfg.geometry.grid_rows = 2;
        cfg.geometry.grid_cols = 2;
        let pts = ap_positions(&cfg);
        let expect = [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)];
        assert_eq!(pts.len(), 4);
        for (p, (x, y)) in pts.iter().zip(expect) {
            assert_eq!((p.x, p.y), (x, y));
        }
    }

    #[test]
    fn grid_five_by_five_pitch() {
        let cfg = ScenarioConfig::default();
        let pts = ap_positions(&cfg);
        assert_eq!(pts.len(), 25);
        // brute-force minimum pairwise distance
        let mut min = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                min = min.min(pts[i].dist(&pts[j]));
            }
        }
        assert!((min - 0.2).abs() < 1e-12);
        assert!(pts.iter().all(|p| p.x > 0.0 && p.x < 1.0 && p.y > 0.0 && p.y < 1.0));
    }

    #[test]
    fn single_cell_is_centred() {
        let mut cfg = ScenarioConfig::default();
        cfg.geometry.num_aps = 1;
        cfg.geometry.grid_rows = 1;
        cfg.geometry.grid_cols = 1;
        let pts = ap_positions(&cfg);
        assert_eq!((pts[0].x, pts[0].y), (0.5, 0.5));
    }

    #[test]
    fn streams_are_reproducible_and_separated() {
        let draw = |seed, tag| {
            let mut r = make_rng(seed, tag);
            (0..8).map(|_| r.random::<u64>()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7, "traffic"), draw(7, "traffic"));
        assert_ne!(draw(7, "traffic"), draw(7, "shadow"));
        assert_ne!(draw(7, "traffic"), draw(8, "traffic"));
    }

    #[test]
    fn gops_coefficient_hits_capacity() {
        let p = PowerParams::default();
        let c2 = p.ap_gops_per_ue_antenna(8);
        assert_eq!(p.ap_gops_idle + p.ap_gops_per_antenna * 8.0 + c2 * 8.0 * 10.0, p.ap_gops_max);
    }
}
