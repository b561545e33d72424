//! Non-stationary Poisson arrivals driven by a diurnal density profile,
//! UE session lifecycle and drop accounting.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::channel::Point;
use crate::config::{SyntheticProfile, TrafficParams};
use crate::error::ConfigError;

/// Profile resolution: 20-minute bins over 24 h.
pub const BINS_PER_DAY: usize = 72;
pub const HOURS_PER_BIN: f64 = 24.0 / BINS_PER_DAY as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    DelayStringent,
    DelaySensitive,
    DelayTolerant,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::DelayStringent, Category::DelaySensitive, Category::DelayTolerant];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::DelayStringent => "delay_stringent",
            Category::DelaySensitive => "delay_sensitive",
            Category::DelayTolerant => "delay_tolerant",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Per-class traffic density kappa (Mbit/s/km^2) in 20-minute bins.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficProfile {
    bins: Vec<[f64; 3]>,
}

impl TrafficProfile {
    pub fn from_bins(bins: Vec<[f64; 3]>) -> Result<Self, ConfigError> {
        if bins.len() != BINS_PER_DAY {
            return Err(ConfigError::Profile(format!(
                "expected {BINS_PER_DAY} bins, got {}",
                bins.len()
            )));
        }
        if bins.iter().flatten().any(|&k| !(k >= 0.0 && k.is_finite())) {
            return Err(ConfigError::Profile("densities must be finite and >= 0".into()));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[[f64; 3]] {
        &self.bins
    }

    pub fn bin_of_hour(hour: f64) -> usize {
        let h = hour.rem_euclid(24.0);
        ((h / HOURS_PER_BIN) as usize).min(BINS_PER_DAY - 1)
    }

    pub fn density(&self, category: Category, hour: f64) -> f64 {
        self.bins[Self::bin_of_hour(hour)][category.index()]
    }

    pub fn total_density(&self, hour: f64) -> f64 {
        self.bins[Self::bin_of_hour(hour)].iter().sum()
    }

    pub fn peak_total(&self) -> f64 {
        self.bins.iter().map(|b| b.iter().sum::<f64>()).fold(0.0, f64::max)
    }

    /// Read a `bin,category,density_mbps_per_km2` CSV.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| ConfigError::Profile(format!("{}: {e}", path.display())))?;
        let mut bins = vec![[f64::NAN; 3]; BINS_PER_DAY];
        for (i, rec) in rdr.deserialize::<ProfileRow>().enumerate() {
            let row = rec.map_err(|e| ConfigError::Profile(format!("{} row {}: {e}", path.display(), i + 2)))?;
            let cat = Category::from_name(&row.category).ok_or_else(|| {
                ConfigError::Profile(format!("{} row {}: unknown category {:?}", path.display(), i + 2, row.category))
            })?;
            if row.bin >= BINS_PER_DAY {
                return Err(ConfigError::Profile(format!("{} row {}: bin {} out of range", path.display(), i + 2, row.bin)));
            }
            bins[row.bin][cat.index()] = row.density_mbps_per_km2;
        }
        if let Some(b) = bins.iter().position(|b| b.iter().any(|v| v.is_nan())) {
            return Err(ConfigError::Profile(format!("{}: bin {b} is missing a category", path.display())));
        }
        Self::from_bins(bins)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        for (bin, b) in self.bins.iter().enumerate() {
            for cat in Category::ALL {
                w.serialize(ProfileRow {
                    bin,
                    category: cat.name().to_string(),
                    density_mbps_per_km2: b[cat.index()],
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    bin: usize,
    category: String,
    density_mbps_per_km2: f64,
}

/// Normalised diurnal shape in [0, 1]: 0 at `trough_hour`, 1 at `peak_hour`,
/// joined by two half-period raised cosines (rise then fall).
pub fn diurnal_shape(hour: f64, peak_hour: f64, trough_hour: f64) -> f64 {
    let rise = (peak_hour - trough_hour).rem_euclid(24.0);
    let fall = 24.0 - rise;
    let since_trough = (hour - trough_hour).rem_euclid(24.0);
    if since_trough <= rise {
        0.5 - 0.5 * (PI * since_trough / rise).cos()
    } else {
        0.5 + 0.5 * (PI * (since_trough - rise) / fall).cos()
    }
}

/// Synthetic profile evaluated at the start of each 20-minute bin and split
/// across classes by `mix` (normalised).
pub fn synth_profile(shape: &SyntheticProfile, mix: &[f64; 3]) -> TrafficProfile {
    let norm: f64 = mix.iter().sum();
    let bins = (0..BINS_PER_DAY)
        .map(|b| {
            let hour = b as f64 * HOURS_PER_BIN;
            let s = diurnal_shape(hour, shape.peak_hour, shape.trough_hour);
            let total = shape.trough_density + (shape.peak_density - shape.trough_density) * s;
            [total * mix[0] / norm, total * mix[1] / norm, total * mix[2] / norm]
        })
        .collect();
    TrafficProfile { bins }
}

/// Profile named by the scenario: CSV when given, synthetic otherwise.
pub fn profile_for(params: &TrafficParams) -> Result<TrafficProfile, ConfigError> {
    match &params.profile_csv {
        Some(path) => TrafficProfile::from_csv(path),
        None => Ok(synth_profile(&params.synthetic, &params.category_mix)),
    }
}

/// `lambda = kappa A dt / x_max`: expected arrivals per timestep.
pub fn arrival_rate(kappa: f64, area_km2: f64, dt: f64, demand_mb: f64) -> f64 {
    kappa * area_km2 * dt / demand_mb
}

/// Maps simulated time to the daily profile and to per-class arrival rates.
#[derive(Debug, Clone)]
pub struct TrafficModel {
    pub profile: TrafficProfile,
    pub area_km2: f64,
    pub side_km: f64,
    pub dt: f64,
    pub demand_mb: f64,
    pub period_s: f64,
    pub delay_budgets_s: [f64; 3],
}

impl TrafficModel {
    pub fn new(cfg: &crate::config::ScenarioConfig) -> Result<Self, ConfigError> {
        Ok(Self {
            profile: profile_for(&cfg.traffic)?,
            area_km2: cfg.geometry.area_km2(),
            side_km: cfg.geometry.area_side_km,
            dt: cfg.sim.timestep_s,
            demand_mb: cfg.traffic.demand_mb,
            period_s: cfg.traffic.profile_period_s,
            delay_budgets_s: cfg.traffic.delay_budgets_s,
        })
    }

    pub fn hour_of_day(&self, time_s: f64) -> f64 {
        (time_s / self.period_s * 24.0).rem_euclid(24.0)
    }

    pub fn arrival_rate(&self, category: Category, time_s: f64) -> f64 {
        let kappa = self.profile.density(category, self.hour_of_day(time_s));
        arrival_rate(kappa, self.area_km2, self.dt, self.demand_mb)
    }

    pub fn total_rate(&self, time_s: f64) -> f64 {
        Category::ALL.iter().map(|&c| self.arrival_rate(c, time_s)).sum()
    }

    pub fn peak_total_rate(&self) -> f64 {
        arrival_rate(self.profile.peak_total(), self.area_km2, self.dt, self.demand_mb)
    }
}

/// Poisson number of arrivals with uniform positions over the square area.
pub fn sample_arrivals<R: Rng + ?Sized>(rate: f64, side_km: f64, rng: &mut R) -> Vec<Point> {
    let n = sample_count(rate, rng);
    (0..n)
        .map(|_| Point::new(rng.random::<f64>() * side_km, rng.random::<f64>() * side_km))
        .collect()
}

pub fn sample_count<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("finite positive rate").sample(rng) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeSession {
    pub id: u64,
    pub position: Point,
    pub category: Category,
    /// Flow size x_max (Mb).
    pub demand_mb: f64,
    /// x_rem (Mb).
    pub remaining_mb: f64,
    /// D_max (s).
    pub delay_budget_s: f64,
    /// D_rem (s).
    pub delay_remaining_s: f64,
    pub arrival_step: u64,
}

impl UeSession {
    pub fn new(id: u64, position: Point, category: Category, demand_mb: f64, delay_budget_s: f64, arrival_step: u64) -> Self {
        Self {
            id,
            position,
            category,
            demand_mb,
            remaining_mb: demand_mb,
            delay_budget_s,
            delay_remaining_s: delay_budget_s,
            arrival_step,
        }
    }

    /// r_req = x_max / D_max, in bit/s.
    pub fn required_rate_bps(&self) -> f64 {
        self.demand_mb * 1e6 / self.delay_budget_s
    }

    pub fn elapsed_s(&self) -> f64 {
        self.delay_budget_s - self.delay_remaining_s
    }

    /// rho = r_ach / r_req from progress so far; `None` before any time elapsed.
    pub fn rate_ratio(&self) -> Option<f64> {
        let elapsed = self.elapsed_s();
        if elapsed <= 0.0 {
            return None;
        }
        Some((self.demand_mb - self.remaining_mb) * self.delay_budget_s / (self.demand_mb * elapsed))
    }

    pub fn delay_ratio(&self) -> f64 {
        self.elapsed_s() / self.delay_budget_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepartureRecord {
    pub id: u64,
    pub category: Category,
    pub arrival_step: u64,
    pub departure_step: u64,
    pub served_mb: f64,
    pub dropped_mb: f64,
    pub rho: f64,
    /// x_rem / x_max
    pub drop_fraction: f64,
}

/// Per-UE drop accounting for one episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DropLedger {
    pub records: Vec<DepartureRecord>,
    drop_sum: f64,
}

impl DropLedger {
    pub fn push(&mut self, rec: DepartureRecord) {
        self.drop_sum += rec.drop_fraction;
        self.records.push(rec);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Running mean drop ratio over departed UEs (0 when none departed).
    pub fn mean_drop(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.drop_sum / self.records.len() as f64
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Serve every session for one timestep at the given rates (bit/s), age
/// them by `dt`, and remove the ones whose demand is met or whose budget has
/// expired. Departures are appended to the ledger and returned.
pub fn advance_sessions(
    sessions: &mut Vec<UeSession>,
    rates_bps: &[f64],
    dt: f64,
    step: u64,
    ledger: &mut DropLedger,
) -> Vec<DepartureRecord> {
    assert_eq!(sessions.len(), rates_bps.len());
    let mut departed = Vec::new();
    for (s, &r) in sessions.iter_mut().zip(rates_bps) {
        let delivered = r * dt / 1e6;
        if delivered >= s.remaining_mb * (1.0 - 1e-12) {
            s.remaining_mb = 0.0;
        } else {
            s.remaining_mb -= delivered;
        }
        s.delay_remaining_s -= dt;
        if s.delay_remaining_s <= dt * 1e-9 {
            s.delay_remaining_s = 0.0;
        }
    }
    sessions.retain(|s| {
        if s.remaining_mb > 0.0 && s.delay_remaining_s > 0.0 {
            return true;
        }
        let rho = s.rate_ratio().unwrap_or(0.0);
        let rec = DepartureRecord {
            id: s.id,
            category: s.category,
            arrival_step: s.arrival_step,
            departure_step: step,
            served_mb: s.demand_mb - s.remaining_mb,
            dropped_mb: s.remaining_mb,
            rho,
            drop_fraction: s.remaining_mb / s.demand_mb,
        };
        ledger.push(rec.clone());
        departed.push(rec);
        false
    });
    departed
}
