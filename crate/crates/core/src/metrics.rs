//! Run directories, CSV/JSON persistence and figure-data extraction.
//!
//! Every run lives in its own directory `<out>/<kind>-<policy>-<stamp>`
//! that is created fresh and never reused. Tabular data is CSV with a
//! header row; summaries are pretty JSON. Nothing written inside a run
//! directory depends on wall-clock time, so re-running a command with the
//! same config and seed reproduces every file byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::DqnCurveRow;
use crate::config::ScenarioConfig;
use crate::error::MetricsError;
use crate::eval::{EpisodeResult, EpisodeSummary};
use crate::mappo::CurveRow;

pub const CONFIG_FILE: &str = "config.json";
pub const META_FILE: &str = "meta.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRACE_FILE: &str = "trace.csv";
pub const DROPS_FILE: &str = "drops.csv";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub const FIG_SLEEP_MODES: &str = "fig_sleep_modes.csv";
pub const FIG_DEMAND: &str = "fig_demand_rate.csv";
pub const FIG_ANTENNAS: &str = "fig_antennas.csv";
pub const FIG_PC_DROP: &str = "fig_pc_drop.csv";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MetricsError + '_ {
    move |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> MetricsError + '_ {
    move |source| MetricsError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> MetricsError + '_ {
    move |source| MetricsError::Json {
        path: path.to_path_buf(),
        source,
    }
}

/// SHA-256 of the canonical JSON echo, hex encoded.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let digest = Sha256::digest(cfg.to_json().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Create `<out>/<kind>-<policy>-<stamp>`, adding `-1`, `-2`, ... when the
/// name is taken. Existing directories are never reused.
pub fn create_run_dir(out: &Path, kind: &str, policy: &str) -> Result<PathBuf, MetricsError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let safe: String = policy
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    let base = format!("{kind}-{safe}-{stamp}");
    for n in 0.. {
        let name = if n == 0 { base.clone() } else { format!("{base}-{n}") };
        let dir = out.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io_err(&dir)(e)),
        }
    }
    unreachable!()
}

/// Provenance of a run: what ran, on which config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    pub policy: String,
    pub seed: u64,
    pub config_hash: String,
}

pub fn write_config_echo(dir: &Path, cfg: &ScenarioConfig, meta: &RunMeta) -> Result<(), MetricsError> {
    let p = dir.join(CONFIG_FILE);
    fs::write(&p, cfg.to_json()).map_err(io_err(&p))?;
    write_json(&dir.join(META_FILE), meta)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), MetricsError> {
    let text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, MetricsError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

/// Serialize `rows` as CSV with a header derived from the row type.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_mappo_curves(path: &Path, rows: &[CurveRow]) -> Result<(), MetricsError> {
    write_csv(path, rows)
}

pub fn write_dqn_curves(path: &Path, rows: &[DqnCurveRow]) -> Result<(), MetricsError> {
    write_csv(path, rows)
}

/// Leading `episode` column; serialized as a tuple with the row struct.
#[derive(Serialize)]
struct EpisodeKey {
    episode: usize,
}

#[derive(Serialize)]
struct EpisodeCsvRow {
    episode: usize,
    seed: u64,
    timesteps: u64,
    mean_p_net_w: f64,
    mean_p_ap_w: f64,
    mean_p_cloud_w: f64,
    mean_drop_ratio: f64,
    departures: usize,
    drop_target_met: bool,
    sm0: f64,
    sm1: f64,
    sm2: f64,
    sm3: f64,
    mean_antennas: f64,
    total_reward: f64,
    clamped_actions: u64,
    cloud_overload_steps: u64,
}

impl From<&EpisodeSummary> for EpisodeCsvRow {
    fn from(s: &EpisodeSummary) -> Self {
        Self {
            episode: s.episode,
            seed: s.seed,
            timesteps: s.timesteps,
            mean_p_net_w: s.mean_p_net_w,
            mean_p_ap_w: s.mean_p_ap_w,
            mean_p_cloud_w: s.mean_p_cloud_w,
            mean_drop_ratio: s.mean_drop_ratio,
            departures: s.departures,
            drop_target_met: s.drop_target_met,
            sm0: s.mode_counts[0],
            sm1: s.mode_counts[1],
            sm2: s.mode_counts[2],
            sm3: s.mode_counts[3],
            mean_antennas: s.mean_antennas,
            total_reward: s.total_reward,
            clamped_actions: s.clamped_actions,
            cloud_overload_steps: s.cloud_overload_steps,
        }
    }
}

/// Comparison against a named reference evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub run: String,
    pub policy: String,
    pub mean_p_net_w: f64,
    pub mean_drop_ratio: f64,
    /// 100 (P_ref - P) / P_ref.
    pub pc_savings_pct: f64,
}

/// Aggregate over all evaluation episodes. Power means are averages of the
/// per-episode time means (episodes have equal length, so this is also the
/// pooled time mean); the drop ratio is the average of per-episode means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub policy: String,
    pub seed: u64,
    pub config_hash: String,
    pub episodes: usize,
    pub mean_p_net_w: f64,
    pub mean_p_ap_w: f64,
    pub mean_p_cloud_w: f64,
    pub mean_drop_ratio: f64,
    pub mean_antennas: f64,
    pub mode_counts: [f64; 4],
    pub departures: usize,
    pub reference: Option<ReferenceComparison>,
}

pub fn pc_savings_pct(reference_w: f64, policy_w: f64) -> f64 {
    100.0 * (reference_w - policy_w) / reference_w
}

impl EvalSummary {
    pub fn from_episodes(policy: &str, cfg: &ScenarioConfig, eps: &[EpisodeSummary]) -> Self {
        let n = eps.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EpisodeSummary) -> f64| eps.iter().map(f).sum::<f64>() / n;
        let mut modes = [0.0; 4];
        for (k, m) in modes.iter_mut().enumerate() {
            *m = mean(&|e| e.mode_counts[k]);
        }
        Self {
            policy: policy.to_string(),
            seed: cfg.rng_seed,
            config_hash: config_hash(cfg),
            episodes: eps.len(),
            mean_p_net_w: mean(&|e| e.mean_p_net_w),
            mean_p_ap_w: mean(&|e| e.mean_p_ap_w),
            mean_p_cloud_w: mean(&|e| e.mean_p_cloud_w),
            mean_drop_ratio: mean(&|e| e.mean_drop_ratio),
            mean_antennas: mean(&|e| e.mean_antennas),
            mode_counts: modes,
            departures: eps.iter().map(|e| e.departures).sum(),
            reference: None,
        }
    }

    pub fn compare_to(&mut self, run: &str, reference: &EvalSummary) {
        self.reference = Some(ReferenceComparison {
            run: run.to_string(),
            policy: reference.policy.clone(),
            mean_p_net_w: reference.mean_p_net_w,
            mean_drop_ratio: reference.mean_drop_ratio,
            pc_savings_pct: pc_savings_pct(reference.mean_p_net_w, self.mean_p_net_w),
        });
    }
}

/// Write trace, departures, per-episode and aggregate files of an
/// evaluation into `dir`.
pub fn write_eval(dir: &Path, results: &[EpisodeResult], summary: &EvalSummary) -> Result<(), MetricsError> {
    let trace: Vec<_> = results
        .iter()
        .flat_map(|r| r.trace.iter().map(move |row| (EpisodeKey { episode: r.summary.episode }, row)))
        .collect();
    write_csv(&dir.join(TRACE_FILE), &trace)?;
    let drops: Vec<_> = results
        .iter()
        .flat_map(|r| r.departures.iter().map(move |rec| (EpisodeKey { episode: r.summary.episode }, rec)))
        .collect();
    write_csv(&dir.join(DROPS_FILE), &drops)?;
    let eps: Vec<EpisodeCsvRow> = results.iter().map(|r| (&r.summary).into()).collect();
    write_csv(&dir.join(EPISODES_FILE), &eps)?;
    write_json(&dir.join(SUMMARY_FILE), summary)
}

/// Columns of a CSV file keyed by header name, parsed as numbers.
#[derive(Debug, Clone, Default)]
pub struct Lanes {
    pub path: PathBuf,
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl Lanes {
    pub fn read(path: &Path) -> Result<Self, MetricsError> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
        let headers: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for rec in r.records() {
            let rec = rec.map_err(csv_err(path))?;
            for (c, field) in cols.iter_mut().zip(rec.iter()) {
                // non-numeric fields (booleans, names) are kept as NaN
                c.push(match field {
                    "true" => 1.0,
                    "false" => 0.0,
                    f => f.parse().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            columns: headers.into_iter().zip(cols).collect(),
        })
    }

    pub fn get(&self, name: &str) -> Result<&[f64], MetricsError> {
        self.columns.get(name).map(Vec::as_slice).ok_or_else(|| MetricsError::MissingLane {
            path: self.path.clone(),
            column: name.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.columns.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Trace lanes averaged across episodes at equal row positions.
fn episode_mean(trace: &Lanes, lanes: &[&str]) -> Result<Vec<Vec<f64>>, MetricsError> {
    let episode = trace.get("episode")?;
    let time = trace.get("time_s")?;
    let cols: Vec<&[f64]> = lanes.iter().map(|l| trace.get(l)).collect::<Result<_, _>>()?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let (mut current, mut pos) = (f64::NAN, 0usize);
    for i in 0..episode.len() {
        if episode[i] != current {
            current = episode[i];
            pos = 0;
        }
        if pos == rows.len() {
            rows.push(vec![0.0; lanes.len() + 1]);
            rows[pos][0] = time[i];
            counts.push(0.0);
        }
        for (j, c) in cols.iter().enumerate() {
            rows[pos][j + 1] += c[i];
        }
        counts[pos] += 1.0;
        pos += 1;
    }
    for (row, n) in rows.iter_mut().zip(&counts) {
        row[1..].iter_mut().for_each(|v| *v /= n);
    }
    Ok(rows)
}

/// Outcome of [`figdata`]: files written and problems found per file.
#[derive(Debug, Default)]
pub struct FigdataReport {
    pub written: Vec<PathBuf>,
    pub problems: Vec<String>,
}

fn run_label(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Emit the four figure CSVs into `out` from evaluation run directories:
/// sleep-mode counts, demand rate and mean antennas over time (trace
/// averaged across episodes, with hour of day from the run's profile), and
/// power/drop bars per run. A run lacking a lane is reported and skipped
/// for that file only.
pub fn figdata(run_dirs: &[PathBuf], out: &Path) -> Result<FigdataReport, MetricsError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut report = FigdataReport::default();
    let specs: [(&str, &[&str]); 3] = [
        (FIG_SLEEP_MODES, &["sm0", "sm1", "sm2", "sm3"]),
        (FIG_DEMAND, &["offered_mbps", "arrived_mbps", "ues"]),
        (FIG_ANTENNAS, &["mean_antennas"]),
    ];
    let mut tables: Vec<Vec<Vec<String>>> = vec![Vec::new(); specs.len()];
    let mut bars: Vec<Vec<String>> = Vec::new();

    for dir in run_dirs {
        let label = run_label(dir);
        let period = read_json::<ScenarioConfig>(&dir.join(CONFIG_FILE))
            .map(|c| c.traffic.profile_period_s)
            .ok();
        let trace = match Lanes::read(&dir.join(TRACE_FILE)) {
            Ok(t) => Some(t),
            Err(e) => {
                report.problems.push(e.to_string());
                None
            }
        };
        if let Some(trace) = &trace {
            for ((file, lanes), table) in specs.iter().zip(tables.iter_mut()) {
                match episode_mean(trace, lanes) {
                    Ok(rows) => table.extend(rows.into_iter().map(|r| {
                        let hour = period.map_or(f64::NAN, |p| (r[0] % p) / p * 24.0);
                        let mut rec = vec![label.clone(), r[0].to_string(), hour.to_string()];
                        rec.extend(r[1..].iter().map(f64::to_string));
                        rec
                    })),
                    Err(e) => report.problems.push(format!("{file}: {e}")),
                }
            }
        }
        match read_json::<EvalSummary>(&dir.join(SUMMARY_FILE)) {
            Ok(s) => bars.push(vec![
                label.clone(),
                s.policy,
                s.mean_p_net_w.to_string(),
                s.mean_p_ap_w.to_string(),
                s.mean_p_cloud_w.to_string(),
                s.mean_drop_ratio.to_string(),
            ]),
            Err(e) => report.problems.push(format!("{FIG_PC_DROP}: {e}")),
        }
    }

    for ((file, lanes), rows) in specs.iter().zip(&tables) {
        let mut header = vec!["run", "time_s", "hour"];
        header.extend(lanes.iter());
        let path = out.join(file);
        write_rows(&path, &header, rows)?;
        report.written.push(path);
    }
    let path = out.join(FIG_PC_DROP);
    write_rows(
        &path,
        &["run", "policy", "mean_p_net_w", "mean_p_ap_w", "mean_p_cloud_w", "mean_drop_ratio"],
        &bars,
    )?;
    report.written.push(path);
    Ok(report)
}
