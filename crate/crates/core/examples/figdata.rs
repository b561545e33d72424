//! Evaluate both baselines on the smoke scenario into a temporary runs
//! directory and turn the traces into figure CSVs.
//!
//!     cargo run --release --example figdata [out_dir]

use cellfree_energy::cli;
use cellfree_energy::config::load_scenario;
use cellfree_energy::metrics;

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "figdata".into());
    let cfg = load_scenario("crates/core/configs/smoke.toml").unwrap();
    let runs = std::env::temp_dir().join(format!("cellfree-figdata-{}", std::process::id()));
    let (always, _) = cli::eval(&cfg, "always-on", 2, None, &runs).unwrap();
    let (dac, s) = cli::eval(&cfg, "dac-sm1", 2, Some(&always), &runs).unwrap();
    if let Some(r) = &s.reference {
        println!("dac-sm1 saves {:.2}% against always-on", r.pc_savings_pct);
    }
    let report = metrics::figdata(&[always, dac], out.as_ref()).unwrap();
    for p in report.written {
        println!("wrote {}", p.display());
    }
    for p in report.problems {
        println!("problem: {p}");
    }
}
