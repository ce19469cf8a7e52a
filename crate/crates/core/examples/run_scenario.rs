//! Load a scenario file and run it, as the `sojourn` binary does.
//!
//! cargo run --release --example run_scenario -- examples/scenarios/flat_sojourn.toml

use sojourn::scenario::{load_scenario, run_scenario_in};
use std::path::PathBuf;

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/scenarios/flat_sojourn.toml")));
    let scenario = load_scenario(&path).unwrap_or_else(|e| panic!("{e}"));
    let out = std::env::temp_dir().join("sojourn-example");
    match run_scenario_in(&scenario, &out) {
        Ok(report) => {
            for c in &report.checks {
                println!("{:<28} {:.3e} <= {:.3e}: {}", c.name, c.value, c.threshold, c.passed);
            }
            println!("outputs in {}", out.display());
        }
        Err(e) => eprintln!("{e} (exit code {})", e.exit_code()),
    }
}
