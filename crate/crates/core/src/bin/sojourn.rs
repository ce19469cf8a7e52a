use clap::Parser;
use sojourn::scenario::{load_scenario, run_scenario_in};
use std::path::PathBuf;
use std::process::ExitCode;

/// Run a sojourn scenario file and write its CSV, log and summary outputs.
#[derive(Parser, Debug)]
#[command(name = "sojourn", version)]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; overrides `output.dir` of the scenario.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for point and branch fan-out.
    #[arg(long)]
    threads: Option<usize>,
    /// Print metrics and checks.
    #[arg(long)]
    verbose: bool,
    /// Parse and validate only.
    #[arg(long)]
    validate_only: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let scenario = match load_scenario(&cli.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("sojourn: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if cli.validate_only {
        if cli.verbose {
            eprintln!("sojourn: {} is valid", cli.scenario.display());
        }
        return ExitCode::SUCCESS;
    }
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("sojourn: cannot size worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let out = cli.out.unwrap_or_else(|| scenario.output.dir.clone());
    match run_scenario_in(&scenario, &out) {
        Ok(report) => {
            if cli.verbose {
                for (k, v) in &report.metrics {
                    eprintln!("{k:>28} = {v:.6e}");
                }
                for f in &report.files {
                    eprintln!("wrote {}", f.display());
                }
            }
            for c in &report.checks {
                eprintln!(
                    "{} {} = {:.3e} (threshold {:.3e})",
                    if c.passed { "pass" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                );
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("sojourn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
