use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use twinfocus::cli::{load_config, report, run_scenario, scenario_table};

/// Shape two-photon and classical wavefronts through simulated scattering media.
#[derive(Parser, Debug)]
#[command(name = "twinfocus", version)]
struct Args {
    /// Print the available scenarios and exit.
    #[arg(long)]
    list_scenarios: bool,

    /// Scenario name, or `report` to summarize manifests.
    command: Option<String>,

    /// Manifests or run directories for `report`.
    inputs: Vec<PathBuf>,

    /// Config file path or inline JSON object.
    #[arg(long)]
    config: Option<String>,

    /// Master seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory (report: output file prefix).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Dotted-key override such as `grid.n_side=4`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(args: Args) -> twinfocus::Result<()> {
    if args.list_scenarios {
        print!("{}", scenario_table());
        return Ok(());
    }
    match args.command.as_deref() {
        Some("report") => {
            let summary = report(&args.inputs)?;
            match args.out {
                Some(prefix) => {
                    std::fs::write(prefix.with_extension("json"), serde_json::to_vec_pretty(&summary)?)?;
                    std::fs::write(prefix.with_extension("csv"), summary.to_csv())?;
                }
                None => print!("{}", summary.to_csv()),
            }
            Ok(())
        }
        scenario => {
            if !args.inputs.is_empty() {
                return Err(twinfocus::Error::Config("positional inputs are only accepted by `report`".into()));
            }
            if scenario.is_none() && args.config.is_none() {
                return Err(twinfocus::Error::Config("give a scenario name or --config".into()));
            }
            let cfg = load_config(args.config.as_deref(), scenario, args.seed, args.out, &args.overrides)?;
            let started = std::time::Instant::now();
            let manifest = run_scenario(&cfg)?;
            eprintln!(
                "{}: {} files in {} ({:.1}s)",
                cfg.scenario,
                manifest.files.len(),
                cfg.output_dir.display(),
                started.elapsed().as_secs_f64()
            );
            println!("{}", serde_json::to_string_pretty(&manifest.metrics)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
