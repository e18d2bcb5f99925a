//! Command-line front end: seeded scenario runs and parameter sweeps with
//! CSV emission.
//!
//! Exit codes: 0 success, 2 config schema violation, 3 infeasible or
//! otherwise invalid scenario, 1 anything else.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use swiptsim_core::error::Error;
use swiptsim_core::report::{run_scenario_trials, summarize};
use swiptsim_core::scenario::ScenarioConfig;

#[derive(Parser)]
#[command(
    name = "swiptsim",
    about = "Near-field SWIPT power allocation and subarray activation simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario config (JSON).
    config: PathBuf,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads for trial-level parallelism (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Write per-solve iteration traces next to the results.
    #[arg(long)]
    emit_trace: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Dump the per-trial coupling tables (debug aid).
    #[arg(long)]
    dump_tables: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of one scenario and write results + summary CSVs.
    Run(CommonArgs),
    /// Sweep one axis and write a summary row per grid point.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Sweep axis: s (subarray count), eh (harvest floor, mW), or rate
        /// (rate floor, bits/s/Hz).
        #[arg(long)]
        axis: Axis,
        /// Comma-separated grid values, e.g. "1,2,3,4" or "0.04,0.1,0.4".
        #[arg(long)]
        grid: String,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Axis {
    S,
    Eh,
    Rate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(common) => run_command(&common),
        Command::Sweep { common, axis, grid } => sweep_command(&common, axis, &grid),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Schema(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(CliError::Scenario(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(CliError::Other(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

enum CliError {
    Schema(String),
    Scenario(String),
    Other(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidScenario(_)
            | Error::InvalidGeometry(_)
            | Error::InfeasibleThreshold(_) => CliError::Scenario(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

fn load_config(common: &CommonArgs) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::Other(format!("cannot read {}: {e}", common.config.display())))?;
    let mut config = ScenarioConfig::parse_json(&text).map_err(|e| CliError::Schema(e.to_string()))?;
    if let Some(seed) = common.seed {
        config.users.seed = seed;
    }
    if let Some(trials) = common.trials {
        if trials == 0 {
            return Err(CliError::Schema("config field `trials`: must be >= 1".into()));
        }
        config.trials = trials;
    }
    Ok(config)
}

fn init_workers(workers: usize) -> Result<(), CliError> {
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    Ok(())
}

fn run_command(common: &CommonArgs) -> Result<(), CliError> {
    let config = load_config(common)?;
    init_workers(common.workers)?;
    std::fs::create_dir_all(&common.out_dir)?;

    if common.dump_tables {
        let ctx = config.build_trial(0)?;
        let mut file = std::fs::File::create(common.out_dir.join("gain_tables.txt"))?;
        ctx.tables.write_text(&mut file)?;
    }

    let outcomes = run_scenario_trials(&config, common.emit_trace)?;
    let summaries = summarize(&outcomes, config.geometry.subarrays);
    output::write_results(&common.out_dir.join("results.csv"), &config, &outcomes)?;
    output::write_summary(&common.out_dir.join("summary.csv"), &config, &summaries)?;
    if common.emit_trace {
        output::write_traces(&common.out_dir, &config, &outcomes)?;
    }
    for s in &summaries {
        println!(
            "{}: mean P_C = {} W, mean P_TX = {} W, eta = {}, converged {}/{}",
            s.method.as_str(),
            s.mean_power_consumption_w,
            s.mean_transmit_power_w,
            s.eta,
            s.converged_trials,
            s.trials
        );
    }
    Ok(())
}

fn parse_grid(grid: &str) -> Result<Vec<f64>, CliError> {
    let values: Result<Vec<f64>, _> = grid.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| CliError::Schema(format!("bad --grid value: {e}")))?;
    if values.is_empty() {
        return Err(CliError::Schema("empty --grid".into()));
    }
    Ok(values)
}

fn sweep_command(common: &CommonArgs, axis: Axis, grid: &str) -> Result<(), CliError> {
    let base = load_config(common)?;
    init_workers(common.workers)?;
    std::fs::create_dir_all(&common.out_dir)?;
    let values = parse_grid(grid)?;

    let mut rows = Vec::with_capacity(values.len());
    for &value in &values {
        let mut config = base.clone();
        let axis_name = match axis {
            Axis::S => {
                let s = value as usize;
                if s == 0 || (value - s as f64).abs() > 1e-9 {
                    return Err(CliError::Schema(format!(
                        "subarray grid values must be positive integers, got {value}"
                    )));
                }
                config.geometry.subarrays = s;
                "s"
            }
            Axis::Eh => {
                config.thresholds.eh_harvest_mw = Some(value);
                "eh_harvest_mw"
            }
            Axis::Rate => {
                config.thresholds.rate_bps_hz = Some(value);
                "rate_bps_hz"
            }
        };
        let outcomes = run_scenario_trials(&config, false)?;
        let summaries = summarize(&outcomes, config.geometry.subarrays);
        let find = |m: swiptsim_core::orchestrator::Method| {
            summaries.iter().find(|s| s.method == m).expect("summary per method")
        };
        let ea = find(swiptsim_core::orchestrator::Method::EaFa);
        let pa_fa = find(swiptsim_core::orchestrator::Method::PaFa);
        let pa_sa = find(swiptsim_core::orchestrator::Method::PaSa);
        println!(
            "{axis_name} = {value}: eta_pa_fa = {}, eta_pa_sa = {}, active ratio = {}",
            pa_fa.eta, pa_sa.eta, pa_sa.mean_active_ratio
        );
        rows.push(output::SweepRow {
            axis: axis_name,
            value,
            mean_pc_ea_fa_w: ea.mean_power_consumption_w,
            mean_pc_pa_fa_w: pa_fa.mean_power_consumption_w,
            mean_pc_pa_sa_w: pa_sa.mean_power_consumption_w,
            eta_pa_fa: pa_fa.eta,
            eta_pa_sa: pa_sa.eta,
            mean_active_ratio: pa_sa.mean_active_ratio,
        });
    }
    output::write_sweep(&common.out_dir.join("sweep.csv"), &base, &rows)?;
    Ok(())
}
