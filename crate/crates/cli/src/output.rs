//! CSV emission: RFC-4180 rows behind a provenance header of `#` comment
//! lines carrying the resolved config and seed, so identical inputs yield
//! byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use swiptsim_core::orchestrator::{Method, SolverReport, TrialOutcome};
use swiptsim_core::report::MethodSummary;
use swiptsim_core::scenario::ScenarioConfig;

pub fn provenance_header(config: &ScenarioConfig, seed: u64) -> String {
    format!(
        "# swiptsim results\n# config: {}\n# base_seed: {}\n",
        config.to_json(),
        seed
    )
}

fn open_with_header(path: &Path, header: &str) -> std::io::Result<BufWriter<File>> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(header.as_bytes())?;
    Ok(file)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn activation_string(activation: &[bool]) -> String {
    activation.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// One row per trial and method, with per-user rate and harvest columns.
pub fn write_results(
    path: &Path,
    config: &ScenarioConfig,
    outcomes: &[TrialOutcome],
) -> std::io::Result<()> {
    let header = provenance_header(config, config.users.seed);
    let file = open_with_header(path, &header)?;
    let mut w = csv::Writer::from_writer(file);

    let id = config.users.id_count;
    let eh = config.users.eh_count;
    let mut columns = vec![
        "trial".to_string(),
        "method".to_string(),
        "status".to_string(),
        "p_c_w".to_string(),
        "p_tx_w".to_string(),
        "active_count".to_string(),
        "activation".to_string(),
        "outer_iterations".to_string(),
        "inner_iterations".to_string(),
    ];
    columns.extend((1..=id).map(|i| format!("rate_bps_hz_{i}")));
    columns.extend((1..=eh).map(|i| format!("harvest_w_{i}")));
    columns.extend((1..=id).map(|i| format!("rate_floor_{i}")));
    columns.extend((1..=eh).map(|i| format!("harvest_floor_w_{i}")));
    w.write_record(&columns)?;

    for outcome in outcomes {
        for report in [&outcome.ea_fa, &outcome.pa_fa, &outcome.pa_sa] {
            let floors = floors_for(outcome, report);
            let mut row = vec![
                outcome.trial_index.to_string(),
                report.method.as_str().to_string(),
                report.status.as_str().to_string(),
                fmt(report.power_consumption_w),
                fmt(report.transmit_power_w),
                report.active_count.to_string(),
                activation_string(&report.activation),
                report.outer_iterations.to_string(),
                report.inner_iterations.to_string(),
            ];
            row.extend(report.rates_bps_hz.iter().map(|&v| fmt(v)));
            row.extend(report.harvested_w.iter().map(|&v| fmt(v)));
            row.extend(floors.0.iter().map(|&v| fmt(v)));
            row.extend(floors.1.iter().map(|&v| fmt(v)));
            w.write_record(&row)?;
        }
    }
    w.flush()
}

/// The equal-allocation run realizes the floors, so its achieved figures
/// are the floor columns for every method of the trial.
fn floors_for<'a>(outcome: &'a TrialOutcome, _report: &SolverReport) -> (&'a [f64], &'a [f64]) {
    (&outcome.ea_fa.rates_bps_hz, &outcome.ea_fa.harvested_w)
}

pub fn write_summary(
    path: &Path,
    config: &ScenarioConfig,
    summaries: &[MethodSummary],
) -> std::io::Result<()> {
    let header = provenance_header(config, config.users.seed);
    let file = open_with_header(path, &header)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "method",
        "trials",
        "converged_trials",
        "mean_p_c_w",
        "mean_p_tx_w",
        "eta",
        "mean_active_ratio",
    ])?;
    for s in summaries {
        w.write_record(&[
            s.method.as_str().to_string(),
            s.trials.to_string(),
            s.converged_trials.to_string(),
            fmt(s.mean_power_consumption_w),
            fmt(s.mean_transmit_power_w),
            fmt(s.eta),
            fmt(s.mean_active_ratio),
        ])?;
    }
    w.flush()
}

/// One summary row per sweep grid point.
pub struct SweepRow {
    pub axis: &'static str,
    pub value: f64,
    pub mean_pc_ea_fa_w: f64,
    pub mean_pc_pa_fa_w: f64,
    pub mean_pc_pa_sa_w: f64,
    pub eta_pa_fa: f64,
    pub eta_pa_sa: f64,
    pub mean_active_ratio: f64,
}

pub fn write_sweep(
    path: &Path,
    config: &ScenarioConfig,
    rows: &[SweepRow],
) -> std::io::Result<()> {
    let header = provenance_header(config, config.users.seed);
    let file = open_with_header(path, &header)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "axis",
        "value",
        "mean_pc_ea_fa_w",
        "mean_pc_pa_fa_w",
        "mean_pc_pa_sa_w",
        "eta_ea_fa",
        "eta_pa_fa",
        "eta_pa_sa",
        "mean_active_ratio",
    ])?;
    for r in rows {
        w.write_record(&[
            r.axis.to_string(),
            fmt(r.value),
            fmt(r.mean_pc_ea_fa_w),
            fmt(r.mean_pc_pa_fa_w),
            fmt(r.mean_pc_pa_sa_w),
            fmt(1.0),
            fmt(r.eta_pa_fa),
            fmt(r.eta_pa_sa),
            fmt(r.mean_active_ratio),
        ])?;
    }
    w.flush()
}

/// Per-solve iteration traces of the optimized methods.
pub fn write_traces(
    dir: &Path,
    config: &ScenarioConfig,
    outcomes: &[TrialOutcome],
) -> std::io::Result<()> {
    for outcome in outcomes {
        for report in [&outcome.pa_fa, &outcome.pa_sa] {
            for (solve_index, trace) in report.traces.iter().enumerate() {
                let name = match report.method {
                    Method::PaSa => format!(
                        "trace_trial{}_{}_outer{}.csv",
                        outcome.trial_index,
                        report.method.as_str().to_lowercase().replace('-', "_"),
                        solve_index + 1
                    ),
                    _ => format!(
                        "trace_trial{}_{}.csv",
                        outcome.trial_index,
                        report.method.as_str().to_lowercase().replace('-', "_")
                    ),
                };
                let header = provenance_header(config, config.users.seed);
                let file = open_with_header(&dir.join(name), &header)?;
                let mut w = csv::Writer::from_writer(file);
                w.write_record(["iteration", "objective_w", "max_violation"])?;
                for p in trace {
                    w.write_record(&[
                        p.iteration.to_string(),
                        fmt(p.objective_w),
                        fmt(p.max_violation),
                    ])?;
                }
                w.flush()?;
            }
        }
    }
    Ok(())
}
