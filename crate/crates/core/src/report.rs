//! Aggregation of trial outcomes into per-method summaries.

use rayon::prelude::*;

use crate::error::Result;
use crate::orchestrator::{power_consumption_ratio, run_trial, Method, TrialOutcome};
use crate::scenario::ScenarioConfig;

/// Mean figures of one method over a batch of trials.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: Method,
    pub trials: usize,
    pub converged_trials: usize,
    pub mean_power_consumption_w: f64,
    pub mean_transmit_power_w: f64,
    /// Mean consumed-power ratio against the equal-allocation baseline.
    pub eta: f64,
    /// Mean fraction of subarrays left active.
    pub mean_active_ratio: f64,
}

pub fn summarize(outcomes: &[TrialOutcome], subarrays: usize) -> Vec<MethodSummary> {
    [Method::EaFa, Method::PaFa, Method::PaSa]
        .iter()
        .map(|&method| {
            let reports: Vec<_> = outcomes
                .iter()
                .map(|o| match method {
                    Method::EaFa => (&o.ea_fa, &o.ea_fa),
                    Method::PaFa => (&o.pa_fa, &o.ea_fa),
                    Method::PaSa => (&o.pa_sa, &o.ea_fa),
                })
                .collect();
            let n = reports.len().max(1) as f64;
            MethodSummary {
                method,
                trials: reports.len(),
                converged_trials: reports.iter().filter(|(r, _)| r.status.is_converged()).count(),
                mean_power_consumption_w: reports
                    .iter()
                    .map(|(r, _)| r.power_consumption_w)
                    .sum::<f64>()
                    / n,
                mean_transmit_power_w: reports
                    .iter()
                    .map(|(r, _)| r.transmit_power_w)
                    .sum::<f64>()
                    / n,
                eta: reports
                    .iter()
                    .map(|(r, base)| power_consumption_ratio(r, base))
                    .sum::<f64>()
                    / n,
                mean_active_ratio: reports
                    .iter()
                    .map(|(r, _)| r.active_count as f64 / subarrays as f64)
                    .sum::<f64>()
                    / n,
            }
        })
        .collect()
}

/// Run every trial of a scenario, in parallel, ordered by trial index.
pub fn run_scenario_trials(
    config: &ScenarioConfig,
    collect_traces: bool,
) -> Result<Vec<TrialOutcome>> {
    (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut ctx = config.build_trial(trial)?;
            ctx.collect_traces = collect_traces;
            run_trial(&ctx)
        })
        .collect()
}
