//! The two-tier optimization loop and the three comparison methods: equal
//! allocation with the full array on, optimized allocation with the full
//! array on, and jointly optimized allocation plus subarray activation.

use crate::error::Result;
use crate::metrics::{
    self, ActivationState, ActivationView, PowerAllocation,
};
use crate::pa_solver::{self, SolveStatus, TracePoint};
use crate::sa_selector;
use crate::scenario::TrialContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    EaFa,
    PaFa,
    PaSa,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::EaFa => "EA-FA",
            Method::PaFa => "PA-FA",
            Method::PaSa => "PA-SA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportStatus {
    Converged,
    ConvergedWithRollback,
    MaxIterations,
    Infeasible,
}

impl ReportStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReportStatus::Converged => "converged",
            ReportStatus::ConvergedWithRollback => "converged-with-rollback",
            ReportStatus::MaxIterations => "max-iterations",
            ReportStatus::Infeasible => "infeasible",
        }
    }

    /// Whether the run ended in a usable optimized state.
    pub fn is_converged(&self) -> bool {
        matches!(self, ReportStatus::Converged | ReportStatus::ConvergedWithRollback)
    }
}

/// Outcome of one method on one trial, evaluated on the binary activation.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub method: Method,
    pub status: ReportStatus,
    pub power_consumption_w: f64,
    pub transmit_power_w: f64,
    pub rates_bps_hz: Vec<f64>,
    pub harvested_w: Vec<f64>,
    pub activation: Vec<bool>,
    pub active_count: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub allocation: PowerAllocation,
    /// Binary activation after each outer iteration (joint method only).
    pub activation_history: Vec<Vec<bool>>,
    /// Per-solve iteration traces, kept only when the context asks for them.
    pub traces: Vec<Vec<TracePoint>>,
}

/// Consumed-power ratio of a method against the equal-allocation baseline.
pub fn power_consumption_ratio(report: &SolverReport, baseline: &SolverReport) -> f64 {
    report.power_consumption_w / baseline.power_consumption_w
}

fn equal_allocation(ctx: &TrialContext) -> PowerAllocation {
    let per_beam = ctx.power.subarray_power_cap() / ctx.tables.users() as f64;
    PowerAllocation::equal(
        ctx.geometry.subarray_count,
        ctx.tables.id_users,
        ctx.tables.eh_users,
        per_beam,
    )
}

fn binary_state(activation: &[bool]) -> ActivationState {
    ActivationState {
        binary: activation.to_vec(),
        scaled: activation.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    }
}

fn make_report(
    method: Method,
    status: ReportStatus,
    allocation: PowerAllocation,
    activation: Vec<bool>,
    outer_iterations: usize,
    inner_iterations: usize,
    activation_history: Vec<Vec<bool>>,
    traces: Vec<Vec<TracePoint>>,
    ctx: &TrialContext,
) -> Result<SolverReport> {
    let act = binary_state(&activation);
    let rates = (0..ctx.tables.id_users)
        .map(|l| metrics::downlink_rate(l, &allocation, &act, ActivationView::Binary, &ctx.tables))
        .collect();
    let harvested = (0..ctx.tables.eh_users)
        .map(|m| {
            metrics::input_energy(m, &allocation, &act, ActivationView::Binary, &ctx.tables)
                .map(|x| metrics::eh_forward(x, &ctx.eh))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SolverReport {
        method,
        status,
        power_consumption_w: metrics::power_consumption(&allocation, &act, &ctx.power),
        transmit_power_w: metrics::transmit_power(&allocation, &act),
        rates_bps_hz: rates,
        harvested_w: harvested,
        active_count: act.active_count(),
        activation,
        outer_iterations,
        inner_iterations,
        allocation,
        activation_history,
        traces,
    })
}

/// Worst quality-of-service slack of an allocation on a binary activation:
/// rate slack in bits/s/Hz, harvest slack normalized by the saturation level.
fn qos_slack(pa: &PowerAllocation, activation: &[bool], ctx: &TrialContext) -> Result<f64> {
    let act = binary_state(activation);
    let mut slack = f64::INFINITY;
    for l in 0..ctx.tables.id_users {
        let rate = metrics::downlink_rate(l, pa, &act, ActivationView::Binary, &ctx.tables);
        slack = slack.min(rate - ctx.thresholds.rate_floor[l]);
    }
    for m in 0..ctx.tables.eh_users {
        let input = metrics::input_energy(m, pa, &act, ActivationView::Binary, &ctx.tables)?;
        let harvested = metrics::eh_forward(input, &ctx.eh);
        slack = slack.min((harvested - ctx.thresholds.energy_floor[m]) / ctx.eh.zeta_max);
    }
    Ok(slack)
}

/// Uniformly scale an allocation up, within the per-subarray caps, until it
/// clears the floors. Solver output can sit a hair below a floor; both rate
/// and harvested power are increasing in a uniform scale, so the smallest
/// sufficient factor is found by bisection.
fn restore_feasibility(
    pa: &PowerAllocation,
    activation: &[bool],
    ctx: &TrialContext,
) -> Result<Option<PowerAllocation>> {
    const TOL: f64 = 1e-6;
    if qos_slack(pa, activation, ctx)? >= -TOL {
        return Ok(Some(pa.clone()));
    }
    let cap = ctx.power.subarray_power_cap();
    let mut c_max = f64::INFINITY;
    for s in 0..pa.subarrays() {
        let row = pa.row_sum(s);
        if row > 0.0 {
            c_max = c_max.min(cap / row);
        }
    }
    if !c_max.is_finite() || c_max <= 1.0 {
        return Ok(None);
    }
    if qos_slack(&pa.scale(c_max), activation, ctx)? < -TOL {
        return Ok(None);
    }
    let (mut lo, mut hi) = (1.0f64, c_max);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if qos_slack(&pa.scale(mid), activation, ctx)? >= -TOL {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(pa.scale(hi)))
}

/// Equal power split, whole array on. This run realizes the floors exactly.
pub fn run_ea_fa(ctx: &TrialContext) -> Result<SolverReport> {
    let allocation = equal_allocation(ctx);
    let activation = vec![true; ctx.geometry.subarray_count];
    make_report(
        Method::EaFa,
        ReportStatus::Converged,
        allocation,
        activation,
        0,
        0,
        Vec::new(),
        Vec::new(),
        ctx,
    )
}

/// Optimized allocation with the whole array on.
pub fn run_pa_fa(ctx: &TrialContext) -> Result<SolverReport> {
    let s_count = ctx.geometry.subarray_count;
    let weights = vec![1.0; s_count];
    let sol = pa_solver::solve_pa(
        &weights,
        &ctx.tables,
        &ctx.thresholds,
        &ctx.power,
        &ctx.eh,
        &ctx.admm,
        Some(&equal_allocation(ctx)),
    )?;
    let activation = vec![true; s_count];
    let (allocation, status) = match sol.status {
        SolveStatus::Converged => match restore_feasibility(&sol.allocation, &activation, ctx)? {
            Some(pa) => (pa, ReportStatus::Converged),
            None => (sol.allocation, ReportStatus::Infeasible),
        },
        SolveStatus::MaxIterations => (sol.allocation, ReportStatus::MaxIterations),
        SolveStatus::Infeasible => (sol.allocation, ReportStatus::Infeasible),
    };
    let traces = if ctx.collect_traces { vec![sol.trace] } else { Vec::new() };
    make_report(
        Method::PaFa,
        status,
        allocation,
        activation,
        1,
        sol.iterations,
        Vec::new(),
        traces,
        ctx,
    )
}

/// Joint allocation and activation: alternate contribution scoring, the
/// mean-threshold on/off decision, activation scaling, and an allocation
/// solve, until the consumed power settles.
///
/// The solve receives the scaled activation normalized to unit peak, so the
/// strongest subarray keeps full weight; the raw scores would shrink every
/// constraint by the active count and make the subproblem unmeetable. If a
/// deactivation step yields an infeasible subproblem (or one whose solution
/// cannot clear the floors on the binary activation), the loop rolls back to
/// the previous activation and stops. The reported state is the best
/// feasible one seen.
pub fn run_pa_sa(ctx: &TrialContext) -> Result<SolverReport> {
    let s_count = ctx.geometry.subarray_count;
    let outer_cap = s_count + 2;
    let mut current = equal_allocation(ctx);
    let mut history: Vec<Vec<bool>> = Vec::new();
    let mut traces: Vec<Vec<TracePoint>> = Vec::new();
    let mut inner_total = 0usize;
    let mut outer = 0usize;
    let mut best: Option<(f64, PowerAllocation, Vec<bool>)> = None;
    let mut prev_feed: Option<(Vec<bool>, Vec<f64>)> = None;
    let mut prev_objective: Option<f64> = None;
    let mut status = ReportStatus::MaxIterations;

    while outer < outer_cap {
        let h = sa_selector::surrogate(&current)?;
        let binary = sa_selector::binary_decision(&h);
        if let Some(last) = history.last() {
            // A subarray with zero allocation keeps a zero score, so the
            // active set can only shrink.
            debug_assert!(binary.iter().zip(last).all(|(&now, &before)| before || !now));
        }
        let scaled = sa_selector::scale_activation(&h, &binary);
        let peak = scaled.iter().cloned().fold(0.0f64, f64::max);
        let feed: Vec<f64> = scaled.iter().map(|&v| v / peak).collect();

        if let Some((prev_binary, prev_scale)) = &prev_feed {
            if *prev_binary == binary && *prev_scale == feed {
                status = ReportStatus::Converged;
                break;
            }
        }

        outer += 1;
        history.push(binary.clone());
        let sol = pa_solver::solve_pa(
            &feed,
            &ctx.tables,
            &ctx.thresholds,
            &ctx.power,
            &ctx.eh,
            &ctx.admm,
            Some(&current),
        )?;
        inner_total += sol.iterations;
        if ctx.collect_traces {
            traces.push(sol.trace.clone());
        }

        let polished = if sol.status == SolveStatus::Converged {
            restore_feasibility(&sol.allocation, &binary, ctx)?
        } else {
            None
        };
        let Some(accepted) = polished else {
            if best.is_some() {
                status = ReportStatus::ConvergedWithRollback;
            } else {
                // The first subproblem is the full-activation problem; its
                // failure is the run's outcome.
                status = match sol.status {
                    SolveStatus::MaxIterations => ReportStatus::MaxIterations,
                    _ => ReportStatus::Infeasible,
                };
                return make_report(
                    Method::PaSa,
                    status,
                    sol.allocation,
                    binary,
                    outer,
                    inner_total,
                    history,
                    traces,
                    ctx,
                );
            }
            break;
        };

        let pc_binary =
            metrics::power_consumption(&accepted, &binary_state(&binary), &ctx.power);
        if best.as_ref().map_or(true, |(pc, _, _)| pc_binary < *pc) {
            best = Some((pc_binary, accepted.clone(), binary.clone()));
        }
        let objective = metrics::power_consumption_weighted(&accepted, &feed, &ctx.power);
        current = accepted;
        prev_feed = Some((binary, feed));
        if let Some(prev) = prev_objective {
            if (prev - objective).abs() <= ctx.outer_tolerance {
                status = ReportStatus::Converged;
                break;
            }
        }
        prev_objective = Some(objective);
    }

    let (_, allocation, activation) = best.expect("first outer iteration either succeeds or returns");
    make_report(
        Method::PaSa,
        status,
        allocation,
        activation,
        outer,
        inner_total,
        history,
        traces,
        ctx,
    )
}

/// All three methods on one trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial_index: usize,
    pub seed: u64,
    pub ea_fa: SolverReport,
    pub pa_fa: SolverReport,
    pub pa_sa: SolverReport,
}

pub fn run_trial(ctx: &TrialContext) -> Result<TrialOutcome> {
    Ok(TrialOutcome {
        trial_index: ctx.trial_index,
        seed: ctx.seed,
        ea_fa: run_ea_fa(ctx)?,
        pa_fa: run_pa_fa(ctx)?,
        pa_sa: run_pa_sa(ctx)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;
    use approx::assert_relative_eq;

    #[test]
    fn equal_full_matches_reference_consumption() {
        let config = ScenarioConfig::example_full(4);
        let ctx = config.build_trial(0).unwrap();
        let report = run_ea_fa(&ctx).unwrap();
        assert_relative_eq!(report.power_consumption_w, 137.5282286, max_relative = 1e-8);
        assert_relative_eq!(report.transmit_power_w, 30.72, max_relative = 1e-12);
        assert_eq!(report.active_count, 4);
    }

    #[test]
    fn equal_full_achieves_the_floors_exactly() {
        let config = ScenarioConfig::example_desk(4);
        let ctx = config.build_trial(0).unwrap();
        let report = run_ea_fa(&ctx).unwrap();
        for (rate, floor) in report.rates_bps_hz.iter().zip(&ctx.thresholds.rate_floor) {
            assert_eq!(rate, floor);
        }
        for (harvested, floor) in report.harvested_w.iter().zip(&ctx.thresholds.energy_floor) {
            assert_eq!(harvested, floor);
        }
    }

    #[test]
    fn optimized_full_does_not_exceed_the_baseline() {
        let config = ScenarioConfig::example_desk(2);
        let ctx = config.build_trial(0).unwrap();
        let ea = run_ea_fa(&ctx).unwrap();
        let pa = run_pa_fa(&ctx).unwrap();
        assert!(pa.status.is_converged(), "status {:?}", pa.status);
        assert!(pa.power_consumption_w <= ea.power_consumption_w + 1e-6);
        for (rate, floor) in pa.rates_bps_hz.iter().zip(&ctx.thresholds.rate_floor) {
            assert!(rate >= &(floor - 1e-4));
        }
        for (harvested, floor) in pa.harvested_w.iter().zip(&ctx.thresholds.energy_floor) {
            assert!(harvested >= &(floor - 1e-4 * ctx.eh.zeta_max));
        }
    }

    #[test]
    fn unreachable_override_reports_infeasible() {
        let mut config = ScenarioConfig::example_desk(2);
        // Below saturation but far beyond what the caps can deliver at range.
        config.thresholds.eh_harvest_mw = Some(23.9);
        config.users.regions[2].radial = crate::scenario::RadialSpec::Fraction {
            r_min_dfa_frac: 0.0090,
            r_max_dfa_frac: 0.0098,
        };
        let ctx = config.build_trial(0).unwrap();
        let pa = run_pa_fa(&ctx);
        if let Ok(report) = pa {
            assert_eq!(report.status, ReportStatus::Infeasible);
        }
    }

    #[test]
    fn single_subarray_joint_run_equals_optimized_full() {
        let config = ScenarioConfig::example_desk(1);
        let ctx = config.build_trial(0).unwrap();
        let pa_fa = run_pa_fa(&ctx).unwrap();
        let pa_sa = run_pa_sa(&ctx).unwrap();
        assert_eq!(pa_sa.outer_iterations, 1);
        assert_eq!(pa_fa.power_consumption_w, pa_sa.power_consumption_w);
        assert_eq!(pa_fa.transmit_power_w, pa_sa.transmit_power_w);
        assert_eq!(pa_fa.rates_bps_hz, pa_sa.rates_bps_hz);
        assert_eq!(pa_fa.harvested_w, pa_sa.harvested_w);
        assert_eq!(pa_fa.allocation, pa_sa.allocation);
        assert_eq!(pa_sa.active_count, 1);
    }

    #[test]
    fn degenerate_outer_tolerance_stops_after_one_iteration() {
        let config = ScenarioConfig::example_desk(3);
        let mut ctx = config.build_trial(0).unwrap();
        ctx.outer_tolerance = f64::INFINITY;
        let pa_sa = run_pa_sa(&ctx).unwrap();
        assert_eq!(pa_sa.outer_iterations, 1);
        // One outer iteration keeps the full activation, so the report
        // matches the optimized-full method.
        let pa_fa = run_pa_fa(&ctx).unwrap();
        assert_eq!(pa_sa.active_count, 3);
        assert_relative_eq!(
            pa_sa.power_consumption_w,
            pa_fa.power_consumption_w,
            max_relative = 1e-12
        );
    }

    #[test]
    fn joint_run_orders_below_optimized_full() {
        let config = ScenarioConfig::example_desk(8);
        let ctx = config.build_trial(0).unwrap();
        let outcome = run_trial(&ctx).unwrap();
        assert!(outcome.pa_sa.status.is_converged());
        assert!(outcome.pa_fa.status.is_converged());
        assert!(
            outcome.pa_sa.power_consumption_w <= outcome.pa_fa.power_consumption_w + 1e-6
        );
        assert!(
            outcome.pa_fa.power_consumption_w <= outcome.ea_fa.power_consumption_w + 1e-6
        );
        assert!(outcome.pa_sa.active_count >= 1);
        assert!(outcome.pa_sa.outer_iterations <= ctx.geometry.subarray_count + 2);
        // Activation only ever shrinks.
        for pair in outcome.pa_sa.activation_history.windows(2) {
            for (before, now) in pair[0].iter().zip(&pair[1]) {
                assert!(*before || !*now);
            }
        }
    }

    #[test]
    fn ratio_is_one_against_itself() {
        let config = ScenarioConfig::example_desk(2);
        let ctx = config.build_trial(0).unwrap();
        let ea = run_ea_fa(&ctx).unwrap();
        assert_eq!(power_consumption_ratio(&ea, &ea), 1.0);
    }

    #[test]
    fn reports_are_deterministic() {
        let config = ScenarioConfig::example_desk(4);
        let ctx = config.build_trial(3).unwrap();
        let a = run_trial(&ctx).unwrap();
        let ctx2 = config.build_trial(3).unwrap();
        let b = run_trial(&ctx2).unwrap();
        assert_eq!(a.pa_sa.power_consumption_w, b.pa_sa.power_consumption_w);
        assert_eq!(a.pa_fa.transmit_power_w, b.pa_fa.transmit_power_w);
        assert_eq!(a.pa_sa.activation, b.pa_sa.activation);
        assert_eq!(a.pa_sa.rates_bps_hz, b.pa_sa.rates_bps_hz);
    }
}
