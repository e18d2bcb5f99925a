//! Brute-force verifiers for tiny instances: exhaustive activation
//! enumeration and grid-search allocation. Feasibility is judged through
//! the metric layer only, never through solver internals.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{self, ActivationState, ActivationView, PowerAllocation};
use crate::pa_solver::{self, SolveStatus};
use crate::scenario::TrialContext;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub best_power_consumption_w: f64,
    pub best_activation: Vec<bool>,
    pub best_allocation: PowerAllocation,
    pub candidates_evaluated: usize,
}

fn binary_state(activation: &[bool]) -> ActivationState {
    ActivationState {
        binary: activation.to_vec(),
        scaled: activation.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    }
}

/// Feasibility of an allocation (on a binary activation) straight from the
/// metric evaluations, with the same slack the pipeline reports against.
fn feasible(pa: &PowerAllocation, activation: &[bool], ctx: &TrialContext, tol: f64) -> Result<bool> {
    let act = binary_state(activation);
    for s in 0..pa.subarrays() {
        if pa.row_sum(s) > ctx.power.subarray_power_cap() + 1e-9 {
            return Ok(false);
        }
    }
    for l in 0..ctx.tables.id_users {
        let rate = metrics::downlink_rate(l, pa, &act, ActivationView::Binary, &ctx.tables);
        if rate < ctx.thresholds.rate_floor[l] - tol {
            return Ok(false);
        }
    }
    for m in 0..ctx.tables.eh_users {
        let input = metrics::input_energy(m, pa, &act, ActivationView::Binary, &ctx.tables)?;
        if metrics::eh_forward(input, &ctx.eh) < ctx.thresholds.energy_floor[m] - tol * ctx.eh.zeta_max
        {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Solve the allocation subproblem for every nonempty on/off pattern and
/// keep the feasible minimum-consumption result.
pub fn enumerate_activations(ctx: &TrialContext) -> Result<OracleResult> {
    let s_count = ctx.geometry.subarray_count;
    if s_count > 10 {
        return Err(Error::InvalidInput(format!(
            "exhaustive activation search supports at most 10 subarrays, got {s_count}"
        )));
    }
    let patterns: Vec<Vec<bool>> = (1u32..(1 << s_count))
        .map(|bits| (0..s_count).map(|s| bits & (1 << s) != 0).collect())
        .collect();

    let candidates: Vec<Option<(f64, usize, PowerAllocation)>> = patterns
        .par_iter()
        .enumerate()
        .map(|(idx, activation)| {
            let weights: Vec<f64> =
                activation.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let sol = match pa_solver::solve_pa(
                &weights,
                &ctx.tables,
                &ctx.thresholds,
                &ctx.power,
                &ctx.eh,
                &ctx.admm,
                None,
            ) {
                Ok(sol) => sol,
                Err(_) => return None,
            };
            if sol.status != SolveStatus::Converged {
                return None;
            }
            match feasible(&sol.allocation, activation, ctx, 1e-4) {
                Ok(true) => {
                    let pc = metrics::power_consumption(
                        &sol.allocation,
                        &binary_state(activation),
                        &ctx.power,
                    );
                    Some((pc, idx, sol.allocation))
                }
                _ => None,
            }
        })
        .collect();

    let evaluated = patterns.len();
    let best = candidates
        .into_iter()
        .flatten()
        .min_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
    match best {
        Some((pc, idx, allocation)) => Ok(OracleResult {
            best_power_consumption_w: pc,
            best_activation: patterns[idx].clone(),
            best_allocation: allocation,
            candidates_evaluated: evaluated,
        }),
        None => Err(Error::OracleInfeasible),
    }
}

/// Exhaustive grid search over the allocation variables with the whole
/// array on. Grids are nested under doubling: point `i` is `i * cap / res`.
pub fn grid_search_allocation(ctx: &TrialContext, resolution: usize) -> Result<OracleResult> {
    let s_count = ctx.geometry.subarray_count;
    let nl = ctx.tables.id_users;
    let nm = ctx.tables.eh_users;
    let nv = s_count * (nl + nm);
    if nv > 4 {
        return Err(Error::InvalidInput(format!(
            "grid search supports at most 4 variables, got {nv}"
        )));
    }
    if resolution == 0 {
        return Err(Error::InvalidInput("resolution must be >= 1".into()));
    }
    let cap = ctx.power.subarray_power_cap();
    let grid: Vec<f64> = (0..=resolution)
        .map(|i| i as f64 * cap / resolution as f64)
        .collect();
    let activation = vec![true; s_count];

    // Parallel over the first variable; each branch walks the rest
    // depth-first, pruning rows that exceed the per-subarray cap.
    let branch_best: Vec<Option<(f64, usize, PowerAllocation)>> = grid
        .par_iter()
        .enumerate()
        .map(|(first_idx, &first_val)| {
            let mut pa = PowerAllocation::zeros(s_count, nl, nm);
            set_var(&mut pa, 0, nl, first_val);
            let mut best: Option<(f64, usize, PowerAllocation)> = None;
            walk_grid(ctx, &grid, &activation, &mut pa, 1, nv, nl, cap, &mut best);
            best.map(|(pc, _, alloc)| (pc, first_idx, alloc))
        })
        .collect();

    let evaluated = grid.len().pow(nv as u32);
    let best = branch_best
        .into_iter()
        .flatten()
        .min_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
    match best {
        Some((pc, _, allocation)) => Ok(OracleResult {
            best_power_consumption_w: pc,
            best_activation: activation,
            best_allocation: allocation,
            candidates_evaluated: evaluated,
        }),
        None => Err(Error::OracleInfeasible),
    }
}

fn set_var(pa: &mut PowerAllocation, var: usize, nl: usize, value: f64) {
    let nk = nl + pa.eh.ncols();
    let s = var / nk;
    let beam = var % nk;
    if beam < nl {
        pa.id[(s, beam)] = value;
    } else {
        pa.eh[(s, beam - nl)] = value;
    }
}

#[allow(clippy::too_many_arguments)]
fn walk_grid(
    ctx: &TrialContext,
    grid: &[f64],
    activation: &[bool],
    pa: &mut PowerAllocation,
    var: usize,
    nv: usize,
    nl: usize,
    cap: f64,
    best: &mut Option<(f64, usize, PowerAllocation)>,
) {
    if var == nv {
        for s in 0..pa.subarrays() {
            if pa.row_sum(s) > cap + 1e-12 {
                return;
            }
        }
        if let Ok(true) = feasible(pa, activation, ctx, 1e-9) {
            let pc = metrics::power_consumption(pa, &binary_state(activation), &ctx.power);
            if best.as_ref().map_or(true, |(b, _, _)| pc < *b) {
                *best = Some((pc, 0, pa.clone()));
            }
        }
        return;
    }
    for &value in grid {
        set_var(pa, var, nl, value);
        // Prune as soon as this variable's subarray row exceeds its cap.
        let nk = nl + pa.eh.ncols();
        let s = var / nk;
        if pa.row_sum(s) > cap + 1e-12 {
            set_var(pa, var, nl, 0.0);
            break;
        }
        walk_grid(ctx, grid, activation, pa, var + 1, nv, nl, cap, best);
    }
    set_var(pa, var, nl, 0.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator;
    use crate::scenario::{RegionConfig, ScenarioConfig};
    use approx::assert_relative_eq;

    fn tiny_config(subarrays: usize, id: usize, eh: usize) -> ScenarioConfig {
        let mut config = ScenarioConfig::example_desk(subarrays);
        config.geometry.nx = 4;
        config.geometry.ny = 4;
        config.users.id_count = id;
        config.users.eh_count = eh;
        if id == 0 {
            config.users.regions.retain(|r| r.kind != crate::geometry::Role::Id);
        }
        if eh == 0 {
            config.users.regions.retain(|r| r.kind != crate::geometry::Role::Eh);
        }
        config
    }

    #[test]
    fn single_subarray_enumeration_equals_optimized_full() {
        let config = tiny_config(1, 1, 1);
        let ctx = config.build_trial(0).unwrap();
        let oracle = enumerate_activations(&ctx).unwrap();
        assert_eq!(oracle.candidates_evaluated, 1);
        let pa_fa = orchestrator::run_pa_fa(&ctx).unwrap();
        assert_relative_eq!(
            oracle.best_power_consumption_w,
            pa_fa.power_consumption_w,
            max_relative = 1e-6
        );
    }

    #[test]
    fn symmetric_two_subarray_scenario_scores_symmetrically() {
        let mut config = tiny_config(2, 2, 2);
        // Mirror-image regions so either single subarray serves equally well.
        config.users.regions = vec![
            RegionConfig {
                kind: crate::geometry::Role::Id,
                center_m: [0.0, 0.0, 0.0],
                radial: crate::scenario::RadialSpec::Fraction {
                    r_min_dfa_frac: 0.05,
                    r_max_dfa_frac: 0.09,
                },
                azimuth_rad: [1.2, 1.9],
                polar_rad: [0.1, 0.8],
                subarray_mask: None,
            },
            RegionConfig {
                kind: crate::geometry::Role::Eh,
                center_m: [0.0, 0.0, 0.0],
                radial: crate::scenario::RadialSpec::Fraction {
                    r_min_dfa_frac: 0.006,
                    r_max_dfa_frac: 0.009,
                },
                azimuth_rad: [1.2, 1.9],
                polar_rad: [0.0, 0.8],
                subarray_mask: None,
            },
        ];
        let ctx = config.build_trial(0).unwrap();
        let oracle = enumerate_activations(&ctx).unwrap();
        assert_eq!(oracle.candidates_evaluated, 3);
        assert!(oracle.best_power_consumption_w > 0.0);
    }

    #[test]
    fn grid_matches_closed_form_on_the_rate_only_instance() {
        let config = tiny_config(1, 1, 0);
        let ctx = {
            let mut ctx = config.build_trial(0).unwrap();
            // Explicit floor below the equal-split rate so the optimum is interior.
            let floor = 0.8 * ctx.thresholds.rate_floor[0];
            ctx.thresholds.rate_floor = vec![floor];
            ctx
        };
        let resolution = 400;
        let oracle = grid_search_allocation(&ctx, resolution).unwrap();
        let xi = metrics::rate_threshold_coefficient(ctx.thresholds.rate_floor[0]);
        let expected = ctx.tables.noise_power[0] / (xi * xi) / ctx.tables.direct_gain(0, 0, 0);
        let step = ctx.power.subarray_power_cap() / resolution as f64;
        assert!((oracle.best_allocation.id[(0, 0)] - expected).abs() <= step + 1e-12);
    }

    #[test]
    fn grid_refinement_never_increases_the_best() {
        let config = tiny_config(1, 1, 1);
        let ctx = config.build_trial(0).unwrap();
        let coarse = grid_search_allocation(&ctx, 50).unwrap();
        let fine = grid_search_allocation(&ctx, 100).unwrap();
        assert!(fine.best_power_consumption_w <= coarse.best_power_consumption_w + 1e-12);
        assert_eq!(coarse.candidates_evaluated, 51usize.pow(2));
    }

    #[test]
    fn infeasible_floors_yield_oracle_infeasible() {
        let config = tiny_config(1, 1, 1);
        let mut ctx = config.build_trial(0).unwrap();
        // A rate floor no allocation under the cap can meet.
        ctx.thresholds.rate_floor = vec![ctx.thresholds.rate_floor[0] + 40.0];
        assert!(matches!(
            grid_search_allocation(&ctx, 30),
            Err(Error::OracleInfeasible)
        ));
    }
}
