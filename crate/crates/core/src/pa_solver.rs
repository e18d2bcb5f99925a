//! Power-allocation solver: relaxed primal-dual splitting over the conic
//! residual system of the consumption-minimization problem, for a fixed
//! (possibly continuous) subarray activation.
//!
//! The residual map stacks, in order: one rate residual per information
//! user, one input-energy residual per harvesting user, the total-power
//! residual, and one per-subarray power residual. A point is feasible
//! exactly when every residual is nonpositive. Slack variables live in a
//! product of halfline cones and are updated by the second-order-cone
//! projector specialized to scalar blocks.

use ndarray::{Array1, Array2};

use crate::channel::GainTables;
use crate::error::{Error, Result};
use crate::metrics::{
    energy_threshold_amplitude, rate_threshold_coefficient, EhModelParams, PowerAllocation,
    PowerModelParams, QosThresholds,
};

/// Euclidean projection onto the second-order cone `{(r, s) : ||s|| <= r}`.
pub fn soc_project(q0: f64, q1: &[f64]) -> (f64, Vec<f64>) {
    let norm = q1.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= q0 {
        return (q0, q1.to_vec());
    }
    if norm <= -q0 {
        return (0.0, vec![0.0; q1.len()]);
    }
    let coef = 0.5 * (q0 + norm);
    (coef, q1.iter().map(|v| v * coef / norm).collect())
}

/// One point of the objective trace.
#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub iteration: usize,
    /// Consumed power at the current iterate with the solve's activation
    /// weights, watts.
    pub objective_w: f64,
    /// Largest normalized constraint violation at the current iterate.
    pub max_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Infeasible,
}

/// Splitting-iteration parameters.
#[derive(Debug, Clone)]
pub struct AdmmConfig {
    /// Penalty weight.
    pub tau: f64,
    /// Relaxation coefficient of the residual image; 1/2 recovers the plain
    /// alternating scheme.
    pub alpha: f64,
    /// Stop when the objective moves less than this between iterations, watts.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Projected-gradient steps per primal update.
    pub inner_steps: usize,
    /// Normalized residual violation above which a terminated solve is
    /// declared infeasible.
    pub feasibility_tol: f64,
    /// Penalty growth factor that triggers the divergence error.
    pub divergence_factor: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            alpha: 0.5,
            epsilon: 1e-7,
            max_iterations: 5000,
            inner_steps: 25,
            feasibility_tol: 1e-4,
            divergence_factor: 1e6,
        }
    }
}

/// The conic residual system for one activation choice.
pub struct ConstraintSystem<'a> {
    pub tables: &'a GainTables,
    pub power: &'a PowerModelParams,
    /// Fixed activation weights for this solve.
    pub weights: Vec<f64>,
    /// Squared rate cone constants per information user; infinite means the
    /// rate floor is zero and the row is unconstrained.
    pub xi_sq: Vec<f64>,
    /// Required RF input power per harvesting user (squared cone constant).
    pub lambda_sq: Vec<f64>,
    /// Constant bound vector [Xi_l, Lambda_m, P_t, P_s x S].
    pub bounds: Vec<f64>,
    row_scale: Vec<f64>,
    active_var: Vec<bool>,
    objective_grad: Array1<f64>,
    amp_floor: f64,
    nl: usize,
    nm: usize,
    ns: usize,
}

struct Assembled {
    residual: Array1<f64>,
    jacobian: Option<Array2<f64>>,
    /// Interference-plus-noise term per rate row, for violation scaling.
    rate_noncoherent: Vec<f64>,
}

impl<'a> ConstraintSystem<'a> {
    pub fn new(
        tables: &'a GainTables,
        thresholds: &QosThresholds,
        power: &'a PowerModelParams,
        eh: &EhModelParams,
        weights: &[f64],
    ) -> Result<Self> {
        let ns = tables.subarrays;
        if weights.len() != ns {
            return Err(Error::InvalidInput(format!(
                "activation has {} entries for {} subarrays",
                weights.len(),
                ns
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("activation weights must be finite and >= 0".into()));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::InvalidInput("every subarray is switched off".into()));
        }
        let nl = tables.id_users;
        let nm = tables.eh_users;

        let xi: Vec<f64> = thresholds
            .rate_floor
            .iter()
            .map(|&r| rate_threshold_coefficient(r))
            .collect();
        let mut lambda = Vec::with_capacity(nm);
        for &floor in &thresholds.energy_floor {
            lambda.push(energy_threshold_amplitude(floor, eh)?);
        }

        let mut bounds = Vec::with_capacity(nl + nm + 1 + ns);
        bounds.extend(xi.iter().copied());
        bounds.extend(lambda.iter().copied());
        bounds.push(power.total_power_cap());
        bounds.extend(std::iter::repeat(power.subarray_power_cap()).take(ns));

        let nv = ns * (nl + nm);
        let mut active_var = vec![false; nv];
        let mut objective_grad = Array1::zeros(nv);
        for s in 0..ns {
            if weights[s] > 0.0 {
                for j in 0..nl + nm {
                    active_var[var_index(s, j, nl, nm)] = true;
                    objective_grad[var_index(s, j, nl, nm)] =
                        weights[s] / power.amplifier_efficiency;
                }
            }
        }

        Ok(Self {
            tables,
            power,
            weights: weights.to_vec(),
            xi_sq: xi.iter().map(|&x| x * x).collect(),
            lambda_sq: lambda.iter().map(|&l| l * l).collect(),
            bounds,
            row_scale: vec![1.0; nl + nm + 1 + ns],
            active_var,
            objective_grad,
            amp_floor: 1e-2 * power.subarray_power_cap().sqrt(),
            nl,
            nm,
            ns,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.ns * (self.nl + self.nm)
    }

    pub fn num_rows(&self) -> usize {
        self.nl + self.nm + 1 + self.ns
    }

    pub fn allocation_from(&self, x: &Array1<f64>) -> PowerAllocation {
        let mut pa = PowerAllocation::zeros(self.ns, self.nl, self.nm);
        for s in 0..self.ns {
            for l in 0..self.nl {
                pa.id[(s, l)] = x[var_index(s, l, self.nl, self.nm)];
            }
            for m in 0..self.nm {
                pa.eh[(s, m)] = x[var_index(s, self.nl + m, self.nl, self.nm)];
            }
        }
        pa
    }

    pub fn flatten(&self, pa: &PowerAllocation) -> Array1<f64> {
        let mut x = Array1::zeros(self.num_vars());
        for s in 0..self.ns {
            for l in 0..self.nl {
                x[var_index(s, l, self.nl, self.nm)] = pa.id[(s, l)];
            }
            for m in 0..self.nm {
                x[var_index(s, self.nl + m, self.nl, self.nm)] = pa.eh[(s, m)];
            }
        }
        x
    }

    /// Consumed power at `x` under this solve's activation weights, watts.
    pub fn objective(&self, x: &Array1<f64>) -> f64 {
        let circuit = self.power.subarray_circuit_power();
        let mut total = 0.0;
        for s in 0..self.ns {
            let w = self.weights[s];
            if w == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for j in 0..self.nl + self.nm {
                row += x[var_index(s, j, self.nl, self.nm)];
            }
            total += w * (row / self.power.amplifier_efficiency + circuit);
        }
        total
    }

    /// Unscaled residual vector at `x`.
    pub fn residuals(&self, x: &Array1<f64>) -> Array1<f64> {
        self.assemble(x, false).residual
    }

    /// Largest normalized violation and the per-row breakdown.
    pub fn violations(&self, x: &Array1<f64>) -> (f64, Vec<f64>) {
        let a = self.assemble(x, false);
        self.violations_of(&a)
    }

    fn violations_of(&self, a: &Assembled) -> (f64, Vec<f64>) {
        let mut rows = Vec::with_capacity(self.num_rows());
        for l in 0..self.nl {
            let v = if self.xi_sq[l].is_finite() {
                a.residual[l].max(0.0) / a.rate_noncoherent[l].max(1e-300)
            } else {
                0.0
            };
            rows.push(v);
        }
        for m in 0..self.nm {
            let v = if self.lambda_sq[m] > 0.0 {
                a.residual[self.nl + m].max(0.0) / self.lambda_sq[m]
            } else {
                0.0
            };
            rows.push(v);
        }
        rows.push(a.residual[self.nl + self.nm].max(0.0) / self.power.total_power_cap());
        for s in 0..self.ns {
            rows.push(
                a.residual[self.nl + self.nm + 1 + s].max(0.0) / self.power.subarray_power_cap(),
            );
        }
        let max = rows.iter().cloned().fold(0.0f64, f64::max);
        (max, rows)
    }

    /// Set the per-row scales to the inverse gradient norms at `x0`, so every
    /// row of the scaled Jacobian starts with unit norm.
    fn equilibrate(&mut self, x0: &Array1<f64>) {
        let a = self.assemble(x0, true);
        let jac = a.jacobian.unwrap();
        for (i, scale) in self.row_scale.iter_mut().enumerate() {
            let norm = jac.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            *scale = if norm > 1e-30 { 1.0 / norm } else { 1.0 };
        }
    }

    fn scaled(&self, a: &Assembled) -> (Array1<f64>, Option<Array2<f64>>) {
        let mut r = a.residual.clone();
        for (i, v) in r.iter_mut().enumerate() {
            *v *= self.row_scale[i];
        }
        let j = a.jacobian.as_ref().map(|jac| {
            let mut out = jac.clone();
            for (i, mut row) in out.rows_mut().into_iter().enumerate() {
                row *= self.row_scale[i];
            }
            out
        });
        (r, j)
    }

    /// Residuals, optional Jacobian, and rate-row normalizers at `x`.
    ///
    /// The energy rows are exact; their gradients evaluate the square roots
    /// at the current iterate with a small amplitude floor so the slope stays
    /// bounded near zero power.
    fn assemble(&self, x: &Array1<f64>, want_jacobian: bool) -> Assembled {
        let (nl, nm, ns) = (self.nl, self.nm, self.ns);
        let nk = nl + nm;
        let nr = self.num_rows();
        let nv = self.num_vars();
        let t = self.tables;
        let mut residual = Array1::zeros(nr);
        let mut jac = if want_jacobian {
            Some(Array2::zeros((nr, nv)))
        } else {
            None
        };
        let mut rate_noncoherent = vec![1.0; nl];

        // Rate rows: noncoherent - Xi^2 * coherent, affine in x.
        for l in 0..nl {
            if !self.xi_sq[l].is_finite() {
                residual[l] = -1.0;
                continue;
            }
            let mut coherent = 0.0;
            let mut noncoherent = t.noise_power[l];
            for s in 0..ns {
                let w = self.weights[s];
                if w == 0.0 {
                    continue;
                }
                for beam in 0..nk {
                    let gain = t.direct_gain(s, l, beam);
                    let p = x[var_index(s, beam, nl, nm)];
                    if beam == l {
                        coherent += w * p * gain;
                        if let Some(j) = jac.as_mut() {
                            j[(l, var_index(s, beam, nl, nm))] = -self.xi_sq[l] * w * gain;
                        }
                    } else {
                        noncoherent += w * p * gain;
                        if let Some(j) = jac.as_mut() {
                            j[(l, var_index(s, beam, nl, nm))] = w * gain;
                        }
                    }
                }
            }
            residual[l] = noncoherent - self.xi_sq[l] * coherent;
            rate_noncoherent[l] = noncoherent;
        }

        // Energy rows: lambda^2 - I_m with the pairwise coupling sums.
        let mut amp = vec![0.0f64; ns];
        for m in 0..nm {
            let mut input = 0.0;
            for beam in 0..nk {
                for (s, a) in amp.iter_mut().enumerate() {
                    *a = self.weights[s] * x[var_index(s, beam, nl, nm)].max(0.0).sqrt();
                }
                for s in 0..ns {
                    if self.weights[s] == 0.0 {
                        continue;
                    }
                    let mut pair = 0.0;
                    for s2 in 0..ns {
                        if amp[s2] != 0.0 {
                            pair += amp[s2] * t.cross_gain(s, s2, m, beam).re;
                        }
                    }
                    input += amp[s] * pair;
                    if let Some(j) = jac.as_mut() {
                        let denom = x[var_index(s, beam, nl, nm)]
                            .max(0.0)
                            .sqrt()
                            .max(self.amp_floor);
                        j[(nl + m, var_index(s, beam, nl, nm))] =
                            -self.weights[s] * pair / denom;
                    }
                }
            }
            residual[nl + m] = self.lambda_sq[m] - input;
        }

        // Total-power row (activation-weighted) and per-subarray rows.
        let mut total = 0.0;
        for s in 0..ns {
            let mut row = 0.0;
            for beam in 0..nk {
                row += x[var_index(s, beam, nl, nm)];
                if let Some(j) = jac.as_mut() {
                    j[(nl + nm, var_index(s, beam, nl, nm))] = self.weights[s];
                    j[(nl + nm + 1 + s, var_index(s, beam, nl, nm))] = 1.0;
                }
            }
            total += self.weights[s] * row;
            residual[nl + nm + 1 + s] = row - self.power.subarray_power_cap();
        }
        residual[nl + nm] = total - self.power.total_power_cap();

        // Pinned variables never move; drop their columns so the step-size
        // estimate reflects the live problem.
        if let Some(j) = jac.as_mut() {
            for (col, &active) in self.active_var.iter().enumerate() {
                if !active {
                    j.column_mut(col).fill(0.0);
                }
            }
        }

        Assembled {
            residual,
            jacobian: jac,
            rate_noncoherent,
        }
    }

    /// Clamp to the nonnegative orthant, zero the pinned variables, and pull
    /// each subarray row back inside its power cap.
    fn project(&self, x: &mut Array1<f64>) {
        let nk = self.nl + self.nm;
        let cap = self.power.subarray_power_cap();
        let mut row = vec![0.0f64; nk];
        for s in 0..self.ns {
            let mut sum = 0.0;
            for beam in 0..nk {
                let idx = var_index(s, beam, self.nl, self.nm);
                let v = if self.active_var[idx] { x[idx].max(0.0) } else { 0.0 };
                row[beam] = if self.active_var[idx] { x[idx] } else { 0.0 };
                sum += v;
            }
            if sum <= cap {
                for beam in 0..nk {
                    let idx = var_index(s, beam, self.nl, self.nm);
                    x[idx] = if self.active_var[idx] { x[idx].max(0.0) } else { 0.0 };
                }
            } else {
                let projected = project_capped_simplex(&row, cap);
                for beam in 0..nk {
                    let idx = var_index(s, beam, self.nl, self.nm);
                    x[idx] = projected[beam];
                }
            }
        }
    }
}

#[inline]
fn var_index(s: usize, beam: usize, nl: usize, nm: usize) -> usize {
    s * (nl + nm) + beam
}

/// Euclidean projection onto `{v >= 0, sum v = cap}`.
fn project_capped_simplex(v: &[f64], cap: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - cap) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|&u| (u - theta).max(0.0)).collect()
}

fn spectral_norm_sq(j: &Array2<f64>) -> f64 {
    let nv = j.ncols();
    if nv == 0 {
        return 0.0;
    }
    let mut v = Array1::from_elem(nv, 1.0 / (nv as f64).sqrt());
    let mut lam = 0.0;
    for _ in 0..30 {
        let u = j.dot(&v);
        let w = j.t().dot(&u);
        let norm = w.dot(&w).sqrt();
        if norm < 1e-300 {
            return 0.0;
        }
        lam = v.dot(&w);
        v = w / norm;
    }
    lam.max(0.0)
}

/// Primal/slack/dual state of the splitting iteration.
pub struct AdmmState {
    pub x: Array1<f64>,
    pub x_a: Array1<f64>,
    pub y: Array1<f64>,
    pub z: Array1<f64>,
    pub iteration: usize,
    pub trace: Vec<TracePoint>,
    initial_penalty: Option<f64>,
}

impl AdmmState {
    /// Start from an allocation, with slacks matching its satisfied rows.
    ///
    /// The dual starts at a stationarity-scale estimate rather than zero:
    /// the nonnegative least-squares fit of the penalty gradient to the
    /// objective gradient. From zero, the dual would have to accumulate in
    /// residual-sized increments over thousands of iterations whenever the
    /// objective pull pins the primal against a bound.
    pub fn initialize(sys: &ConstraintSystem, start: &PowerAllocation, cfg: &AdmmConfig) -> Self {
        let mut x = sys.flatten(start);
        sys.project(&mut x);
        let a = sys.assemble(&x, true);
        let (r0, jac) = sys.scaled(&a);
        let jac = jac.unwrap();

        // min_z ||4 tau J^T z + f||^2, z >= 0, by projected gradient.
        let nr = sys.num_rows();
        let scale = 4.0 * cfg.tau;
        let lam = spectral_norm_sq(&jac);
        let mut z = Array1::zeros(nr);
        if lam > 0.0 {
            let step = 1.0 / (2.0 * scale * scale * lam);
            for _ in 0..1000 {
                let fit = jac.t().dot(&z) * scale + &sys.objective_grad;
                let grad = jac.dot(&fit) * (2.0 * scale);
                z = &z - &(grad * step);
                z.mapv_inplace(|v| v.max(0.0));
            }
        }

        let y = Array1::from_iter(r0.iter().zip(&z).map(|(&r, &zi)| (-r - zi).max(0.0)));
        Self {
            x_a: r0,
            y,
            z,
            x,
            iteration: 0,
            trace: Vec::new(),
            initial_penalty: None,
        }
    }
}

/// One full primal / relaxation / slack / dual cycle.
pub fn admm_iterate(
    state: &mut AdmmState,
    sys: &ConstraintSystem,
    cfg: &AdmmConfig,
) -> Result<()> {
    let x0 = state.x.clone();
    let assembled = sys.assemble(&x0, true);
    let (r0, jac) = sys.scaled(&assembled);
    let jac = jac.unwrap();

    // Primal update: linearize the residual map at the current iterate and
    // take a fixed budget of projected-gradient steps on the penalized
    // objective.
    let v0 = &r0 + &state.y + &state.z;
    let lam = spectral_norm_sq(&jac);
    let step = 1.0 / (4.0 * cfg.tau * lam + 1e-12);
    let mut x = x0.clone();
    for _ in 0..cfg.inner_steps {
        let lin = jac.dot(&(&x - &x0)) + &v0;
        let grad = &sys.objective_grad + &(jac.t().dot(&lin) * (4.0 * cfg.tau));
        x = &x - &(grad * step);
        sys.project(&mut x);
    }
    state.x = x;

    // Relaxed residual image, slack projection onto the halfline blocks, and
    // dual ascent.
    let a_new = sys.assemble(&state.x, false);
    let (r_new, _) = sys.scaled(&a_new);
    state.x_a = &r_new * (2.0 * cfg.alpha) - &(&state.y * (1.0 - 2.0 * cfg.alpha));
    let mut y = Array1::zeros(state.y.len());
    for i in 0..y.len() {
        let (proj, _) = soc_project(-state.x_a[i] - state.z[i], &[]);
        y[i] = proj;
    }
    state.y = y;
    state.z = &state.z + &state.x_a + &state.y;

    state.iteration += 1;
    let (max_violation, _) = sys.violations_of(&a_new);
    state.trace.push(TracePoint {
        iteration: state.iteration,
        objective_w: sys.objective(&state.x),
        max_violation,
    });

    let penalty = 2.0 * cfg.tau * state.z.dot(&state.z);
    let baseline = *state.initial_penalty.get_or_insert(penalty);
    if penalty > cfg.divergence_factor * baseline.max(1.0) {
        return Err(Error::Divergence {
            iterations: state.iteration,
            growth: penalty / baseline.max(1e-300),
            trace: state.trace.clone(),
        });
    }
    Ok(())
}

/// Result of one allocation solve.
pub struct PaSolution {
    pub allocation: PowerAllocation,
    pub trace: Vec<TracePoint>,
    pub status: SolveStatus,
    pub iterations: usize,
}

/// Solve the allocation subproblem for fixed activation weights.
///
/// Starts from the warm-start allocation (or the equal split), iterates the
/// splitting updates until the objective moves less than `epsilon` between
/// iterations, and classifies the terminal point by its normalized
/// constraint violation.
pub fn solve_pa(
    activation: &[f64],
    tables: &GainTables,
    thresholds: &QosThresholds,
    power: &PowerModelParams,
    eh: &EhModelParams,
    cfg: &AdmmConfig,
    warm_start: Option<&PowerAllocation>,
) -> Result<PaSolution> {
    let mut sys = ConstraintSystem::new(tables, thresholds, power, eh, activation)?;
    let start = match warm_start {
        Some(pa) => pa.clone(),
        None => {
            let per_beam = power.subarray_power_cap() / tables.users() as f64;
            PowerAllocation::equal(tables.subarrays, tables.id_users, tables.eh_users, per_beam)
        }
    };
    let x0 = {
        let mut x = sys.flatten(&start);
        sys.project(&mut x);
        x
    };
    sys.equilibrate(&x0);

    let mut state = AdmmState::initialize(&sys, &start, cfg);
    let mut prev_obj = sys.objective(&state.x);
    let mut status = SolveStatus::MaxIterations;
    for _ in 0..cfg.max_iterations {
        admm_iterate(&mut state, &sys, cfg)?;
        let tp = *state.trace.last().expect("trace grows every iteration");
        let delta = (tp.objective_w - prev_obj).abs();
        prev_obj = tp.objective_w;
        if delta <= cfg.epsilon && tp.max_violation <= cfg.feasibility_tol {
            status = SolveStatus::Converged;
            break;
        }
    }
    if status == SolveStatus::MaxIterations {
        let (viol, _) = sys.violations(&state.x);
        if viol > cfg.feasibility_tol {
            status = SolveStatus::Infeasible;
        }
    }

    Ok(PaSolution {
        allocation: sys.allocation_from(&state.x),
        trace: state.trace,
        status,
        iterations: state.iteration,
    })
}

/// Unscaled residual vector of an allocation against the stacked constraint
/// system, for a given activation.
pub fn assemble_residuals(
    pa: &PowerAllocation,
    activation: &[f64],
    tables: &GainTables,
    thresholds: &QosThresholds,
    power: &PowerModelParams,
    eh: &EhModelParams,
) -> Result<Vec<f64>> {
    let sys = ConstraintSystem::new(tables, thresholds, power, eh, activation)?;
    // Residuals of an externally supplied allocation: evaluate at the raw
    // point, without pinning rows the activation switched off.
    let mut sys = sys;
    sys.active_var.iter_mut().for_each(|a| *a = true);
    let x = sys.flatten(pa);
    Ok(sys.residuals(&x).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::compute_gain_tables;
    use crate::geometry::{build_array, Position3D};
    use crate::metrics::{self, ActivationState, ActivationView};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn soc_examples() {
        let (r, s) = soc_project(1.0, &[0.5, 0.0]);
        assert_eq!((r, s.as_slice()), (1.0, &[0.5, 0.0][..]));
        let (r, s) = soc_project(-2.0, &[1.0, 0.0]);
        assert_eq!((r, s.as_slice()), (0.0, &[0.0, 0.0][..]));
        let (r, s) = soc_project(0.0, &[2.0, 0.0]);
        assert_relative_eq!(r, 1.0, max_relative = 1e-12);
        assert_relative_eq!(s[0], 1.0, max_relative = 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn soc_projection_is_idempotent_and_member() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let q0 = 4.0 * rng.random::<f64>() - 2.0;
            let q1: Vec<f64> = (0..3).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            let (r, s) = soc_project(q0, &q1);
            let ns = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(ns <= r + 1e-9, "not in cone: |s|={ns} r={r}");
            let (r2, s2) = soc_project(r, &s);
            assert!((r2 - r).abs() <= 1e-12);
            for (a, b) in s.iter().zip(&s2) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn soc_projection_is_nearest_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dist = |r: f64, s: &[f64], q0: f64, q1: &[f64]| -> f64 {
            let mut d = (r - q0) * (r - q0);
            for (a, b) in s.iter().zip(q1) {
                d += (a - b) * (a - b);
            }
            d.sqrt()
        };
        for _ in 0..100 {
            let q0 = 4.0 * rng.random::<f64>() - 2.0;
            let q1: Vec<f64> = (0..2).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            let (pr, ps) = soc_project(q0, &q1);
            let dp = dist(pr, &ps, q0, &q1);
            for _ in 0..1000 {
                // Random cone point.
                let r = 3.0 * rng.random::<f64>();
                let dir: Vec<f64> = (0..2).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
                let dn = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                let scale = r * rng.random::<f64>() / dn;
                let s: Vec<f64> = dir.iter().map(|v| v * scale).collect();
                assert!(dp <= dist(r, &s, q0, &q1) + 1e-9);
            }
        }
    }

    #[test]
    fn boundary_projection_beats_a_grid() {
        // Minimize the distance over a fine grid of cone points and compare.
        let q0 = 0.0;
        let q1 = [2.0, 0.0];
        let (pr, ps) = soc_project(q0, &q1);
        let dp = ((pr - q0).powi(2) + (ps[0] - q1[0]).powi(2) + (ps[1] - q1[1]).powi(2)).sqrt();
        let mut best = f64::MAX;
        let n = 400;
        for i in 0..=n {
            let r = 3.0 * i as f64 / n as f64;
            for j in 0..=n {
                let s0 = -r + 2.0 * r * j as f64 / n as f64;
                let d = ((r - q0).powi(2) + (s0 - q1[0]).powi(2) + q1[1].powi(2)).sqrt();
                best = best.min(d);
            }
        }
        assert!(dp <= best + 1e-4);
    }

    #[test]
    fn capped_simplex_projection_respects_cap() {
        let v = project_capped_simplex(&[0.8, 0.7, -0.1], 1.0);
        let sum: f64 = v.iter().sum();
        assert_relative_eq!(sum, 1.0, max_relative = 1e-12);
        assert!(v.iter().all(|&x| x >= 0.0));
        // Order preserved.
        assert!(v[0] >= v[1] && v[1] >= v[2]);
    }

    struct Toy {
        tables: GainTables,
        power: PowerModelParams,
        eh: EhModelParams,
    }

    fn toy(users: Vec<Position3D>, id: usize) -> Toy {
        let g = build_array(1, 2, 2, 0.1, 0.025, 0.05, 0.0).unwrap();
        let noise = vec![1e-11; id];
        let tables = compute_gain_tables(&g, &users, id, None, 2.0, &noise).unwrap();
        let power = PowerModelParams::new(0.35, 0.05, 0.0482, 0.03, 4, 1).unwrap();
        let eh = EhModelParams::new(0.024, 1500.0, 0.0022).unwrap();
        Toy { tables, power, eh }
    }

    fn tight_cfg() -> AdmmConfig {
        AdmmConfig {
            epsilon: 1e-15,
            max_iterations: 30000,
            ..AdmmConfig::default()
        }
    }

    #[test]
    fn rate_only_toy_matches_closed_form() {
        let t = toy(vec![Position3D::new(0.0, 0.0, 0.3)], 1);
        let gain = t.tables.direct_gain(0, 0, 0);
        let rate_floor = 0.7 * (1.0 + (t.power.subarray_power_cap() / 1.0) * gain / 1e-11).log2();
        let th = QosThresholds {
            rate_floor: vec![rate_floor],
            energy_floor: vec![],
        };
        let xi = rate_threshold_coefficient(rate_floor);
        let expected = 1e-11 / (xi * xi) / gain;
        let sol = solve_pa(&[1.0], &t.tables, &th, &t.power, &t.eh, &tight_cfg(), None).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        assert_relative_eq!(sol.allocation.id[(0, 0)], expected, max_relative = 1e-2);
    }

    #[test]
    fn energy_only_toy_matches_closed_form() {
        let t = toy(vec![Position3D::new(0.0, 0.0, 0.05)], 0);
        let gain = t.tables.direct_gain(0, 0, 0);
        // A floor comfortably below what the cap can deliver.
        let input_at_cap = t.power.subarray_power_cap() * gain;
        let floor = metrics::eh_forward(0.3 * input_at_cap, &t.eh);
        let th = QosThresholds {
            rate_floor: vec![],
            energy_floor: vec![floor],
        };
        let expected = metrics::eh_inverse(floor, &t.eh).unwrap() / gain;
        let sol = solve_pa(&[1.0], &t.tables, &th, &t.power, &t.eh, &tight_cfg(), None).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        assert_relative_eq!(sol.allocation.eh[(0, 0)], expected, max_relative = 1e-2);
    }

    #[test]
    fn saturated_floor_errors_before_iterating() {
        let t = toy(vec![Position3D::new(0.0, 0.0, 0.05)], 0);
        let th = QosThresholds {
            rate_floor: vec![],
            energy_floor: vec![t.eh.zeta_max],
        };
        assert!(matches!(
            solve_pa(&[1.0], &t.tables, &th, &t.power, &t.eh, &AdmmConfig::default(), None),
            Err(Error::InfeasibleThreshold(_))
        ));
    }

    #[test]
    fn all_inactive_activation_is_rejected() {
        let t = toy(vec![Position3D::new(0.0, 0.0, 0.3)], 1);
        let th = QosThresholds {
            rate_floor: vec![0.5],
            energy_floor: vec![],
        };
        assert!(matches!(
            solve_pa(&[0.0], &t.tables, &th, &t.power, &t.eh, &AdmmConfig::default(), None),
            Err(Error::InvalidInput(_))
        ));
    }

    fn two_user_context() -> Toy {
        // The harvesting user sits far enough out that the equal-split input
        // stays below the rectifier's float-saturation knee.
        toy(
            vec![Position3D::new(0.03, 0.0, 0.25), Position3D::new(0.0, 0.01, 0.15)],
            1,
        )
    }

    #[test]
    fn equal_split_with_derived_floors_has_zero_residuals() {
        let t = two_user_context();
        let th = metrics::compute_thresholds(&t.tables, &t.power, &t.eh).unwrap();
        let per_beam = t.power.subarray_power_cap() / 2.0;
        let pa = PowerAllocation::equal(1, 1, 1, per_beam);
        let res =
            assemble_residuals(&pa, &[1.0], &t.tables, &th, &t.power, &t.eh).unwrap();
        // Rate and energy rows vanish by construction of the floors; the
        // power rows sit exactly at their caps under the full equal split.
        assert!(res[0].abs() <= 1e-9 * per_beam.max(1.0));
        assert!(res[1].abs() <= 1e-9 * t.lambda_scale(&th));
        assert!(res[2].abs() <= 1e-12 * t.power.total_power_cap());
        assert!(res[3].abs() <= 1e-12 * t.power.subarray_power_cap());
    }

    impl Toy {
        fn lambda_scale(&self, th: &QosThresholds) -> f64 {
            metrics::eh_inverse(th.energy_floor[0], &self.eh)
                .unwrap()
                .max(1e-12)
        }
    }

    #[test]
    fn zero_allocation_violates_energy_but_not_power() {
        let t = two_user_context();
        let th = metrics::compute_thresholds(&t.tables, &t.power, &t.eh).unwrap();
        let pa = PowerAllocation::zeros(1, 1, 1);
        let res =
            assemble_residuals(&pa, &[1.0], &t.tables, &th, &t.power, &t.eh).unwrap();
        assert!(res[1] > 0.0, "energy residual should be violated");
        assert!(res[2] < 0.0 && res[3] < 0.0);
    }

    #[test]
    fn feasible_random_points_have_nonpositive_residuals() {
        let t = two_user_context();
        let derived = metrics::compute_thresholds(&t.tables, &t.power, &t.eh).unwrap();
        // Floors below the equal-split point so the sampling box actually
        // contains feasible points.
        let th = QosThresholds {
            rate_floor: vec![0.6 * derived.rate_floor[0]],
            energy_floor: vec![0.5 * derived.energy_floor[0]],
        };
        let act = ActivationState::full(1);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut checked = 0;
        for _attempt in 0..100_000 {
            if checked >= 20 {
                break;
            }
            let mut pa = PowerAllocation::zeros(1, 1, 1);
            pa.id[(0, 0)] = t.power.subarray_power_cap() * 0.5 * rng.random::<f64>();
            pa.eh[(0, 0)] = t.power.subarray_power_cap() * 0.5 * rng.random::<f64>();
            // Feasibility judged through the metric layer only.
            let rate = metrics::downlink_rate(0, &pa, &act, ActivationView::Binary, &t.tables);
            let harvested = metrics::eh_forward(
                metrics::input_energy(0, &pa, &act, ActivationView::Binary, &t.tables).unwrap(),
                &t.eh,
            );
            let feasible = rate >= th.rate_floor[0] * (1.0 + 1e-9)
                && harvested >= th.energy_floor[0] * (1.0 + 1e-9)
                && pa.row_sum(0) <= t.power.subarray_power_cap();
            if !feasible {
                continue;
            }
            checked += 1;
            let res =
                assemble_residuals(&pa, &[1.0], &t.tables, &th, &t.power, &t.eh).unwrap();
            for r in res {
                assert!(r <= 1e-9 * t.power.subarray_power_cap());
            }
        }
        assert!(checked >= 20, "only {checked} feasible samples found");
    }

    #[test]
    fn iterates_stay_nonnegative_and_capped() {
        let t = two_user_context();
        let th = metrics::compute_thresholds(&t.tables, &t.power, &t.eh).unwrap();
        let mut sys =
            ConstraintSystem::new(&t.tables, &th, &t.power, &t.eh, &[1.0]).unwrap();
        let per_beam = t.power.subarray_power_cap() / 2.0;
        let start = PowerAllocation::equal(1, 1, 1, per_beam);
        let x0 = sys.flatten(&start);
        sys.equilibrate(&x0);
        let cfg = AdmmConfig::default();
        let mut state = AdmmState::initialize(&sys, &start, &cfg);
        for _ in 0..200 {
            admm_iterate(&mut state, &sys, &cfg).unwrap();
            let pa = sys.allocation_from(&state.x);
            assert!(pa.id.iter().chain(pa.eh.iter()).all(|&v| v >= 0.0));
            assert!(pa.row_sum(0) <= t.power.subarray_power_cap() + 1e-9);
        }
    }

    #[test]
    fn converged_state_is_a_fixed_point() {
        let t = toy(vec![Position3D::new(0.0, 0.0, 0.3)], 1);
        let gain = t.tables.direct_gain(0, 0, 0);
        let rate_floor = 0.5 * (1.0 + t.power.subarray_power_cap() * gain / 1e-11).log2();
        let th = QosThresholds {
            rate_floor: vec![rate_floor],
            energy_floor: vec![],
        };
        let mut sys =
            ConstraintSystem::new(&t.tables, &th, &t.power, &t.eh, &[1.0]).unwrap();
        let per_beam = t.power.subarray_power_cap();
        let start = PowerAllocation::equal(1, 1, 0, per_beam);
        let x0 = sys.flatten(&start);
        sys.equilibrate(&x0);
        let cfg = tight_cfg();
        let mut state = AdmmState::initialize(&sys, &start, &cfg);
        for _ in 0..30000 {
            admm_iterate(&mut state, &sys, &cfg).unwrap();
        }
        let before = sys.objective(&state.x);
        admm_iterate(&mut state, &sys, &cfg).unwrap();
        let after = sys.objective(&state.x);
        assert!((after - before).abs() < 1e-12, "delta {}", (after - before).abs());
    }

    #[test]
    fn full_activation_solve_beats_equal_split() {
        let t = two_user_context();
        let th = metrics::compute_thresholds(&t.tables, &t.power, &t.eh).unwrap();
        let sol = solve_pa(
            &[1.0],
            &t.tables,
            &th,
            &t.power,
            &t.eh,
            &AdmmConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        let act = ActivationState::full(1);
        let p_tx = metrics::transmit_power(&sol.allocation, &act);
        assert!(p_tx <= t.power.subarray_power_cap() + 1e-9);
        // Converged point satisfies the constraints when re-checked through
        // the metric layer.
        let rate = metrics::downlink_rate(0, &sol.allocation, &act, ActivationView::Binary, &t.tables);
        let harvested = metrics::eh_forward(
            metrics::input_energy(0, &sol.allocation, &act, ActivationView::Binary, &t.tables)
                .unwrap(),
            &t.eh,
        );
        assert!(rate >= th.rate_floor[0] * (1.0 - 1e-6) - 1e-9);
        assert!(harvested >= th.energy_floor[0] * (1.0 - 1e-6) - 1e-12);
        // Objective trace deltas eventually fall below the tolerance.
        let n = sol.trace.len();
        assert!(n >= 1);
        if n >= 2 {
            let d = (sol.trace[n - 1].objective_w - sol.trace[n - 2].objective_w).abs();
            assert!(d <= AdmmConfig::default().epsilon);
        }
    }
}

#[cfg(test)]
mod debug_probe {
    use super::*;
    use crate::channel::compute_gain_tables;
    use crate::geometry::{build_array, Position3D};
    use crate::metrics::{self, EhModelParams, PowerModelParams, QosThresholds};

    #[test]
    fn probe() {
        let g = build_array(1, 2, 2, 0.1, 0.025, 0.05, 0.0).unwrap();
        let users = vec![Position3D::new(0.0, 0.0, 0.3)];
        let tables = compute_gain_tables(&g, &users, 1, None, 2.0, &[1e-11]).unwrap();
        let power = PowerModelParams::new(0.35, 0.05, 0.0482, 0.03, 4, 1).unwrap();
        let eh = EhModelParams::new(0.024, 1500.0, 0.0022).unwrap();
        let gain = tables.direct_gain(0, 0, 0);
        let rate_floor = 0.7 * (1.0 + power.subarray_power_cap() * gain / 1e-11).log2();
        let th = QosThresholds { rate_floor: vec![rate_floor], energy_floor: vec![] };
        let mut sys = ConstraintSystem::new(&tables, &th, &power, &eh, &[1.0]).unwrap();
        let start = PowerAllocation::equal(1, 1, 0, power.subarray_power_cap());
        let x0 = sys.flatten(&start);
        sys.equilibrate(&x0);
        println!("xi_sq {:?} gain {gain:e} row_scale {:?}", sys.xi_sq, sys.row_scale);
        let a = sys.assemble(&x0, true);
        println!("resid {:?}", a.residual);
        let (rs, js) = sys.scaled(&a);
        println!("scaled resid {:?}", rs);
        println!("scaled jac {:?}", js.as_ref().unwrap());
        println!("lam {:?}", spectral_norm_sq(js.as_ref().unwrap()));
        println!("obj_grad {:?}", sys.objective_grad);
        let cfg = AdmmConfig::default();
        let mut state = AdmmState::initialize(&sys, &start, &cfg);
        for i in 0..6 {
            admm_iterate(&mut state, &sys, &cfg).unwrap();
            println!("it {i} x {:?} y {:?} z {:?} obj {}", state.x, state.y, state.z, sys.objective(&state.x));
        }
    }
}
