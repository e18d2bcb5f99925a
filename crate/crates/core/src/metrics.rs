//! Scalar performance quantities: downlink rate, RF input energy, the
//! nonlinear harvest model, power consumption, transmit power, and the
//! quality-of-service floors with their cone constants.

use ndarray::Array2;

use crate::channel::GainTables;
use crate::error::{Error, Result};

/// Nonnegative power split across subarrays and beams, watts.
///
/// Row `s` holds subarray `s`'s allocation; columns index information beams
/// (`id`) and harvesting beams (`eh`) separately.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub id: Array2<f64>,
    pub eh: Array2<f64>,
}

impl PowerAllocation {
    pub fn zeros(subarrays: usize, id_users: usize, eh_users: usize) -> Self {
        Self {
            id: Array2::zeros((subarrays, id_users)),
            eh: Array2::zeros((subarrays, eh_users)),
        }
    }

    /// Every beam on every subarray gets the same power.
    pub fn equal(subarrays: usize, id_users: usize, eh_users: usize, per_beam: f64) -> Self {
        Self {
            id: Array2::from_elem((subarrays, id_users), per_beam),
            eh: Array2::from_elem((subarrays, eh_users), per_beam),
        }
    }

    pub fn subarrays(&self) -> usize {
        self.id.nrows()
    }

    pub fn row_sum(&self, s: usize) -> f64 {
        self.id.row(s).sum() + self.eh.row(s).sum()
    }

    pub fn total(&self) -> f64 {
        self.id.sum() + self.eh.sum()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            id: &self.id * factor,
            eh: &self.eh * factor,
        }
    }

    /// Entrywise nonnegativity and the per-subarray / total power caps.
    pub fn validate(&self, per_subarray_cap: f64, total_cap: f64) -> Result<()> {
        if self.id.iter().chain(self.eh.iter()).any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("negative allocation entry".into()));
        }
        for s in 0..self.subarrays() {
            if self.row_sum(s) > per_subarray_cap + 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "subarray {s} allocation {} exceeds cap {per_subarray_cap}",
                    self.row_sum(s)
                )));
            }
        }
        if self.total() > total_cap + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "total allocation {} exceeds cap {total_cap}",
                self.total()
            )));
        }
        Ok(())
    }
}

/// On/off state of each subarray plus the continuous activation estimates
/// used inside the allocation solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationState {
    pub binary: Vec<bool>,
    pub scaled: Vec<f64>,
}

impl ActivationState {
    pub fn full(subarrays: usize) -> Self {
        Self {
            binary: vec![true; subarrays],
            scaled: vec![1.0; subarrays],
        }
    }

    pub fn new(binary: Vec<bool>, scaled: Vec<f64>) -> Result<Self> {
        if binary.len() != scaled.len() {
            return Err(Error::InvalidInput("activation length mismatch".into()));
        }
        if !binary.iter().any(|&b| b) {
            return Err(Error::InvalidInput("at least one subarray must be active".into()));
        }
        if binary.iter().zip(&scaled).any(|(&b, &v)| v > 0.0 && !b) {
            return Err(Error::InvalidInput(
                "scaled activation positive on a switched-off subarray".into(),
            ));
        }
        Ok(Self { binary, scaled })
    }

    pub fn active_count(&self) -> usize {
        self.binary.iter().filter(|&&b| b).count()
    }

    pub fn binary_weights(&self) -> Vec<f64> {
        self.binary.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Which activation weights a metric evaluation should use: the on/off
/// states for reported figures, the continuous estimates inside the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationView {
    Binary,
    Scaled,
}

fn weights_of(act: &ActivationState, view: ActivationView) -> Vec<f64> {
    match view {
        ActivationView::Binary => act.binary_weights(),
        ActivationView::Scaled => act.scaled.clone(),
    }
}

/// Amplifier efficiency and per-subarray circuit power terms, with the
/// derived per-subarray and total transmit-power caps.
#[derive(Debug, Clone)]
pub struct PowerModelParams {
    /// Amplifier efficiency in (0, 1].
    pub amplifier_efficiency: f64,
    /// Frequency synthesizer power per subarray, watts.
    pub synthesizer_power: f64,
    /// Circuit power per antenna RF chain, watts.
    pub chain_power: f64,
    /// Maximum transmit power per element, watts.
    pub element_power: f64,
    pub elements_per_subarray: usize,
    pub subarrays: usize,
}

impl PowerModelParams {
    pub fn new(
        amplifier_efficiency: f64,
        synthesizer_power: f64,
        chain_power: f64,
        element_power: f64,
        elements_per_subarray: usize,
        subarrays: usize,
    ) -> Result<Self> {
        if !(amplifier_efficiency > 0.0 && amplifier_efficiency <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "amplifier efficiency must be in (0, 1], got {amplifier_efficiency}"
            )));
        }
        if synthesizer_power <= 0.0 || chain_power <= 0.0 || element_power <= 0.0 {
            return Err(Error::InvalidInput("power model terms must be positive".into()));
        }
        Ok(Self {
            amplifier_efficiency,
            synthesizer_power,
            chain_power,
            element_power,
            elements_per_subarray,
            subarrays,
        })
    }

    /// Per-subarray transmit-power cap, watts.
    pub fn subarray_power_cap(&self) -> f64 {
        self.elements_per_subarray as f64 * self.element_power
    }

    /// Total transmit-power cap, watts.
    pub fn total_power_cap(&self) -> f64 {
        self.subarrays as f64 * self.subarray_power_cap()
    }

    /// Fixed circuit power of one active subarray, watts.
    pub fn subarray_circuit_power(&self) -> f64 {
        2.0 * self.synthesizer_power + self.elements_per_subarray as f64 * self.chain_power
    }
}

/// Logistic rectifier parameters, with the zero-input offset precomputed.
#[derive(Debug, Clone)]
pub struct EhModelParams {
    /// Saturation DC power, watts.
    pub zeta_max: f64,
    /// Logistic steepness, 1/watts.
    pub a: f64,
    /// Logistic midpoint, watts.
    pub b: f64,
    /// `1 / (1 + e^{a b})`, the zero-input/zero-output offset.
    pub phi: f64,
}

impl EhModelParams {
    pub fn new(zeta_max: f64, a: f64, b: f64) -> Result<Self> {
        if zeta_max <= 0.0 || a <= 0.0 {
            return Err(Error::InvalidInput(
                "harvest model requires zeta_max > 0 and a > 0".into(),
            ));
        }
        let phi = 1.0 / (1.0 + (a * b).exp());
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::InvalidInput(format!(
                "degenerate harvest offset phi={phi}"
            )));
        }
        Ok(Self { zeta_max, a, b, phi })
    }
}

/// Per-user quality-of-service floors.
#[derive(Debug, Clone)]
pub struct QosThresholds {
    /// Minimum downlink rate per information user, bits/s/Hz.
    pub rate_floor: Vec<f64>,
    /// Minimum harvested DC power per harvesting user, watts.
    pub energy_floor: Vec<f64>,
}

/// Downlink spectral efficiency of information user `l`, bits/s/Hz.
pub fn downlink_rate(
    l: usize,
    pa: &PowerAllocation,
    act: &ActivationState,
    view: ActivationView,
    tables: &GainTables,
) -> f64 {
    downlink_rate_weighted(l, pa, &weights_of(act, view), tables)
}

/// Rate with explicit per-subarray activation weights.
pub fn downlink_rate_weighted(
    l: usize,
    pa: &PowerAllocation,
    weights: &[f64],
    tables: &GainTables,
) -> f64 {
    let (coherent, noncoherent) = rate_signal_terms(l, pa, weights, tables);
    (1.0 + coherent / noncoherent).log2()
}

/// The desired-signal term and the interference-plus-noise term of user `l`'s
/// SINR, both in watts.
pub fn rate_signal_terms(
    l: usize,
    pa: &PowerAllocation,
    weights: &[f64],
    tables: &GainTables,
) -> (f64, f64) {
    let s_count = tables.subarrays;
    let id = tables.id_users;
    let mut coherent = 0.0;
    let mut noncoherent = tables.noise_power[l];
    for s in 0..s_count {
        let w = weights[s];
        if w == 0.0 {
            continue;
        }
        coherent += w * pa.id[(s, l)] * tables.direct_gain(s, l, l);
        for lp in 0..id {
            if lp != l {
                noncoherent += w * pa.id[(s, lp)] * tables.direct_gain(s, l, lp);
            }
        }
        for mp in 0..tables.eh_users {
            noncoherent += w * pa.eh[(s, mp)] * tables.direct_gain(s, l, id + mp);
        }
    }
    (coherent, noncoherent)
}

/// RF input power at harvesting user `m`, watts. Noise is not harvested.
pub fn input_energy(
    m: usize,
    pa: &PowerAllocation,
    act: &ActivationState,
    view: ActivationView,
    tables: &GainTables,
) -> Result<f64> {
    input_energy_weighted(m, pa, &weights_of(act, view), tables)
}

/// Input energy with explicit activation weights, via the pairwise subarray
/// coupling table. The pairwise sum is complex; conjugate pairs cancel, and a
/// surviving imaginary residue flags an inconsistent table.
pub fn input_energy_weighted(
    m: usize,
    pa: &PowerAllocation,
    weights: &[f64],
    tables: &GainTables,
) -> Result<f64> {
    let s_count = tables.subarrays;
    let id = tables.id_users;
    let k = tables.users();
    let mut total = num_complex::Complex64::new(0.0, 0.0);
    let mut magnitude = 0.0f64;
    let mut amp = vec![0.0f64; s_count];
    for beam in 0..k {
        for (s, a) in amp.iter_mut().enumerate() {
            let p = if beam < id {
                pa.id[(s, beam)]
            } else {
                pa.eh[(s, beam - id)]
            };
            *a = weights[s] * p.max(0.0).sqrt();
        }
        for s in 0..s_count {
            if amp[s] == 0.0 {
                continue;
            }
            for s2 in 0..s_count {
                if amp[s2] == 0.0 {
                    continue;
                }
                let term = tables.cross_gain(s, s2, m, beam) * (amp[s] * amp[s2]);
                total += term;
                magnitude += term.norm();
            }
        }
    }
    if total.im.abs() > 1e-9 * magnitude.max(1e-300) {
        return Err(Error::InternalConsistency(format!(
            "input energy at harvesting user {m} has imaginary residue {:.3e} (scale {:.3e})",
            total.im, magnitude
        )));
    }
    Ok(total.re.max(0.0))
}

/// Harvested DC power for a given RF input, watts.
pub fn eh_forward(input: f64, params: &EhModelParams) -> f64 {
    let logistic = params.zeta_max / (1.0 + (-params.a * (input - params.b)).exp());
    (logistic - params.zeta_max * params.phi) / (1.0 - params.phi)
}

/// Exact inverse of [`eh_forward`]: the RF input that harvests `output` watts.
pub fn eh_inverse(output: f64, params: &EhModelParams) -> Result<f64> {
    if output < 0.0 {
        return Err(Error::InvalidInput(format!(
            "harvested power must be nonnegative, got {output}"
        )));
    }
    if output >= params.zeta_max {
        return Err(Error::InfeasibleThreshold(format!(
            "harvest floor {output} W is at or above the saturation level {} W",
            params.zeta_max
        )));
    }
    let shifted = (1.0 - params.phi) * output + params.zeta_max * params.phi;
    Ok(params.b + (shifted / (params.zeta_max - shifted)).ln() / params.a)
}

/// Total consumed power of the array for a binary activation state, watts.
pub fn power_consumption(
    pa: &PowerAllocation,
    act: &ActivationState,
    params: &PowerModelParams,
) -> f64 {
    power_consumption_weighted(pa, &act.binary_weights(), params)
}

/// Consumed power with arbitrary activation weights (the solver's objective).
pub fn power_consumption_weighted(
    pa: &PowerAllocation,
    weights: &[f64],
    params: &PowerModelParams,
) -> f64 {
    let circuit = params.subarray_circuit_power();
    weights
        .iter()
        .enumerate()
        .map(|(s, &w)| w * (pa.row_sum(s) / params.amplifier_efficiency + circuit))
        .sum()
}

/// Radiated power summed over active subarrays, watts.
pub fn transmit_power(pa: &PowerAllocation, act: &ActivationState) -> f64 {
    act.binary
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(s, _)| pa.row_sum(s))
        .sum()
}

/// Fraction of the saturation level a derived harvest floor is capped at.
/// Deep in saturation the logistic pins to the ceiling in floats, and a
/// floor exactly at the ceiling has no finite required input.
pub const HARVEST_FLOOR_CAP: f64 = 1.0 - 1e-9;

/// Quality-of-service floors achieved by equal allocation across every beam
/// of every subarray with the whole array switched on.
pub fn compute_thresholds(
    tables: &GainTables,
    power: &PowerModelParams,
    eh: &EhModelParams,
) -> Result<QosThresholds> {
    let k = tables.users();
    let per_beam = power.subarray_power_cap() / k as f64;
    let pa = PowerAllocation::equal(tables.subarrays, tables.id_users, tables.eh_users, per_beam);
    let act = ActivationState::full(tables.subarrays);
    let rate_floor = (0..tables.id_users)
        .map(|l| downlink_rate(l, &pa, &act, ActivationView::Binary, tables))
        .collect();
    let energy_floor = (0..tables.eh_users)
        .map(|m| {
            input_energy(m, &pa, &act, ActivationView::Binary, tables)
                .map(|x| eh_forward(x, eh).min(HARVEST_FLOOR_CAP * eh.zeta_max))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QosThresholds {
        rate_floor,
        energy_floor,
    })
}

/// Cone constant of a rate floor: the rate constraint `R >= R_th` is
/// equivalent to `noncoherent <= Xi^2 * coherent` with `Xi^2 = 1/(2^R_th - 1)`.
/// A zero floor is unconstrained and maps to infinity.
pub fn rate_threshold_coefficient(rate_floor: f64) -> f64 {
    if rate_floor <= 0.0 {
        return f64::INFINITY;
    }
    1.0 / (2f64.powf(rate_floor) - 1.0).sqrt()
}

/// Cone constant of a harvest floor: the amplitude whose square is the RF
/// input required to harvest `energy_floor` watts.
pub fn energy_threshold_amplitude(energy_floor: f64, params: &EhModelParams) -> Result<f64> {
    Ok(eh_inverse(energy_floor, params)?.max(0.0).sqrt())
}
