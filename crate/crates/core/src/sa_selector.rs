//! Subarray activation: per-subarray contribution scores, threshold
//! decisions against the mean, and scaled activation estimates.

use crate::error::{Error, Result};
use crate::metrics::PowerAllocation;

/// Normalized per-subarray contribution scores.
///
/// `weights` sums to one; `balance` is the harvest-to-information power
/// ratio used to put both service classes on a common scale.
#[derive(Debug, Clone)]
pub struct SurrogateVector {
    pub weights: Vec<f64>,
    pub balance: f64,
}

/// Score each subarray by its balanced share of the allocated power.
///
/// The balance factor is the ratio of total harvesting power to total
/// information power; if one class holds no power, the score collapses to
/// the surviving class.
pub fn surrogate(pa: &PowerAllocation) -> Result<SurrogateVector> {
    let id_total = pa.id.sum();
    let eh_total = pa.eh.sum();
    if id_total + eh_total <= 0.0 {
        return Err(Error::UndefinedSurrogate);
    }
    let balance = if id_total > 0.0 { eh_total / id_total } else { 0.0 };
    // With no harvesting power the balance would zero out everything; keep
    // the information shares instead.
    let id_weight = if eh_total > 0.0 && id_total > 0.0 {
        balance
    } else if id_total > 0.0 {
        1.0
    } else {
        0.0
    };

    let raw: Vec<f64> = (0..pa.subarrays())
        .map(|s| id_weight * pa.id.row(s).sum() + pa.eh.row(s).sum())
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedSurrogate);
    }
    Ok(SurrogateVector {
        weights: raw.iter().map(|v| v / total).collect(),
        balance,
    })
}

/// Switch on the subarrays whose score meets the mean of the normalized
/// scores (1/S); ties stay on, and the maximum always qualifies.
pub fn binary_decision(h: &SurrogateVector) -> Vec<bool> {
    let mean = 1.0 / h.weights.len() as f64;
    h.weights.iter().map(|&w| w >= mean).collect()
}

/// Continuous activation estimates: the score of each switched-on subarray,
/// zero for switched-off ones.
pub fn scale_activation(h: &SurrogateVector, active: &[bool]) -> Vec<f64> {
    h.weights
        .iter()
        .zip(active)
        .map(|(&w, &a)| if a { w } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn equal_allocation_gives_uniform_scores() {
        let pa = PowerAllocation::equal(4, 2, 1, 0.5);
        let h = surrogate(&pa).unwrap();
        for w in &h.weights {
            assert_relative_eq!(*w, 0.25, max_relative = 1e-12);
        }
        assert!(binary_decision(&h).iter().all(|&a| a));
    }

    #[test]
    fn concentrated_allocation_concentrates_the_score() {
        let mut pa = PowerAllocation::zeros(3, 1, 1);
        pa.id[(0, 0)] = 1.0;
        pa.eh[(0, 0)] = 0.5;
        let h = surrogate(&pa).unwrap();
        assert_relative_eq!(h.weights[0], 1.0, max_relative = 1e-12);
        assert_eq!(h.weights[1], 0.0);
        assert_eq!(h.weights[2], 0.0);
        assert_eq!(binary_decision(&h), vec![true, false, false]);
    }

    #[test]
    fn hand_computed_two_subarray_case() {
        // Row sums (ID, EH) = (1, 1) and (3, 1): balance = 2/4 = 0.5,
        // unnormalized scores (1.5, 2.5), normalized (0.375, 0.625).
        let pa = PowerAllocation {
            id: array![[1.0], [3.0]],
            eh: array![[1.0], [1.0]],
        };
        let h = surrogate(&pa).unwrap();
        assert_relative_eq!(h.balance, 0.5, max_relative = 1e-12);
        assert_relative_eq!(h.weights[0], 0.375, max_relative = 1e-12);
        assert_relative_eq!(h.weights[1], 0.625, max_relative = 1e-12);
        let a = binary_decision(&h);
        assert_eq!(a, vec![false, true]);
        let scaled = scale_activation(&h, &a);
        assert_eq!(scaled[0], 0.0);
        assert_relative_eq!(scaled[1], 0.625, max_relative = 1e-12);
    }

    #[test]
    fn decision_compares_each_score_to_the_mean() {
        let h = SurrogateVector {
            weights: vec![0.7, 0.2, 0.1],
            balance: 1.0,
        };
        assert_eq!(binary_decision(&h), vec![true, false, false]);
        let h4 = SurrogateVector {
            weights: vec![0.5, 0.5, 0.0, 0.0],
            balance: 1.0,
        };
        assert_eq!(binary_decision(&h4), vec![true, true, false, false]);
    }

    #[test]
    fn at_least_one_subarray_stays_active() {
        let mut pa = PowerAllocation::zeros(5, 1, 1);
        pa.id[(2, 0)] = 1e-7;
        let h = surrogate(&pa).unwrap();
        assert!(binary_decision(&h).iter().any(|&a| a));
    }

    #[test]
    fn scores_are_scale_invariant() {
        let pa = PowerAllocation {
            id: array![[0.2, 0.5], [0.9, 0.1]],
            eh: array![[0.3], [0.6]],
        };
        let h1 = surrogate(&pa).unwrap();
        let h2 = surrogate(&pa.scale(37.0)).unwrap();
        for (a, b) in h1.weights.iter().zip(&h2.weights) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        assert_eq!(binary_decision(&h1), binary_decision(&h2));
    }

    #[test]
    fn degenerate_class_totals_fall_back() {
        // No information power: harvest shares only.
        let pa = PowerAllocation {
            id: array![[0.0], [0.0]],
            eh: array![[0.2], [0.6]],
        };
        let h = surrogate(&pa).unwrap();
        assert_relative_eq!(h.weights[0], 0.25, max_relative = 1e-12);
        assert_relative_eq!(h.weights[1], 0.75, max_relative = 1e-12);

        // No harvesting power: information shares only.
        let pa2 = PowerAllocation {
            id: array![[0.9], [0.1]],
            eh: array![[0.0], [0.0]],
        };
        let h2 = surrogate(&pa2).unwrap();
        assert_relative_eq!(h2.weights[0], 0.9, max_relative = 1e-12);

        let zero = PowerAllocation::zeros(2, 1, 1);
        assert!(matches!(surrogate(&zero), Err(Error::UndefinedSurrogate)));
    }

    #[test]
    fn scaled_estimates_sum_to_at_most_one() {
        let pa = PowerAllocation {
            id: array![[0.4, 0.1], [0.2, 0.2], [0.05, 0.05]],
            eh: array![[0.5], [0.3], [0.2]],
        };
        let h = surrogate(&pa).unwrap();
        let a = binary_decision(&h);
        let scaled = scale_activation(&h, &a);
        let sum: f64 = scaled.iter().sum();
        assert!(sum <= 1.0 + 1e-12);
        if a.iter().all(|&x| x) {
            assert_relative_eq!(sum, 1.0, max_relative = 1e-12);
        }
    }
}
