//! OODness estimate from perturbation-induced activation shift, and the
//! empirical CDF that turns it into a probability.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::types::{check_finite, count_from_frac, Calibration, Hyperparams};

/// Shift term, correction term and their weighted sum `q_prime = λ·q + c_o`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OodnessEstimate {
    pub q: f64,
    pub c_o: f64,
    pub q_prime: f64,
}

/// Indices of the `k` largest entries, largest first; equal values keep index order.
pub fn top_k_indices(a: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > a.len() {
        return Err(Error::KOutOfRange { k, len: a.len() });
    }
    let by_rank = |&i: &usize, &j: &usize| {
        a[j].partial_cmp(&a[i])
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    };
    let mut idx: Vec<usize> = (0..a.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, by_rank);
        idx.truncate(k);
    }
    idx.sort_unstable_by(by_rank);
    Ok(idx)
}

fn check_pair(a: &[f64], a_eps: &[f64]) -> Result<()> {
    if a.len() != a_eps.len() {
        return Err(Error::DimensionMismatch(format!(
            "activation length {} vs perturbed {}",
            a.len(),
            a_eps.len()
        )));
    }
    Ok(())
}

/// Σ |a_eps − a| over the top-`k1` coordinates of `a`.
pub fn compute_q(a: &[f64], a_eps: &[f64], k1: usize) -> Result<f64> {
    check_pair(a, a_eps)?;
    Ok(top_k_indices(a, k1)?
        .into_iter()
        .map(|j| (a_eps[j] - a[j]).abs())
        .sum())
}

/// Σ ReLU(a_eps) over the top-`k2` coordinates of `a`.
pub fn compute_co(a: &[f64], a_eps: &[f64], k2: usize) -> Result<f64> {
    check_pair(a, a_eps)?;
    Ok(top_k_indices(a, k2)?
        .into_iter()
        .map(|j| a_eps[j].max(0.0))
        .sum())
}

/// Q′ with `k1`, `k2` derived from the fractions in `hp`.
pub fn compute_qprime(a: &[f64], a_eps: &[f64], hp: &Hyperparams) -> Result<OodnessEstimate> {
    check_pair(a, a_eps)?;
    let d = a.len();
    if d == 0 {
        return Err(Error::EmptyInput("activation".into()));
    }
    let k1 = count_from_frac(hp.k1_frac, d);
    let k2 = count_from_frac(hp.k2_frac, d);
    // both index sets are prefixes of the same ranking
    let top = top_k_indices(a, k1.max(k2))?;
    let q: f64 = top[..k1].iter().map(|&j| (a_eps[j] - a[j]).abs()).sum();
    let c_o: f64 = top[..k2].iter().map(|&j| a_eps[j].max(0.0)).sum();
    Ok(OodnessEstimate {
        q,
        c_o,
        q_prime: hp.lambda * q + c_o,
    })
}

/// Sorts the calibration values; duplicates are kept.
pub fn build_ecdf(q_values: &[f64], hyperparams: Hyperparams) -> Result<Calibration> {
    if q_values.is_empty() {
        return Err(Error::EmptyInput("calibration values".into()));
    }
    check_finite("calibration values", q_values)?;
    let mut sorted = q_values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(Calibration {
        q_values: sorted,
        hyperparams,
    })
}

/// Fraction of calibration values `≤ q`.
pub fn ecdf_eval(cal: &Calibration, q: f64) -> f64 {
    let count = cal.q_values.partition_point(|&v| v <= q);
    count as f64 / cal.q_values.len() as f64
}
