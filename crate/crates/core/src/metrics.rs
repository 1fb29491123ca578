//! Threshold-free and fixed-recall detection metrics.
//!
//! Scores follow "higher = more OOD"; ID samples are the positive class for
//! the 95 % recall operating point.

use std::cmp::Ordering;

use crate::error::{Error, Result};

fn check_sides(id: &[f64], ood: &[f64]) -> Result<()> {
    if id.is_empty() || ood.is_empty() {
        return Err(Error::EmptyInput(format!(
            "metric needs both sides (n_id = {}, n_ood = {})",
            id.len(),
            ood.len()
        )));
    }
    Ok(())
}

/// Probability that a random OOD score exceeds a random ID score, ties
/// counted as one half. Computed from the Mann–Whitney rank sum.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_sides(id_scores, ood_scores)?;
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));

    // twice the rank sum keeps midranks integral
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1, midrank × 2 = i + j + 2
        let twice_mid = (i + j + 2) as u128;
        let ood_in_group = all[i..=j].iter().filter(|e| e.1).count() as u128;
        twice_rank_sum += twice_mid * ood_in_group;
        i = j + 1;
    }
    let (n_id, n_ood) = (id_scores.len() as u128, ood_scores.len() as u128);
    let twice_u = twice_rank_sum - n_ood * (n_ood + 1);
    Ok(twice_u as f64 / (2 * n_id * n_ood) as f64)
}

/// Number of ID samples that must be accepted: `⌈0.95 · n⌉`.
pub fn required_id_count(n_id: usize) -> usize {
    (95 * n_id).div_ceil(100)
}

/// Returns `(fpr, τ)`: τ is the smallest score with at least 95 % of ID
/// scores `≤ τ`, and fpr the fraction of OOD scores `≤ τ`.
pub fn fpr_at_95_tpr(id_scores: &[f64], ood_scores: &[f64]) -> Result<(f64, f64)> {
    check_sides(id_scores, ood_scores)?;
    let mut sorted = id_scores.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let tau = sorted[required_id_count(sorted.len()) - 1];
    let accepted = ood_scores.iter().filter(|&&s| s <= tau).count();
    Ok((accepted as f64 / ood_scores.len() as f64, tau))
}
