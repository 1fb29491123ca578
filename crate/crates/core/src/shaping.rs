//! Percentiles, scaling factors and the activation / logit shaping rules.
//!
//! Every rule that sums or ranks activations first rectifies them with
//! ReLU, so imported non-rectified features behave like post-ReLU ones.

use crate::error::{Error, Result};
use crate::types::{check_finite, HeadParams};

/// Denominators below this are treated as empty.
pub const DEGENERATE_MASS: f64 = 1e-12;

/// Result of shaping one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapingOutcome {
    pub percentile_used: f64,
    pub r: f64,
    pub shaped_logits: Vec<f64>,
}

/// Which quantity the scaling factor is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleRoute {
    /// `a · e^r` propagated through the head.
    Activation,
    /// `z · r²`.
    Logit,
}

pub fn rectify(a: &[f64]) -> Vec<f64> {
    a.iter().map(|&v| v.max(0.0)).collect()
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::PercentileOutOfRange(p));
    }
    Ok(())
}

/// Linear-interpolation percentile of an ascending slice.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyInput("percentile input".into()));
    }
    check_p(p)?;
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    if lo + 1 >= sorted.len() {
        return Ok(sorted[sorted.len() - 1]);
    }
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

/// `p`-th percentile with linear interpolation between order statistics.
pub fn percentile(a: &[f64], p: f64) -> Result<f64> {
    check_finite("percentile input", a)?;
    let mut sorted = a.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

/// `r = Σ a / Σ_{a_j > P_p(a)} a_j` over rectified activations; `r = 1`
/// when nothing strictly exceeds the percentile.
pub fn scaling_factor(a: &[f64], p: f64) -> Result<f64> {
    let mut sorted = rectify(a);
    check_finite("activation", &sorted)?;
    sorted.sort_unstable_by(f64::total_cmp);
    let threshold = percentile_sorted(&sorted, p)?;
    let total: f64 = sorted.iter().sum();
    let start = sorted.partition_point(|&v| v <= threshold);
    let kept: f64 = sorted[start..].iter().sum();
    Ok(if kept < DEGENERATE_MASS { 1.0 } else { total / kept })
}

/// `p = p_min + (1 − F)·(p_max − p_min)`: likely-ID samples (small F) get the
/// higher percentile.
pub fn adaptive_percentile(f: f64, p_min: f64, p_max: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidHyperparams(format!("eCDF value {f} outside [0, 1]")));
    }
    check_p(p_min)?;
    check_p(p_max)?;
    if p_min > p_max {
        return Err(Error::InvalidHyperparams(format!(
            "p_min {p_min} exceeds p_max {p_max}"
        )));
    }
    Ok(p_min + (1.0 - f) * (p_max - p_min))
}

/// `W · (rect(a) · e^r) + b`, evaluated as `e^r · (W rect(a)) + b`.
pub fn shape_adascale_a(a: &[f64], r: f64, head: &HeadParams) -> Result<Vec<f64>> {
    if !r.is_finite() {
        return Err(Error::InvalidHyperparams(format!("scaling factor {r} is not finite")));
    }
    let zero_bias = HeadParams {
        weight: head.weight.clone(),
        bias: vec![0.0; head.num_classes()],
    };
    let scale = r.exp();
    let mut z = zero_bias.logits(&rectify(a))?;
    for (zi, b) in z.iter_mut().zip(&head.bias) {
        *zi = *zi * scale + b;
    }
    Ok(z)
}

/// Every logit multiplied by `r²`.
pub fn shape_adascale_l(z: &[f64], r: f64) -> Vec<f64> {
    let s = r * r;
    z.iter().map(|v| v * s).collect()
}

/// `W · min(a, clip) + b`.
pub fn react_clip(a: &[f64], clip: f64, head: &HeadParams) -> Result<Vec<f64>> {
    let clipped: Vec<f64> = a.iter().map(|&v| v.min(clip)).collect();
    head.logits(&clipped)
}

/// Prune activations at or below the `p`-th percentile and rescale the
/// survivors by `exp(Σ a / Σ survivors)`.
pub fn ash_s(a: &[f64], p: f64, head: &HeadParams) -> Result<Vec<f64>> {
    let a = rectify(a);
    let threshold = percentile(&a, p)?;
    let total: f64 = a.iter().sum();
    let kept: f64 = a.iter().filter(|&&v| v > threshold).sum();
    if kept < DEGENERATE_MASS {
        return head.logits(&a);
    }
    let scale = (total / kept).exp();
    let shaped: Vec<f64> = a
        .iter()
        .map(|&v| if v > threshold { v * scale } else { 0.0 })
        .collect();
    head.logits(&shaped)
}

/// Applies `r` through the chosen route.
pub fn apply_route(
    route: ScaleRoute,
    a: &[f64],
    z: &[f64],
    r: f64,
    head: &HeadParams,
) -> Result<Vec<f64>> {
    match route {
        ScaleRoute::Activation => shape_adascale_a(a, r, head),
        ScaleRoute::Logit => Ok(shape_adascale_l(z, r)),
    }
}

/// Static scaling with a fixed percentile: SCALE for the activation route,
/// LTS for the logit route.
pub fn shape_scale_fixed(
    a: &[f64],
    z: &[f64],
    p: f64,
    head: &HeadParams,
    route: ScaleRoute,
) -> Result<ShapingOutcome> {
    let r = scaling_factor(a, p)?;
    Ok(ShapingOutcome {
        percentile_used: p,
        r,
        shaped_logits: apply_route(route, a, z, r, head)?,
    })
}
