//! Per-sample OOD scores. Every score follows "higher = more OOD".

use crate::error::{Error, Result};
use crate::oodness::{compute_qprime, ecdf_eval};
use crate::shaping::{
    adaptive_percentile, apply_route, ash_s, react_clip, scaling_factor, shape_scale_fixed,
    ScaleRoute, ShapingOutcome,
};
use crate::types::{ActivationRecord, HeadParams, Method, MethodConfig, ScoreRow};

/// `log Σ e^{z_i}` with the maximum factored out.
pub fn logsumexp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Negative free energy: `−logsumexp(z)`.
pub fn energy_score(z: &[f64]) -> f64 {
    -logsumexp(z)
}

/// Negative maximum softmax probability.
pub fn msp_score(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    -(m - logsumexp(z)).exp()
}

/// Negative maximum logit.
pub fn mls_score(z: &[f64]) -> f64 {
    -z.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Adaptive scaling of one record: Q′ from `(a, a_eps)`, eCDF lookup,
/// percentile from the band, scaling factor, and the variant's shaping.
/// Returns the energy of the shaped logits with the full outcome.
pub fn adascale_score(
    record: &ActivationRecord,
    head: &HeadParams,
    cfg: &MethodConfig,
) -> Result<(f64, ShapingOutcome)> {
    let route = match cfg.method {
        Method::AdascaleA => ScaleRoute::Activation,
        Method::AdascaleL => ScaleRoute::Logit,
        other => {
            return Err(Error::MethodMismatch(
                other.to_string(),
                "adascale_a | adascale_l".into(),
            ))
        }
    };
    let hp = &cfg.hyperparams;
    let cal = cfg.calibration.as_ref().ok_or_else(|| Error::MissingMethodParam {
        method: cfg.method.to_string(),
        what: "a calibration".into(),
    })?;
    hp.check_calibration_compatible(cal.hyperparams())?;
    check_record(record, head)?;

    let estimate = compute_qprime(&record.a, record.perturbed()?, hp)?;
    let f = ecdf_eval(cal, estimate.q_prime);
    let p = adaptive_percentile(f, hp.p_min, hp.p_max)?;
    let r = scaling_factor(&record.a, p)?;
    let shaped_logits = apply_route(route, &record.a, &record.z, r, head)?;
    let score = energy_score(&shaped_logits);
    Ok((
        score,
        ShapingOutcome {
            percentile_used: p,
            r,
            shaped_logits,
        },
    ))
}

fn check_record(record: &ActivationRecord, head: &HeadParams) -> Result<()> {
    if record.a.len() != head.dim() || record.z.len() != head.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "record D={} C={} vs head D={} C={}",
            record.a.len(),
            record.z.len(),
            head.dim(),
            head.num_classes()
        )));
    }
    Ok(())
}

fn required<T: Copy>(value: Option<T>, method: Method, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::MissingMethodParam {
        method: method.to_string(),
        what: what.to_string(),
    })
}

/// Scores one record with any method.
pub fn score_record(
    record: &ActivationRecord,
    head: &HeadParams,
    cfg: &MethodConfig,
) -> Result<ScoreRow> {
    let method = cfg.method;
    let row = match method {
        Method::Msp => ScoreRow::plain(msp_score(&record.z)),
        Method::Mls => ScoreRow::plain(mls_score(&record.z)),
        Method::Energy => ScoreRow::plain(energy_score(&record.z)),
        Method::React => {
            let clip = required(cfg.clip, method, "a clip threshold")?;
            ScoreRow::plain(energy_score(&react_clip(&record.a, clip, head)?))
        }
        Method::AshS => {
            let p = required(cfg.fixed_p, method, "a fixed percentile")?;
            let row = ScoreRow::plain(energy_score(&ash_s(&record.a, p, head)?));
            ScoreRow {
                percentile_used: Some(p),
                ..row
            }
        }
        Method::Scale | Method::Lts => {
            let p = required(cfg.fixed_p, method, "a fixed percentile")?;
            check_record(record, head)?;
            let route = if method == Method::Scale {
                ScaleRoute::Activation
            } else {
                ScaleRoute::Logit
            };
            outcome_row(&shape_scale_fixed(&record.a, &record.z, p, head, route)?)
        }
        Method::AdascaleA | Method::AdascaleL => outcome_row(&adascale_score(record, head, cfg)?.1),
    };
    Ok(row)
}

fn outcome_row(outcome: &ShapingOutcome) -> ScoreRow {
    ScoreRow {
        score: energy_score(&outcome.shaped_logits),
        percentile_used: Some(outcome.percentile_used),
        r: Some(outcome.r),
    }
}
