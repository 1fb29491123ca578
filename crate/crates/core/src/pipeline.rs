//! Batch pipelines over dumps: calibrate, score, evaluate, sweep, plus the
//! calibration / score / report file formats.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dump::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{auroc, fpr_at_95_tpr};
use crate::net::ReferenceNet;
use crate::oodness::{build_ecdf, compute_qprime};
use crate::perturb::perturbed_activation;
use crate::scoring::score_record;
use crate::shaping::percentile;
use crate::types::{
    ActivationRecord, Calibration, EvalReport, Hyperparams, Method, MethodConfig, ScoreRow,
    ScoreSet,
};

pub const CALIBRATION_VERSION: u32 = 1;
pub const SCORE_CSV_HEADER: [&str; 5] = ["sample_index", "method", "score", "percentile_used", "r"];

/// Fills in perturbed activations by running every stored image through
/// `net` with the perturbation recipe of `hp`. The sample ordinal used for
/// seeding is the record index.
pub fn generate_perturbed(dataset: &Dataset, net: &ReferenceNet, hp: &Hyperparams) -> Result<Dataset> {
    let images = dataset.images.as_ref().ok_or(Error::MissingPerturbed)?;
    let records = images
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let (a, a_eps, z) = perturbed_activation(net, x, hp, i as u64)?;
            ActivationRecord::new(a, Some(a_eps), z)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_parts(
        &dataset.manifest.split,
        records,
        net.head(),
        dataset.labels.clone(),
        dataset.images.clone(),
    )
}

/// Uses the dump's perturbed activations, or generates them with `net`.
fn with_perturbed<'a>(
    dataset: &'a Dataset,
    hp: &Hyperparams,
    net: Option<&ReferenceNet>,
) -> Result<std::borrow::Cow<'a, Dataset>> {
    if dataset.has_perturbed() {
        return Ok(std::borrow::Cow::Borrowed(dataset));
    }
    match (net, &dataset.images) {
        (Some(net), Some(_)) => Ok(std::borrow::Cow::Owned(generate_perturbed(dataset, net, hp)?)),
        _ => Err(Error::MissingPerturbed),
    }
}

/// Q′ of every record in order.
pub fn qprime_values(dataset: &Dataset, hp: &Hyperparams) -> Result<Vec<f64>> {
    dataset
        .records
        .par_iter()
        .map(|r| Ok(compute_qprime(&r.a, r.perturbed()?, hp)?.q_prime))
        .collect()
}

/// Builds the eCDF calibration from an ID dump.
pub fn run_calibration(
    id_dump: &Dataset,
    hp: &Hyperparams,
    net: Option<&ReferenceNet>,
) -> Result<Calibration> {
    hp.validate()?;
    let data = with_perturbed(id_dump, hp, net)?;
    build_ecdf(&qprime_values(&data, hp)?, *hp)
}

/// One score per record, in record order.
pub fn run_scoring(dataset: &Dataset, cfg: &MethodConfig) -> Result<ScoreSet> {
    run_scoring_with(dataset, cfg, None)
}

/// As [`run_scoring`], generating perturbed activations through `net` when
/// an adaptive method needs them and the dump lacks them.
pub fn run_scoring_with(
    dataset: &Dataset,
    cfg: &MethodConfig,
    net: Option<&ReferenceNet>,
) -> Result<ScoreSet> {
    cfg.validate()?;
    let data = if cfg.method.is_adaptive() {
        with_perturbed(dataset, &cfg.hyperparams, net)?
    } else {
        std::borrow::Cow::Borrowed(dataset)
    };
    let rows = data
        .records
        .par_iter()
        .map(|r| score_record(r, &data.head, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreSet {
        method: cfg.method,
        rows,
    })
}

pub fn run_evaluation(id_scores: &ScoreSet, ood_scores: &ScoreSet) -> Result<EvalReport> {
    if id_scores.method != ood_scores.method {
        return Err(Error::MethodMismatch(
            id_scores.method.to_string(),
            ood_scores.method.to_string(),
        ));
    }
    let (id, ood) = (id_scores.scores(), ood_scores.scores());
    let (fpr_at_95, tau) = fpr_at_95_tpr(&id, &ood)?;
    Ok(EvalReport {
        method: id_scores.method,
        auroc: auroc(&id, &ood)?,
        fpr_at_95,
        tau,
        n_id: id.len(),
        n_ood: ood.len(),
    })
}

/// `60, 65, …, 95`.
pub fn default_p_max_grid() -> Vec<f64> {
    (60..100).step_by(5).map(f64::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub p_max: f64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub best_p_max: f64,
    pub rows: Vec<SweepRow>,
}

/// Evaluates each `p_max` of the grid with `template`'s `p_min` held fixed and
/// picks the highest validation AUROC; ties go to the smaller `p_max`.
pub fn run_sweep(
    id_dump: &Dataset,
    val_ood_dump: &Dataset,
    template: &MethodConfig,
    p_max_grid: &[f64],
) -> Result<SweepResult> {
    if p_max_grid.is_empty() {
        return Err(Error::EmptyInput("p_max grid".into()));
    }
    if !template.method.is_adaptive() {
        return Err(Error::MethodMismatch(
            template.method.to_string(),
            "adascale_a | adascale_l".into(),
        ));
    }
    let p_min = template.hyperparams.p_min;
    if let Some(bad) = p_max_grid.iter().find(|&&p| !(p >= p_min && p <= 100.0)) {
        return Err(Error::InvalidHyperparams(format!(
            "grid value {bad} outside [{p_min}, 100]"
        )));
    }
    let mut grid = p_max_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut rows = Vec::with_capacity(grid.len());
    for p_max in grid {
        let mut cfg = template.clone();
        cfg.hyperparams.p_max = p_max;
        let id = run_scoring(id_dump, &cfg)?;
        let ood = run_scoring(val_ood_dump, &cfg)?;
        rows.push(SweepRow {
            p_max,
            report: run_evaluation(&id, &ood)?,
        });
    }
    // ascending grid + strict improvement keeps the smaller p_max on ties
    let mut best = &rows[0];
    for row in &rows[1..] {
        if row.report.auroc > best.report.auroc {
            best = row;
        }
    }
    Ok(SweepResult {
        best_p_max: best.p_max,
        rows,
    })
}

/// Conventional ReAct threshold: the given percentile of every ID activation.
pub fn react_clip_from(id_dump: &Dataset, pct: f64) -> Result<f64> {
    let all: Vec<f64> = id_dump.records.iter().flat_map(|r| r.a.iter().copied()).collect();
    percentile(&all, pct)
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationFile {
    version: u32,
    hyperparams: Hyperparams,
    q_values: Vec<f64>,
}

pub fn calibration_to_json(cal: &Calibration) -> String {
    let file = CalibrationFile {
        version: CALIBRATION_VERSION,
        hyperparams: *cal.hyperparams(),
        q_values: cal.q_values().to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("calibration serializes")
}

pub fn save_calibration(path: impl AsRef<Path>, cal: &Calibration) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, calibration_to_json(cal) + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<Calibration> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CalibrationFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if file.version != CALIBRATION_VERSION {
        return Err(Error::Unsupported(format!("calibration version {}", file.version)));
    }
    file.hyperparams.validate()?;
    build_ecdf(&file.q_values, file.hyperparams)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_scores_csv<W: Write>(out: W, scores: &ScoreSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(SCORE_CSV_HEADER).map_err(csv_err)?;
    for (i, row) in scores.rows.iter().enumerate() {
        w.write_record([
            i.to_string(),
            scores.method.to_string(),
            row.score.to_string(),
            fmt_opt(row.percentile_used),
            fmt_opt(row.r),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn save_scores(path: impl AsRef<Path>, scores: &ScoreSet) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_scores_csv(std::io::BufWriter::new(file), scores)
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoreSet> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let bad = |msg: String| Error::Csv(format!("{}: {msg}", path.display()));
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(SCORE_CSV_HEADER) {
        return Err(bad(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut method: Option<Method> = None;
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let index: usize = rec[0].parse().map_err(|_| bad(format!("bad sample_index {:?}", &rec[0])))?;
        if index != line {
            return Err(bad(format!("sample_index {index} out of order at row {line}")));
        }
        let m: Method = rec[1].parse()?;
        match method {
            None => method = Some(m),
            Some(prev) if prev != m => {
                return Err(Error::MethodMismatch(prev.to_string(), m.to_string()))
            }
            _ => {}
        }
        let num = |s: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| bad(format!("bad number {s:?}")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite value {s:?}")));
            }
            Ok(v)
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        rows.push(ScoreRow {
            score: num(&rec[2])?,
            percentile_used: opt(&rec[3])?,
            r: opt(&rec[4])?,
        });
    }
    let method = method.ok_or_else(|| bad("no rows".into()))?;
    Ok(ScoreSet { method, rows })
}

pub fn save_report(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
