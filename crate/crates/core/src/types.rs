//! Data model shared across the toolkit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: "matrix".into(),
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch("ragged matrix rows".into()));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `self · x`; panics if `x.len() != cols`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        self.data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }
}

/// Input image, row-major `(c, h, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let expected = channels * height * width;
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                what: "image".into(),
                expected,
                actual: values.len(),
            });
        }
        check_finite("image", &values)?;
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    /// A `1 × 1 × n` tensor around a flat vector.
    pub fn flat(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(1, 1, n, values)
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, c: usize, h: usize, w: usize) -> f64 {
        self.values[(c * self.height + h) * self.width + w]
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            values,
            ..*self
        }
    }
}

/// One sample's penultimate activation, its perturbed counterpart, and its logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub a: Vec<f64>,
    pub a_eps: Option<Vec<f64>>,
    pub z: Vec<f64>,
}

impl ActivationRecord {
    pub fn new(a: Vec<f64>, a_eps: Option<Vec<f64>>, z: Vec<f64>) -> Result<Self> {
        if let Some(pert) = &a_eps {
            if pert.len() != a.len() {
                return Err(Error::ShapeMismatch {
                    what: "perturbed activation".into(),
                    expected: a.len(),
                    actual: pert.len(),
                });
            }
            check_finite("perturbed activation", pert)?;
        }
        check_finite("activation", &a)?;
        check_finite("logits", &z)?;
        Ok(Self { a, a_eps, z })
    }

    pub fn perturbed(&self) -> Result<&[f64]> {
        self.a_eps.as_deref().ok_or(Error::MissingPerturbed)
    }
}

/// Final linear classifier `z = W a + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl HeadParams {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::ShapeMismatch {
                what: "head bias".into(),
                expected: weight.rows(),
                actual: bias.len(),
            });
        }
        check_finite("head weight", weight.as_slice())?;
        check_finite("head bias", &bias)?;
        Ok(Self { weight, bias })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            weight: Matrix::identity(n),
            bias: vec![0.0; n],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn logits(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "activation length {} vs head input {}",
                a.len(),
                self.dim()
            )));
        }
        let mut z = self.weight.matvec(a);
        for (zi, bi) in z.iter_mut().zip(&self.bias) {
            *zi += bi;
        }
        Ok(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelMode {
    Trivial,
    Random,
    Salient,
    All,
}

impl PixelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PixelMode::Trivial => "trivial",
            PixelMode::Random => "random",
            PixelMode::Salient => "salient",
            PixelMode::All => "all",
        }
    }
}

impl fmt::Display for PixelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PixelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trivial" => Ok(PixelMode::Trivial),
            "random" => Ok(PixelMode::Random),
            "salient" => Ok(PixelMode::Salient),
            "all" => Ok(PixelMode::All),
            other => Err(Error::InvalidHyperparams(format!("unknown pixel mode {other:?}"))),
        }
    }
}

/// Hyperparameters of the adaptive method.
///
/// Defaults are the cross-architecture values (λ = 10, k₁ = 1 %, k₂ = 5 %,
/// o = 5 %, ε = 0.5) with the percentile band (60, 85).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda: f64,
    pub k1_frac: f64,
    pub k2_frac: f64,
    pub o_frac: f64,
    pub epsilon: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub pixel_mode: PixelMode,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            k1_frac: 0.01,
            k2_frac: 0.05,
            o_frac: 0.05,
            epsilon: 0.5,
            p_min: 60.0,
            p_max: 85.0,
            pixel_mode: PixelMode::Trivial,
            seed: 0,
        }
    }
}

impl Hyperparams {
    /// Checks ranges. `p_min == p_max` is accepted: the band then collapses
    /// onto a fixed percentile.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidHyperparams(msg));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be a finite nonnegative number, got {}", self.lambda));
        }
        for (name, v) in [
            ("k1", self.k1_frac),
            ("k2", self.k2_frac),
            ("o", self.o_frac),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} fraction must lie in (0, 1], got {v}"));
            }
        }
        if !self.epsilon.is_finite() {
            return bad(format!("epsilon must be finite, got {}", self.epsilon));
        }
        if !(0.0..=100.0).contains(&self.p_min) || !(0.0..=100.0).contains(&self.p_max) {
            return bad(format!(
                "percentiles must lie in [0, 100], got ({}, {})",
                self.p_min, self.p_max
            ));
        }
        if self.p_min > self.p_max {
            return bad(format!("p_min {} exceeds p_max {}", self.p_min, self.p_max));
        }
        Ok(())
    }

    /// Q′ depends on λ, k₁, k₂, o, ε and the pixel mode; a calibration is
    /// only valid for scoring runs that agree on all of them. The percentile
    /// band and seed are free.
    pub fn check_calibration_compatible(&self, calibrated: &Hyperparams) -> Result<()> {
        let fields = [
            ("lambda", self.lambda, calibrated.lambda),
            ("k1", self.k1_frac, calibrated.k1_frac),
            ("k2", self.k2_frac, calibrated.k2_frac),
            ("o", self.o_frac, calibrated.o_frac),
            ("epsilon", self.epsilon, calibrated.epsilon),
        ];
        for (name, ours, theirs) in fields {
            if ours.to_bits() != theirs.to_bits() {
                return Err(Error::CalibrationMismatch(format!(
                    "{name} = {ours} but calibration used {theirs}"
                )));
            }
        }
        if self.pixel_mode != calibrated.pixel_mode {
            return Err(Error::CalibrationMismatch(format!(
                "pixel mode {} but calibration used {}",
                self.pixel_mode, calibrated.pixel_mode
            )));
        }
        Ok(())
    }
}

/// Converts a fraction of `len` into a count, never below 1 nor above `len`.
pub fn count_from_frac(frac: f64, len: usize) -> usize {
    ((frac * len as f64).round() as usize).clamp(1, len.max(1))
}

/// Sorted Q′ values of ID validation samples backing the eCDF.
///
/// Built with [`crate::oodness::build_ecdf`].
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub(crate) q_values: Vec<f64>,
    pub(crate) hyperparams: Hyperparams,
}

impl Calibration {
    pub fn q_values(&self) -> &[f64] {
        &self.q_values
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn len(&self) -> usize {
        self.q_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_values.is_empty()
    }
}

/// Scoring methods. Every score follows "higher = more OOD".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Msp,
    Mls,
    Energy,
    React,
    AshS,
    Scale,
    Lts,
    AdascaleA,
    AdascaleL,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Msp,
        Method::Mls,
        Method::Energy,
        Method::React,
        Method::AshS,
        Method::Scale,
        Method::Lts,
        Method::AdascaleA,
        Method::AdascaleL,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Msp => "msp",
            Method::Mls => "mls",
            Method::Energy => "energy",
            Method::React => "react",
            Method::AshS => "ash_s",
            Method::Scale => "scale",
            Method::Lts => "lts",
            Method::AdascaleA => "adascale_a",
            Method::AdascaleL => "adascale_l",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Method::AdascaleA | Method::AdascaleL)
    }

    pub fn needs_fixed_percentile(self) -> bool {
        matches!(self, Method::AshS | Method::Scale | Method::Lts)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidHyperparams(format!("unknown method {s:?}")))
    }
}

/// Per-sample score plus the shaping audit fields when the method has them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRow {
    pub score: f64,
    pub percentile_used: Option<f64>,
    pub r: Option<f64>,
}

impl ScoreRow {
    pub fn plain(score: f64) -> Self {
        Self {
            score,
            percentile_used: None,
            r: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub method: Method,
    pub rows: Vec<ScoreRow>,
}

impl ScoreSet {
    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub auroc: f64,
    pub fpr_at_95: f64,
    pub tau: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

/// Everything a scoring run needs besides the data.
#[derive(Debug, Clone)]
pub struct MethodConfig {
    pub method: Method,
    pub hyperparams: Hyperparams,
    pub calibration: Option<Calibration>,
    pub fixed_p: Option<f64>,
    pub clip: Option<f64>,
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            hyperparams: Hyperparams::default(),
            calibration: None,
            fixed_p: None,
            clip: None,
        }
    }

    pub fn with_hyperparams(mut self, hp: Hyperparams) -> Self {
        self.hyperparams = hp;
        self
    }

    pub fn with_calibration(mut self, cal: Calibration) -> Self {
        self.calibration = Some(cal);
        self
    }

    pub fn with_fixed_p(mut self, p: f64) -> Self {
        self.fixed_p = Some(p);
        self
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        self.clip = Some(clip);
        self
    }

    /// Ensures the optionals required by `method` are present and consistent.
    pub fn validate(&self) -> Result<()> {
        let missing = |what: &str| Error::MissingMethodParam {
            method: self.method.to_string(),
            what: what.to_string(),
        };
        if self.method.is_adaptive() {
            self.hyperparams.validate()?;
            let cal = self.calibration.as_ref().ok_or_else(|| missing("a calibration"))?;
            self.hyperparams
                .check_calibration_compatible(cal.hyperparams())?;
        }
        if self.method.needs_fixed_percentile() {
            let p = self.fixed_p.ok_or_else(|| missing("a fixed percentile"))?;
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::PercentileOutOfRange(p));
            }
        }
        if self.method == Method::React {
            let clip = self.clip.ok_or_else(|| missing("a clip threshold"))?;
            if !clip.is_finite() {
                return Err(Error::InvalidHyperparams(format!("clip must be finite, got {clip}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            what: what.to_string(),
            index,
        }),
        None => Ok(()),
    }
}
