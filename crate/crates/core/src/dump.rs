//! Dump directory format.
//!
//! ```text
//! manifest.json   {version, n_samples, dim_activation, dim_logits, dtype, split, has_perturbed}
//! act.bin         N × D   f32le
//! act_pert.bin    N × D   f32le   (iff has_perturbed)
//! logits.bin      N × C   f32le
//! head_w.bin      C × D   f32le
//! head_b.bin      C       f32le
//! labels.bin      N       i32le   (optional)
//! images.bin      N × C_in·H·W f32le (iff manifest carries image_shape)
//! ```
//!
//! Every payload is row-major. Values are widened to `f64` on load and
//! narrowed back on write, so load-then-write is byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{check_finite, ActivationRecord, HeadParams, ImageTensor, Matrix};

pub const DUMP_VERSION: u32 = 1;
pub const DTYPE_F32LE: &str = "f32le";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ACT_FILE: &str = "act.bin";
pub const ACT_PERT_FILE: &str = "act_pert.bin";
pub const LOGITS_FILE: &str = "logits.bin";
pub const HEAD_W_FILE: &str = "head_w.bin";
pub const HEAD_B_FILE: &str = "head_b.bin";
pub const LABELS_FILE: &str = "labels.bin";
pub const IMAGES_FILE: &str = "images.bin";

/// Tolerance of the `W a + b ≈ z` consistency check.
pub const LOGIT_CHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub n_samples: usize,
    pub dim_activation: usize,
    pub dim_logits: usize,
    pub dtype: String,
    pub split: String,
    pub has_perturbed: bool,
    /// `[C_in, H, W]` of raw inputs stored in `images.bin`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_shape: Option<[usize; 3]>,
}

impl Manifest {
    pub fn new(split: &str, n_samples: usize, dim_activation: usize, dim_logits: usize) -> Self {
        Self {
            version: DUMP_VERSION,
            n_samples,
            dim_activation,
            dim_logits,
            dtype: DTYPE_F32LE.to_string(),
            split: split.to_string(),
            has_perturbed: false,
            image_shape: None,
        }
    }
}

/// Raw file payloads of a dump, before validation.
#[derive(Debug, Clone, Default)]
pub struct RawTensors {
    pub act: Vec<u8>,
    pub act_pert: Option<Vec<u8>>,
    pub logits: Vec<u8>,
    pub head_w: Vec<u8>,
    pub head_b: Vec<u8>,
    pub labels: Option<Vec<u8>>,
    pub images: Option<Vec<u8>>,
}

/// A validated, immutable dump.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub records: Vec<ActivationRecord>,
    pub head: HeadParams,
    pub labels: Option<Vec<i32>>,
    pub images: Option<Vec<ImageTensor>>,
}

impl Dataset {
    /// Builds a dataset from in-memory parts, deriving the manifest.
    pub fn from_parts(
        split: &str,
        records: Vec<ActivationRecord>,
        head: HeadParams,
        labels: Option<Vec<i32>>,
        images: Option<Vec<ImageTensor>>,
    ) -> Result<Self> {
        let mut manifest = Manifest::new(split, records.len(), head.dim(), head.num_classes());
        manifest.has_perturbed = !records.is_empty() && records.iter().all(|r| r.a_eps.is_some());
        manifest.image_shape = images.as_ref().and_then(|imgs| imgs.first()).map(|i| i.shape());
        for (i, rec) in records.iter().enumerate() {
            if rec.a.len() != head.dim() || rec.z.len() != head.num_classes() {
                return Err(Error::DimensionMismatch(format!(
                    "record {i} has D={} C={}, head expects D={} C={}",
                    rec.a.len(),
                    rec.z.len(),
                    head.dim(),
                    head.num_classes()
                )));
            }
            if manifest.has_perturbed != rec.a_eps.is_some() {
                return Err(Error::DimensionMismatch(
                    "perturbed activations present on some records only".into(),
                ));
            }
        }
        if let Some(l) = &labels {
            expect_len("labels", records.len(), l.len())?;
        }
        if let Some(imgs) = &images {
            expect_len("images", records.len(), imgs.len())?;
            let shape = manifest.image_shape;
            if imgs.iter().any(|im| Some(im.shape()) != shape) {
                return Err(Error::DimensionMismatch("images differ in shape".into()));
            }
        }
        Ok(Self {
            manifest,
            records,
            head,
            labels,
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_perturbed(&self) -> bool {
        self.manifest.has_perturbed
    }

    /// Checks `W a + b` against the stored logits for every record.
    pub fn verify_logits(&self, tol: f64) -> Result<()> {
        for (record, rec) in self.records.iter().enumerate() {
            let z = self.head.logits(&rec.a)?;
            let deviation = z
                .iter()
                .zip(&rec.z)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            if deviation > tol {
                return Err(Error::LogitCheck { record, deviation });
            }
        }
        Ok(())
    }

    /// Serializes the tensor payloads.
    pub fn to_raw(&self) -> RawTensors {
        let d = self.manifest.dim_activation;
        let mut act = Vec::with_capacity(self.len() * d * 4);
        let mut logits = Vec::new();
        let mut act_pert = self.manifest.has_perturbed.then(Vec::new);
        for rec in &self.records {
            push_f32(&mut act, &rec.a);
            push_f32(&mut logits, &rec.z);
            if let (Some(buf), Some(p)) = (act_pert.as_mut(), rec.a_eps.as_ref()) {
                push_f32(buf, p);
            }
        }
        let mut head_w = Vec::new();
        push_f32(&mut head_w, self.head.weight.as_slice());
        let mut head_b = Vec::new();
        push_f32(&mut head_b, &self.head.bias);
        let labels = self
            .labels
            .as_ref()
            .map(|l| l.iter().flat_map(|v| v.to_le_bytes()).collect());
        let images = self.images.as_ref().map(|imgs| {
            let mut buf = Vec::new();
            for im in imgs {
                push_f32(&mut buf, im.values());
            }
            buf
        });
        RawTensors {
            act,
            act_pert,
            logits,
            head_w,
            head_b,
            labels,
            images,
        }
    }
}

/// Validates a manifest against its payloads and decodes them.
pub fn validate_dump(manifest: &Manifest, tensors: &RawTensors) -> Result<Dataset> {
    if manifest.version != DUMP_VERSION {
        return Err(Error::Unsupported(format!("version {}", manifest.version)));
    }
    if manifest.dtype != DTYPE_F32LE {
        return Err(Error::Unsupported(format!("dtype {:?}", manifest.dtype)));
    }
    let (n, d, c) = (
        manifest.n_samples,
        manifest.dim_activation,
        manifest.dim_logits,
    );
    let act = decode_f32(ACT_FILE, &tensors.act, n * d)?;
    let logits = decode_f32(LOGITS_FILE, &tensors.logits, n * c)?;
    let head_w = decode_f32(HEAD_W_FILE, &tensors.head_w, c * d)?;
    let head_b = decode_f32(HEAD_B_FILE, &tensors.head_b, c)?;
    let act_pert = match (manifest.has_perturbed, &tensors.act_pert) {
        (true, Some(bytes)) => Some(decode_f32(ACT_PERT_FILE, bytes, n * d)?),
        (true, None) => {
            return Err(Error::Unsupported(format!(
                "manifest declares has_perturbed but {ACT_PERT_FILE} is missing"
            )))
        }
        (false, Some(_)) => {
            return Err(Error::Unsupported(format!(
                "{ACT_PERT_FILE} present but manifest declares has_perturbed = false"
            )))
        }
        (false, None) => None,
    };
    let labels = tensors
        .labels
        .as_ref()
        .map(|bytes| decode_i32(LABELS_FILE, bytes, n))
        .transpose()?;
    let images = match (manifest.image_shape, &tensors.images) {
        (Some([ci, h, w]), Some(bytes)) => {
            let per = ci * h * w;
            let flat = decode_f32(IMAGES_FILE, bytes, n * per)?;
            let imgs = (0..n)
                .map(|i| ImageTensor::new(ci, h, w, flat[i * per..(i + 1) * per].to_vec()))
                .collect::<Result<Vec<_>>>()?;
            Some(imgs)
        }
        (Some(_), None) => {
            return Err(Error::Unsupported(format!(
                "manifest declares image_shape but {IMAGES_FILE} is missing"
            )))
        }
        (None, _) => None,
    };

    let head = HeadParams::new(Matrix::new(c, d, head_w)?, head_b)?;
    let records = (0..n)
        .map(|i| {
            let a = act[i * d..(i + 1) * d].to_vec();
            let z = logits[i * c..(i + 1) * c].to_vec();
            let a_eps = act_pert.as_ref().map(|p| p[i * d..(i + 1) * d].to_vec());
            ActivationRecord::new(a, a_eps, z)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        manifest: manifest.clone(),
        records,
        head,
        labels,
        images,
    })
}

pub fn read_dump(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read(&p).map_err(|e| Error::io(p, e))
    };
    let read_opt = |name: &str| -> Result<Option<Vec<u8>>> {
        let p = dir.join(name);
        if p.exists() {
            fs::read(&p).map(Some).map_err(|e| Error::io(p, e))
        } else {
            Ok(None)
        }
    };
    let tensors = RawTensors {
        act: read(ACT_FILE)?,
        act_pert: read_opt(ACT_PERT_FILE)?,
        logits: read(LOGITS_FILE)?,
        head_w: read(HEAD_W_FILE)?,
        head_b: read(HEAD_B_FILE)?,
        labels: read_opt(LABELS_FILE)?,
        images: read_opt(IMAGES_FILE)?,
    };
    validate_dump(&manifest, &tensors)
}

pub fn write_dump(dir: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let raw = dataset.to_raw();
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(p, e))
    };
    let manifest = serde_json::to_string_pretty(&dataset.manifest)
        .map_err(|e| Error::json(dir.join(MANIFEST_FILE), e))?;
    write(MANIFEST_FILE, manifest.as_bytes())?;
    write(ACT_FILE, &raw.act)?;
    write(LOGITS_FILE, &raw.logits)?;
    write(HEAD_W_FILE, &raw.head_w)?;
    write(HEAD_B_FILE, &raw.head_b)?;
    if let Some(b) = &raw.act_pert {
        write(ACT_PERT_FILE, b)?;
    }
    if let Some(b) = &raw.labels {
        write(LABELS_FILE, b)?;
    }
    if let Some(b) = &raw.images {
        write(IMAGES_FILE, b)?;
    }
    Ok(())
}

pub(crate) fn push_f32(buf: &mut Vec<u8>, values: &[f64]) {
    buf.reserve(values.len() * 4);
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub(crate) fn decode_f32(what: &str, bytes: &[u8], count: usize) -> Result<Vec<f64>> {
    expect_len(what, count * 4, bytes.len())?;
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    check_finite(what, &values)?;
    Ok(values)
}

fn decode_i32(what: &str, bytes: &[u8], count: usize) -> Result<Vec<i32>> {
    expect_len(what, count * 4, bytes.len())?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn expect_len(what: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::ShapeMismatch {
            what: what.to_string(),
            expected,
            actual,
        });
    }
    Ok(())
}
