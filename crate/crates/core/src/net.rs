//! Two-layer reference network (linear → ReLU → linear) with exact input
//! gradients and a small minibatch trainer.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dump::{decode_f32, push_f32, DTYPE_F32LE};
use crate::error::{Error, Result};
use crate::types::{HeadParams, ImageTensor, Matrix};

pub const NET_MANIFEST_FILE: &str = "net.json";
const NET_FILES: [&str; 4] = ["net_w1.bin", "net_b1.bin", "net_w2.bin", "net_b2.bin"];

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceNet {
    input_shape: [usize; 3],
    w1: Matrix,
    b1: Vec<f64>,
    w2: Matrix,
    b2: Vec<f64>,
}

/// Hidden pre-activations, post-ReLU activation and logits of one input.
struct Trace {
    pre: Vec<f64>,
    a: Vec<f64>,
    z: Vec<f64>,
}

impl ReferenceNet {
    pub fn new(
        input_shape: [usize; 3],
        w1: Matrix,
        b1: Vec<f64>,
        w2: Matrix,
        b2: Vec<f64>,
    ) -> Result<Self> {
        let n_in: usize = input_shape.iter().product();
        let dim = w1.rows();
        if w1.cols() != n_in || b1.len() != dim || w2.cols() != dim || b2.len() != w2.rows() {
            return Err(Error::DimensionMismatch(format!(
                "w1 {}x{}, b1 {}, w2 {}x{}, b2 {} for input of {n_in}",
                w1.rows(),
                w1.cols(),
                b1.len(),
                w2.rows(),
                w2.cols(),
                b2.len()
            )));
        }
        if dim == 0 || w2.rows() < 2 {
            return Err(Error::DimensionMismatch(
                "need at least one hidden unit and two classes".into(),
            ));
        }
        let params = [w1.as_slice(), &b1, w2.as_slice(), &b2];
        if params.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite {
                what: "network parameters".into(),
                index: 0,
            });
        }
        Ok(Self {
            input_shape,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// Uniform initialization in `[-1/√fan_in, 1/√fan_in]` per layer.
    pub fn init(input_shape: [usize; 3], hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        let n_in: usize = input_shape.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        };
        let w1 = Matrix::new(hidden, n_in, uniform(hidden * n_in, n_in))?;
        let b1 = uniform(hidden, n_in);
        let w2 = Matrix::new(classes, hidden, uniform(classes * hidden, hidden))?;
        let b2 = uniform(classes, hidden);
        Self::new(input_shape, w1, b1, w2, b2)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.w1.cols()
    }

    pub fn dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.rows()
    }

    pub fn head(&self) -> HeadParams {
        HeadParams {
            weight: self.w2.clone(),
            bias: self.b2.clone(),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::DimensionMismatch(format!(
                "input length {} vs network input {}",
                x.len(),
                self.input_len()
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut pre = self.w1.matvec(x);
        for (p, b) in pre.iter_mut().zip(&self.b1) {
            *p += b;
        }
        let a: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
        let mut z = self.w2.matvec(&a);
        for (zi, b) in z.iter_mut().zip(&self.b2) {
            *zi += b;
        }
        Trace { pre, a, z }
    }

    /// Returns `(a, z)` with `a = ReLU(w1 x + b1)` and `z = w2 a + b2`.
    pub fn forward(&self, x: &ImageTensor) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x.values())?;
        let t = self.trace(x.values());
        Ok((t.a, t.z))
    }

    /// Exact `∂z_class / ∂x`. The ReLU derivative at exactly zero is taken as zero.
    pub fn input_gradient(&self, x: &ImageTensor, class_idx: usize) -> Result<Vec<f64>> {
        self.check_input(x.values())?;
        if class_idx >= self.num_classes() {
            return Err(Error::ClassOutOfRange {
                index: class_idx,
                classes: self.num_classes(),
            });
        }
        let t = self.trace(x.values());
        let mut grad = vec![0.0; self.input_len()];
        for (j, &pre) in t.pre.iter().enumerate() {
            if pre <= 0.0 {
                continue;
            }
            let upstream = self.w2.get(class_idx, j);
            for (g, w) in grad.iter_mut().zip(self.w1.row(j)) {
                *g += upstream * w;
            }
        }
        Ok(grad)
    }

    /// Mean cross-entropy over `data`.
    pub fn loss(&self, data: &[(ImageTensor, usize)]) -> f64 {
        let total: f64 = data
            .iter()
            .map(|(x, y)| {
                let z = self.trace(x.values()).z;
                crate::scoring::logsumexp(&z) - z[*y]
            })
            .sum();
        total / data.len().max(1) as f64
    }

    pub fn accuracy(&self, data: &[(ImageTensor, usize)]) -> f64 {
        let correct = data
            .iter()
            .filter(|(x, y)| predicted_class(&self.trace(x.values()).z) == *y)
            .count();
        correct as f64 / data.len().max(1) as f64
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = NetManifest {
            version: 1,
            dtype: DTYPE_F32LE.to_string(),
            input_shape: self.input_shape,
            dim_hidden: self.dim(),
            num_classes: self.num_classes(),
        };
        let path = dir.join(NET_MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let payloads = [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2];
        for (name, values) in NET_FILES.iter().zip(payloads) {
            let mut buf = Vec::new();
            push_f32(&mut buf, values);
            let p = dir.join(name);
            fs::write(&p, buf).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(NET_MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: NetManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        if m.version != 1 || m.dtype != DTYPE_F32LE {
            return Err(Error::Unsupported(format!(
                "network version {} dtype {:?}",
                m.version, m.dtype
            )));
        }
        let n_in: usize = m.input_shape.iter().product();
        let counts = [
            m.dim_hidden * n_in,
            m.dim_hidden,
            m.num_classes * m.dim_hidden,
            m.num_classes,
        ];
        let mut parts = Vec::with_capacity(4);
        for (name, count) in NET_FILES.iter().zip(counts) {
            let p = dir.join(name);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            parts.push(decode_f32(name, &bytes, count)?);
        }
        let b2 = parts.pop().unwrap();
        let w2 = Matrix::new(m.num_classes, m.dim_hidden, parts.pop().unwrap())?;
        let b1 = parts.pop().unwrap();
        let w1 = Matrix::new(m.dim_hidden, n_in, parts.pop().unwrap())?;
        Self::new(m.input_shape, w1, b1, w2, b2)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NetManifest {
    version: u32,
    dtype: String,
    input_shape: [usize; 3],
    dim_hidden: usize,
    num_classes: usize,
}

/// Argmax with ties resolved toward the lowest index.
pub fn predicted_class(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub classes: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            classes: 2,
            epochs: 50,
            learning_rate: 0.1,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Minibatch gradient descent on softmax cross-entropy.
pub fn train_reference(data: &[(ImageTensor, usize)], cfg: &TrainConfig) -> Result<ReferenceNet> {
    let first = data
        .first()
        .ok_or_else(|| Error::EmptyInput("training set".into()))?;
    if let Some((_, y)) = data.iter().find(|(_, y)| *y >= cfg.classes) {
        return Err(Error::ClassOutOfRange {
            index: *y,
            classes: cfg.classes,
        });
    }
    let input_shape = first.0.shape();
    let mut net = ReferenceNet::init(input_shape, cfg.hidden, cfg.classes, cfg.seed)?;
    for (x, _) in data {
        net.check_input(x.values())?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let (hidden, classes, n_in) = (net.dim(), net.num_classes(), net.input_len());
    let mut gw1 = vec![0.0; hidden * n_in];
    let mut gb1 = vec![0.0; hidden];
    let mut gw2 = vec![0.0; classes * hidden];
    let mut gb2 = vec![0.0; classes];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            gw1.fill(0.0);
            gb1.fill(0.0);
            gw2.fill(0.0);
            gb2.fill(0.0);
            for &i in batch {
                let (x, y) = &data[i];
                let x = x.values();
                let t = net.trace(x);
                let lse = crate::scoring::logsumexp(&t.z);
                let dz: Vec<f64> = t
                    .z
                    .iter()
                    .enumerate()
                    .map(|(k, &zk)| (zk - lse).exp() - if k == *y { 1.0 } else { 0.0 })
                    .collect();
                for (k, &g) in dz.iter().enumerate() {
                    gb2[k] += g;
                    for (gw, &aj) in gw2[k * hidden..(k + 1) * hidden].iter_mut().zip(&t.a) {
                        *gw += g * aj;
                    }
                }
                for j in 0..hidden {
                    if t.pre[j] <= 0.0 {
                        continue;
                    }
                    let d: f64 = dz.iter().enumerate().map(|(k, g)| g * net.w2.get(k, j)).sum();
                    gb1[j] += d;
                    for (gw, &xi) in gw1[j * n_in..(j + 1) * n_in].iter_mut().zip(x) {
                        *gw += d * xi;
                    }
                }
            }
            let step = cfg.learning_rate / batch.len() as f64;
            apply(net.w1.as_mut_slice(), &gw1, step);
            apply(&mut net.b1, &gb1, step);
            apply(net.w2.as_mut_slice(), &gw2, step);
            apply(&mut net.b2, &gb2, step);
        }
    }
    Ok(net)
}

fn apply(params: &mut [f64], grad: &[f64], step: f64) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= step * g;
    }
}
