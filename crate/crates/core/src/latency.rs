//! Fixed- versus variable-percentile latency harness.
//!
//! The fixed kernel computes the scaling factor at a constant percentile.
//! The variable kernel additionally estimates Q′ (two top-k selections),
//! looks it up in the eCDF and derives the per-sample percentile first.

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::Result;
use crate::oodness::{build_ecdf, compute_qprime, ecdf_eval};
use crate::shaping::{adaptive_percentile, scaling_factor};
use crate::types::{Calibration, Hyperparams};

pub const DEFAULT_DIMS: [usize; 5] = [128, 512, 1024, 2048, 3072];
pub const DEFAULT_TRIALS: usize = 10_000;
const POOL: usize = 64;

/// Pre-generated activation pairs and a calibration for one dimension.
pub struct LatencyFixture {
    pub dim: usize,
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
    calibration: Calibration,
    hp: Hyperparams,
    fixed_p: f64,
}

impl LatencyFixture {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        let hp = Hyperparams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ dim as u64);
        let act = Exp::new(1.0).expect("rate is positive");
        let pairs: Vec<_> = (0..POOL)
            .map(|_| {
                let a: Vec<f64> = (0..dim).map(|_| act.sample(&mut rng)).collect();
                let a_eps: Vec<f64> = a
                    .iter()
                    .map(|&v| (v + rng.random_range(-0.2..0.2)).max(0.0))
                    .collect();
                (a, a_eps)
            })
            .collect();
        let q: Vec<f64> = pairs
            .iter()
            .map(|(a, e)| compute_qprime(a, e, &hp).map(|est| est.q_prime))
            .collect::<Result<_>>()?;
        let calibration = build_ecdf(&q, hp)?;
        Ok(Self {
            dim,
            pairs,
            calibration,
            hp,
            fixed_p: hp.p_max,
        })
    }

    pub fn pool_len(&self) -> usize {
        self.pairs.len()
    }

    /// Scaling factor at the fixed percentile.
    pub fn fixed(&self, i: usize) -> f64 {
        let (a, _) = &self.pairs[i % self.pairs.len()];
        scaling_factor(a, self.fixed_p).expect("fixture is valid")
    }

    /// Scaling factor at the sample's adaptive percentile.
    pub fn variable(&self, i: usize) -> f64 {
        let (a, a_eps) = &self.pairs[i % self.pairs.len()];
        let est = compute_qprime(a, a_eps, &self.hp).expect("fixture is valid");
        let f = ecdf_eval(&self.calibration, est.q_prime);
        let p = adaptive_percentile(f, self.hp.p_min, self.hp.p_max).expect("band is valid");
        scaling_factor(a, p).expect("fixture is valid")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LatencyRow {
    pub dim: usize,
    pub fixed_us: f64,
    pub variable_us: f64,
    pub ratio: f64,
}

fn mean_us(trials: usize, mut kernel: impl FnMut(usize) -> f64) -> f64 {
    let start = Instant::now();
    for i in 0..trials {
        black_box(kernel(black_box(i)));
    }
    start.elapsed().as_secs_f64() * 1e6 / trials as f64
}

/// Mean per-call latency of both kernels for every dimension; each figure is
/// the best of `repeats` interleaved runs.
pub fn bench_percentile(dims: &[usize], trials: usize, repeats: usize, seed: u64) -> Result<Vec<LatencyRow>> {
    let mut rows = Vec::with_capacity(dims.len());
    for &dim in dims {
        let fx = LatencyFixture::new(dim, seed)?;
        // warm-up
        mean_us(trials.min(200), |i| fx.fixed(i));
        mean_us(trials.min(200), |i| fx.variable(i));
        let (mut fixed_us, mut variable_us) = (f64::INFINITY, f64::INFINITY);
        for _ in 0..repeats.max(1) {
            fixed_us = fixed_us.min(mean_us(trials, |i| fx.fixed(i)));
            variable_us = variable_us.min(mean_us(trials, |i| fx.variable(i)));
        }
        rows.push(LatencyRow {
            dim,
            fixed_us,
            variable_us,
            ratio: variable_us / fixed_us,
        });
    }
    Ok(rows)
}
