//! Shared fixtures for the criterion benches.

use adascale_core::latency::LatencyFixture;

pub const SEED: u64 = 2024;

pub fn fixtures(dims: &[usize]) -> Vec<LatencyFixture> {
    dims.iter()
        .map(|&d| LatencyFixture::new(d, SEED).expect("fixture builds"))
        .collect()
}
