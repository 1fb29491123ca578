//! Attribution-ranked pixel selection and signed input perturbation.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::{predicted_class, ReferenceNet};
use crate::types::{check_finite, count_from_frac, Hyperparams, ImageTensor, PixelMode};

/// Flat input indices chosen for perturbation, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelSelection {
    pub indices: Vec<usize>,
    pub mode: PixelMode,
}

/// Seed of one sample: the run seed plus the sample's ordinal in its split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSeed {
    pub seed: u64,
    pub ordinal: u64,
}

impl SampleSeed {
    pub fn new(seed: u64, ordinal: u64) -> Self {
        Self { seed, ordinal }
    }

    fn rng(self, purpose: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(self.ordinal);
        rng
    }
}

const SELECT_STREAM: u64 = 1;
const SIGN_STREAM: u64 = 2;

/// Chooses `max(1, round(o_frac · n))` indices: lowest |attribution| for
/// `Trivial`, highest for `Salient`, uniform without replacement for
/// `Random`, and every index for `All`. Magnitude ties go to the lower index.
pub fn select_pixels(
    input_len: usize,
    attribution: Option<&[f64]>,
    o_frac: f64,
    mode: PixelMode,
    seed: SampleSeed,
) -> Result<PixelSelection> {
    if input_len == 0 {
        return Err(Error::EmptyInput("input".into()));
    }
    if !(o_frac > 0.0 && o_frac <= 1.0) {
        return Err(Error::InvalidHyperparams(format!(
            "o fraction must lie in (0, 1], got {o_frac}"
        )));
    }
    if let Some(attr) = attribution {
        if attr.len() != input_len {
            return Err(Error::DimensionMismatch(format!(
                "attribution length {} vs input {input_len}",
                attr.len()
            )));
        }
        check_finite("attribution", attr)?;
    }
    let m = count_from_frac(o_frac, input_len);
    let mut indices = match mode {
        PixelMode::All => (0..input_len).collect(),
        PixelMode::Random => {
            let mut rng = seed.rng(SELECT_STREAM);
            rand::seq::index::sample(&mut rng, input_len, m).into_vec()
        }
        PixelMode::Trivial | PixelMode::Salient => {
            let attr = attribution.ok_or(Error::MissingAttribution)?;
            let mut order: Vec<usize> = (0..input_len).collect();
            let salient = mode == PixelMode::Salient;
            order.sort_by(|&i, &j| {
                let (ai, aj) = (attr[i].abs(), attr[j].abs());
                let by_mag = if salient {
                    aj.partial_cmp(&ai)
                } else {
                    ai.partial_cmp(&aj)
                };
                by_mag.unwrap_or(Ordering::Equal).then(i.cmp(&j))
            });
            order.truncate(m);
            order
        }
    };
    indices.sort_unstable();
    Ok(PixelSelection { indices, mode })
}

/// Shifts each selected coordinate by `ε · sign(attribution)` (sign of 0 is +1).
/// In random mode the sign is a fair coin drawn from the sample's seed and
/// the attribution is ignored. Unselected coordinates are left untouched.
pub fn perturb(
    x: &ImageTensor,
    attribution: Option<&[f64]>,
    selection: &PixelSelection,
    epsilon: f64,
    seed: SampleSeed,
) -> Result<ImageTensor> {
    let n = x.len();
    if let Some(&bad) = selection.indices.iter().find(|&&i| i >= n) {
        return Err(Error::DimensionMismatch(format!(
            "selected index {bad} outside input of length {n}"
        )));
    }
    let mut values = x.values().to_vec();
    if selection.mode == PixelMode::Random {
        let mut rng = seed.rng(SIGN_STREAM);
        for &i in &selection.indices {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            values[i] += epsilon * sign;
        }
    } else {
        let attr = attribution.ok_or(Error::MissingAttribution)?;
        if attr.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "attribution length {} vs input {n}",
                attr.len()
            )));
        }
        for &i in &selection.indices {
            let sign = if attr[i] < 0.0 { -1.0 } else { 1.0 };
            values[i] += epsilon * sign;
        }
    }
    Ok(x.with_values(values))
}

/// Runs the full perturbation recipe through `net`: gradient of the predicted
/// logit (skipped in random mode), pixel selection, signed shift, and a second
/// forward pass. Returns `(a, a_eps, z)`.
pub fn perturbed_activation(
    net: &ReferenceNet,
    x: &ImageTensor,
    hp: &Hyperparams,
    ordinal: u64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (a, z) = net.forward(x)?;
    let seed = SampleSeed::new(hp.seed, ordinal);
    let attribution = match hp.pixel_mode {
        PixelMode::Random => None,
        _ => Some(net.input_gradient(x, predicted_class(&z))?),
    };
    let selection = select_pixels(x.len(), attribution.as_deref(), hp.o_frac, hp.pixel_mode, seed)?;
    let x_eps = perturb(x, attribution.as_deref(), &selection, hp.epsilon, seed)?;
    let (a_eps, _) = net.forward(&x_eps)?;
    Ok((a, a_eps, z))
}
