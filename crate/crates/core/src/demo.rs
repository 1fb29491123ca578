//! Self-contained synthetic experiment: train the reference network on two
//! Gaussian blobs, perturb, calibrate, score every method and evaluate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dump::Dataset;
use crate::error::Result;
use crate::net::{train_reference, ReferenceNet, TrainConfig};
use crate::oodness::compute_q;
use crate::pipeline::{generate_perturbed, react_clip_from, run_calibration, run_evaluation, run_scoring};
use crate::types::{count_from_frac, ActivationRecord, EvalReport, Hyperparams, ImageTensor, Method, MethodConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoConfig {
    pub seed: u64,
    pub input_shape: [usize; 3],
    pub hidden: usize,
    pub n_train: usize,
    pub n_calib: usize,
    pub n_test: usize,
    pub n_ood: usize,
    pub sigma: f64,
    /// Distance between the two class means.
    pub class_separation: f64,
    /// Distance of the OOD mean from each class mean, in units of `sigma`.
    pub ood_displacement: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hyperparams: Hyperparams,
    /// Percentile for SCALE / LTS.
    pub scale_p: f64,
    /// Percentile for ASH-S.
    pub ash_p: f64,
    /// Percentile of ID activations used as the ReAct clip.
    pub react_percentile: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            input_shape: [1, 4, 4],
            hidden: 32,
            n_train: 400,
            n_calib: 100,
            n_test: 200,
            n_ood: 200,
            sigma: 1.0,
            class_separation: 4.0,
            ood_displacement: 8.0,
            epochs: 50,
            learning_rate: 0.05,
            hyperparams: Hyperparams::default(),
            scale_p: 85.0,
            ash_p: 90.0,
            react_percentile: 90.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub config: DemoConfig,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub mean_q_id: f64,
    pub mean_q_ood: f64,
    pub react_clip: f64,
    pub results: Vec<EvalReport>,
}

impl DemoReport {
    pub fn result(&self, method: Method) -> Option<&EvalReport> {
        self.results.iter().find(|r| r.method == method)
    }
}

/// The generated splits and the trained network.
pub struct DemoData {
    pub net: ReferenceNet,
    pub train: Vec<(ImageTensor, usize)>,
    pub calib: Dataset,
    pub test: Dataset,
    pub ood: Dataset,
}

struct Blobs {
    means: [Vec<f64>; 2],
    ood_mean: Vec<f64>,
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

impl Blobs {
    fn new(cfg: &DemoConfig, rng: &mut ChaCha8Rng) -> Self {
        let n: usize = cfg.input_shape.iter().product();
        let gauss = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| StandardNormal.sample(rng)).collect()
        };
        let axis = unit(gauss(rng));
        // OOD direction orthogonal to the class axis
        let raw = gauss(rng);
        let dot: f64 = raw.iter().zip(&axis).map(|(r, a)| r * a).sum();
        let ortho = unit(raw.iter().zip(&axis).map(|(r, a)| r - dot * a).collect());

        let half = cfg.class_separation / 2.0;
        let means = [
            axis.iter().map(|a| half * a).collect(),
            axis.iter().map(|a| -half * a).collect(),
        ];
        // |ood − μ_c|² = half² + reach², so reach solves for the target distance
        let target = cfg.ood_displacement * cfg.sigma;
        let reach = (target * target - half * half).max(0.0).sqrt();
        let ood_mean = ortho.iter().map(|o| reach * o).collect();
        Self { means, ood_mean }
    }

    fn draw(mean: &[f64], sigma: f64, shape: [usize; 3], rng: &mut ChaCha8Rng) -> ImageTensor {
        let values = mean
            .iter()
            .map(|m| {
                let g: f64 = StandardNormal.sample(rng);
                m + sigma * g
            })
            .collect();
        ImageTensor::new(shape[0], shape[1], shape[2], values).expect("shape is consistent")
    }

    fn labelled(&self, count: usize, cfg: &DemoConfig, rng: &mut ChaCha8Rng) -> Vec<(ImageTensor, usize)> {
        (0..count)
            .map(|i| {
                let y = i % 2;
                (Self::draw(&self.means[y], cfg.sigma, cfg.input_shape, rng), y)
            })
            .collect()
    }
}

fn to_dataset(split: &str, net: &ReferenceNet, samples: &[(ImageTensor, usize)], hp: &Hyperparams) -> Result<Dataset> {
    let records = samples
        .iter()
        .map(|(x, _)| {
            let (a, z) = net.forward(x)?;
            ActivationRecord::new(a, None, z)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = samples.iter().map(|(_, y)| *y as i32).collect();
    let images = samples.iter().map(|(x, _)| x.clone()).collect();
    let plain = Dataset::from_parts(split, records, net.head(), Some(labels), Some(images))?;
    generate_perturbed(&plain, net, hp)
}

/// Generates all splits and trains the network.
pub fn prepare(cfg: &DemoConfig) -> Result<DemoData> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let blobs = Blobs::new(cfg, &mut rng);
    let train = blobs.labelled(cfg.n_train, cfg, &mut rng);
    let calib = blobs.labelled(cfg.n_calib, cfg, &mut rng);
    let test = blobs.labelled(cfg.n_test, cfg, &mut rng);
    let ood: Vec<_> = (0..cfg.n_ood)
        .map(|_| (Blobs::draw(&blobs.ood_mean, cfg.sigma, cfg.input_shape, &mut rng), 0))
        .collect();

    let net = train_reference(
        &train,
        &TrainConfig {
            hidden: cfg.hidden,
            classes: 2,
            epochs: cfg.epochs,
            learning_rate: cfg.learning_rate,
            batch_size: 32,
            seed: cfg.seed,
        },
    )?;
    let hp = Hyperparams {
        seed: cfg.seed,
        ..cfg.hyperparams
    };
    Ok(DemoData {
        calib: to_dataset("id_calib", &net, &calib, &hp)?,
        test: to_dataset("id_test", &net, &test, &hp)?,
        ood: to_dataset("ood", &net, &ood, &hp)?,
        net,
        train,
    })
}

fn mean_q(ds: &Dataset, k1: usize) -> Result<f64> {
    let mut total = 0.0;
    for r in &ds.records {
        total += compute_q(&r.a, r.perturbed()?, k1)?;
    }
    Ok(total / ds.len() as f64)
}

/// Runs the complete experiment.
pub fn run_demo(cfg: &DemoConfig) -> Result<DemoReport> {
    let data = prepare(cfg)?;
    let hp = Hyperparams {
        seed: cfg.seed,
        ..cfg.hyperparams
    };
    let calibration = run_calibration(&data.calib, &hp, None)?;
    let react_clip = react_clip_from(&data.calib, cfg.react_percentile)?;

    let mut results = Vec::with_capacity(Method::ALL.len());
    for method in Method::ALL {
        let mut mc = MethodConfig::new(method).with_hyperparams(hp);
        match method {
            Method::React => mc = mc.with_clip(react_clip),
            Method::AshS => mc = mc.with_fixed_p(cfg.ash_p),
            Method::Scale | Method::Lts => mc = mc.with_fixed_p(cfg.scale_p),
            Method::AdascaleA | Method::AdascaleL => mc = mc.with_calibration(calibration.clone()),
            _ => {}
        }
        let id = run_scoring(&data.test, &mc)?;
        let ood = run_scoring(&data.ood, &mc)?;
        results.push(run_evaluation(&id, &ood)?);
    }

    let k1 = count_from_frac(hp.k1_frac, data.net.dim());
    let test_pairs: Vec<(ImageTensor, usize)> = data
        .test
        .images
        .iter()
        .flatten()
        .cloned()
        .zip(data.test.labels.iter().flatten().map(|&y| y as usize))
        .collect();
    Ok(DemoReport {
        config: cfg.clone(),
        train_accuracy: data.net.accuracy(&data.train),
        test_accuracy: data.net.accuracy(&test_pairs),
        mean_q_id: mean_q(&data.test, k1)?,
        mean_q_ood: mean_q(&data.ood, k1)?,
        react_clip,
        results,
    })
}
