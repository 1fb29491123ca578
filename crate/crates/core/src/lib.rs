//! Post-hoc out-of-distribution detection by adaptive activation scaling.
//!
//! A sample's OODness is estimated from how much its strongest penultimate
//! activations move under a tiny input perturbation. The estimate is mapped
//! through an empirical CDF of ID calibration values onto a per-sample
//! percentile, which sets the scaling factor applied to activations
//! ([`Method::AdascaleA`]) or logits ([`Method::AdascaleL`]) before the
//! energy score. Fixed-percentile baselines (SCALE, LTS, ASH-S), ReAct and
//! the plain logit scores are provided for comparison, together with AUROC
//! and FPR@95 evaluation.

pub mod demo;
pub mod dump;
pub mod error;
pub mod latency;
pub mod metrics;
pub mod net;
pub mod oodness;
pub mod perturb;
pub mod pipeline;
pub mod scoring;
pub mod shaping;
pub mod types;

pub use dump::{read_dump, validate_dump, write_dump, Dataset, Manifest, RawTensors};
pub use error::{Error, Result};
pub use metrics::{auroc, fpr_at_95_tpr};
pub use net::{predicted_class, train_reference, ReferenceNet, TrainConfig};
pub use oodness::{build_ecdf, compute_co, compute_q, compute_qprime, ecdf_eval, top_k_indices, OodnessEstimate};
pub use perturb::{perturb, select_pixels, PixelSelection, SampleSeed};
pub use scoring::{adascale_score, energy_score, mls_score, msp_score, score_record};
pub use shaping::{
    adaptive_percentile, ash_s, percentile, react_clip, scaling_factor, shape_adascale_a,
    shape_adascale_l, shape_scale_fixed, ScaleRoute, ShapingOutcome,
};
pub use types::{
    ActivationRecord, Calibration, EvalReport, HeadParams, Hyperparams, ImageTensor, Matrix,
    Method, MethodConfig, PixelMode, ScoreRow, ScoreSet,
};
