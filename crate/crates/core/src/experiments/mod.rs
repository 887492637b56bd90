//! Synthetic data and the evaluation protocols: calibration comparison,
//! uncertainty-threshold rejection and OoD mixing.

mod data;
mod ood;
mod pipeline;
mod rejection;
pub mod synth;

pub use data::{make_dataset, nearest, SyntheticData, SyntheticSpec};
pub use ood::{ood_mixing_curve, OodConfig, OodCurve, OodPoint};
pub use pipeline::{
    build_model, dump_all, evaluate_method, evaluate_records, fit_scalers, run_pipeline, Diagnostics, FittedScaler,
    MethodReport, ModelArchives, Report, RunConfig, CONF_PENALTY, UNCALIBRATED,
};
pub use rejection::{even_thresholds, rejection_curve, RejectionCurve, RejectionPoint};
