//! Monte Carlo Gaussian-dropout classifiers, calibration metrics for their
//! predictive uncertainty, and logit scaling recalibration.

pub mod data;
pub mod error;
pub mod experiments;
pub mod io;
pub mod math;
pub mod metrics;
pub mod net;
pub mod scalers;

pub use data::LabeledSet;
pub use error::{Error, FormatError, Result};
pub use math::RngStream;
pub use metrics::{BinMode, BinnedReliability, EvalRecord};
pub use net::{DenseLayer, DenseNet, LogitArchive, TrainConfig};
pub use scalers::{FitConfig, Scaler, ScalerKind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
