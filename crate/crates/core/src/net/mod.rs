//! Dense classifier with Monte Carlo Gaussian dropout.

mod archive;
mod layer;
mod model;
mod train;

pub use archive::{dump_archive, LogitArchive};
pub use layer::DenseLayer;
pub use model::{mc_integrate, penalized_nll, DenseNet, ForwardCache, Gradients, Noise};
pub use train::{deterministic_accuracy, train, TrainConfig, Trained};
