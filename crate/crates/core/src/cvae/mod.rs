//! Transformer-enhanced conditional VAE over two-vehicle scenarios.

mod artifact;
mod config;
mod ops;
mod layers;
mod loss;
mod model;
mod optim;
mod params;
mod train;

pub use artifact::{Checkpoint, ModelArtifact, ReconstructMode, HISTORY_FILE, HISTORY_HEADER};
pub use config::{beta_at, learning_rate_at, ModelConfig, TrainConfig};
pub use loss::{kl_loss, recon_loss, total_loss};
pub use model::{reparameterize, Cvae, GaussianPosterior, FEATURES, LOG_VAR_LIMIT};
pub use optim::Adam;
pub use params::{Init, ParamStore};
pub use train::{resume_training, train, train_on, EpochRecord, TrainingSet};
