//! Networks, objectives, optimizer, training loops and checkpoints.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod models;
pub mod optim;
mod scalar;
mod tensor;
pub mod train;

use thiserror::Error;

pub use checkpoint::{Architecture, Checkpoint};
pub use layers::group_normalize;
pub use loss::adversarial_losses;
pub use models::{
    sigmoid, DiscriminatorSpec, Discriminator, Generator, GeneratorSpec, Network, Vae, VaeSpec,
};
pub use scalar::{gemm, Scalar};
pub use tensor::Tensor;
pub use train::{train_gan, train_vae, GanOutcome, LabeledGroup, OneClassAudit, TrainConfig, TrainLog, VaeOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("value outside domain: {0}")]
    Domain(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} is empty")]
    EmptyData(&'static str),
    #[error("spoof sample {0} offered for gradient computation")]
    OneClassViolation(String),
    #[error("non-finite loss at step {step}")]
    Divergence {
        step: u64,
        last_good: Option<Box<Checkpoint>>,
    },
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

/// Builds a seeded discriminator.
pub fn build_discriminator(spec: &DiscriminatorSpec, seed: u64) -> Result<Discriminator<f32>, NnError> {
    use rand::SeedableRng;
    Discriminator::new(spec, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
}

/// Sigmoid liveness score of one image.
pub fn discriminator_score(d: &Discriminator<f32>, image: &crate::preprocess::Image) -> Result<f64, NnError> {
    d.score(image)
}

/// 128-dimensional feature vector of one image.
pub fn extract_features(d: &Discriminator<f32>, image: &crate::preprocess::Image) -> Result<Vec<f64>, NnError> {
    d.features(image)
}

/// Reconstruction error of one image through the posterior mean.
pub fn vae_recon_error(vae: &Vae<f32>, image: &crate::preprocess::Image) -> Result<f64, NnError> {
    Ok(vae.recon_errors(&[image])?[0])
}
