//! One-class fingerprint presentation attack detection.
//!
//! The detector learns only what live fingerprints look like. Three DCGAN
//! discriminators (one per reader view), a discriminator trained on local
//! raw-view patches and a VAE trained on the direct view each produce a
//! liveness score; the five scores are averaged into the fused score.
//!
//! Module map:
//! - [`corpus`]: sample records, manifests, protocol splits, synthetic corpus
//! - [`preprocess`]: ROI extraction and keypoint patches
//! - [`nnkit`]: networks, losses, optimizer, training loops, checkpoints
//! - [`detector`]: component scoring and fusion
//! - [`eval`]: TDR at fixed FDR, per-material reports, timing, feature export
//! - [`par`]: data-parallel helpers (rayon behind the `parallel` feature)

pub mod corpus;
pub mod detector;
pub mod eval;
pub mod nnkit;
pub mod par;
pub mod pipeline;
pub mod preprocess;

pub use corpus::{DatasetManifest, Label, ProtocolSplit, SampleRecord, SynthConfig};
pub use detector::{ComponentScores, Decision, ModelBundle};
pub use preprocess::{CaptureTriplet, Image, RoiTriplet};
