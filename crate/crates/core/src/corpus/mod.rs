//! Sample records, manifests, protocol splits and the synthetic corpus.

mod manifest;
mod split;
mod synth;

use thiserror::Error;

pub use manifest::{load_manifest, parse_manifest, save_manifest, DatasetManifest, Label, SampleRecord, SCHEMA_VERSION};
pub use split::{
    make_protocol_split, reference_material_partition, MaterialGroup, Partition, ProtocolSplit, SplitPlan,
    DEFAULT_SPOOF_VAL_CAP, DEFAULT_SPOOF_VAL_FRACTION,
};
pub use synth::{synth_capture, synth_corpus, synth_record, SynthConfig, SynthSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {id}: {message}")]
    Validation { id: String, message: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("material {0} has no partition assignment")]
    UnknownMaterial(String),
    #[error("invalid config field {field}: {message}")]
    Config { field: &'static str, message: String },
    #[error("io: {0}")]
    Io(String),
}

fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CorpusError {
    CorpusError::Io(format!("{}: {e}", path.display()))
}
