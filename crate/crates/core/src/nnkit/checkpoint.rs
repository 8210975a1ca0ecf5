//! Weight blobs with JSON sidecars.
//!
//! A checkpoint stored under stem `models/direct` is the pair
//! `models/direct.bin` (magic `PADW`, format version, value count, then
//! little-endian `f32` weights) and `models/direct.json`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::models::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec, Network, Vae, VaeSpec};
use super::NnError;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"PADW";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Discriminator(DiscriminatorSpec),
    Generator(GeneratorSpec),
    Vae(VaeSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub weights: Vec<f32>,
    pub step: u64,
    pub val_metric: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub architecture: Architecture,
    pub step: u64,
    pub val_metric: Option<f64>,
    pub seed: u64,
    pub param_count: usize,
    pub weights_file: String,
    pub weights_sha256: String,
}

pub fn blob_path(stem: &Path) -> PathBuf {
    with_suffix(stem, "bin")
}

pub fn sidecar_path(stem: &Path) -> PathBuf {
    with_suffix(stem, "json")
}

fn with_suffix(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> NnError {
    NnError::Io(format!("{}: {e}", path.display()))
}

impl Checkpoint {
    pub fn of_network(architecture: Architecture, net: &impl Network<f32>, step: u64, val_metric: Option<f64>, seed: u64) -> Self {
        let weights = net
            .params()
            .iter()
            .flat_map(|p| p.value.iter().copied())
            .collect();
        Self {
            architecture,
            weights,
            step,
            val_metric,
            seed,
        }
    }

    fn weights_f64(&self) -> Vec<f64> {
        self.weights.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn discriminator(&self) -> Result<Discriminator<f32>, NnError> {
        match &self.architecture {
            Architecture::Discriminator(spec) => {
                let mut d = Discriminator::new(spec, &mut ChaCha8Rng::seed_from_u64(0))?;
                d.set_flat_weights(&self.weights_f64())?;
                Ok(d)
            }
            other => Err(NnError::Format(format!("expected a discriminator checkpoint, found {other:?}"))),
        }
    }

    pub fn generator(&self) -> Result<Generator<f32>, NnError> {
        match &self.architecture {
            Architecture::Generator(spec) => {
                let mut g = Generator::new(spec, &mut ChaCha8Rng::seed_from_u64(0))?;
                g.set_flat_weights(&self.weights_f64())?;
                Ok(g)
            }
            other => Err(NnError::Format(format!("expected a generator checkpoint, found {other:?}"))),
        }
    }

    pub fn vae(&self) -> Result<Vae<f32>, NnError> {
        match &self.architecture {
            Architecture::Vae(spec) => {
                let mut v = Vae::new(spec, &mut ChaCha8Rng::seed_from_u64(0))?;
                v.set_flat_weights(&self.weights_f64())?;
                Ok(v)
            }
            other => Err(NnError::Format(format!("expected a VAE checkpoint, found {other:?}"))),
        }
    }

    pub fn blob_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.weights.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.weights.len() as u64).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn parse_blob(bytes: &[u8]) -> Result<Vec<f32>, NnError> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(NnError::Format("not a weight blob".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(NnError::Format(format!("unsupported blob version {version}")));
        }
        let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() != count * 4 {
            return Err(NnError::Format(format!(
                "blob declares {count} values but holds {} bytes",
                body.len()
            )));
        }
        Ok(body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    /// SHA-256 of the weight blob.
    pub fn weights_hash(&self) -> String {
        hex::encode(Sha256::digest(self.blob_bytes()))
    }

    pub fn sidecar(&self, weights_file: String) -> Sidecar {
        Sidecar {
            format_version: FORMAT_VERSION,
            architecture: self.architecture.clone(),
            step: self.step,
            val_metric: self.val_metric,
            seed: self.seed,
            param_count: self.weights.len(),
            weights_file,
            weights_sha256: self.weights_hash(),
        }
    }

    pub fn save(&self, stem: &Path) -> Result<(), NnError> {
        if let Some(dir) = stem.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
        }
        let blob = blob_path(stem);
        fs::write(&blob, self.blob_bytes()).map_err(|e| io_err(&blob, e))?;
        let name = blob
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let side = sidecar_path(stem);
        let json = serde_json::to_string_pretty(&self.sidecar(name)).map_err(|e| io_err(&side, e))?;
        fs::write(&side, json + "\n").map_err(|e| io_err(&side, e))
    }

    pub fn load(stem: &Path) -> Result<Self, NnError> {
        let side = sidecar_path(stem);
        let text = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
        let meta: Sidecar = serde_json::from_str(&text).map_err(|e| NnError::Format(format!("{}: {e}", side.display())))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(NnError::Format(format!("unsupported sidecar version {}", meta.format_version)));
        }
        let blob = stem.parent().unwrap_or(Path::new("")).join(&meta.weights_file);
        let bytes = fs::read(&blob).map_err(|e| io_err(&blob, e))?;
        let weights = Self::parse_blob(&bytes)?;
        let ckpt = Self {
            architecture: meta.architecture,
            weights,
            step: meta.step,
            val_metric: meta.val_metric,
            seed: meta.seed,
        };
        if ckpt.weights_hash() != meta.weights_sha256 {
            return Err(NnError::Format(format!("{}: weight hash mismatch", blob.display())));
        }
        Ok(ckpt)
    }
}
