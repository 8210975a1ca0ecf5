//! Five-component liveness scoring and score-level fusion.
//!
//! Three view discriminators, the mean of the patch discriminator over
//! keypoint patches of the raw view, and the normalized VAE reconstruction
//! error are averaged into one liveness score in `[0, 1]`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::nnkit::{Architecture, Checkpoint, Discriminator, NnError, Vae};
use crate::preprocess::{extract_patches, resize_to, Image, RoiTriplet, PATCH_COUNT, PATCH_SIZE};

pub const BUNDLE_FILE: &str = "bundle.json";
pub const SCORE_HEADER: &str = "sample_id,label,material,s_direct,s_raw,s_processed,s_patches,s_vae,s_fused";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("{view} view: {message}")]
    Shape { view: &'static str, message: String },
    #[error("vae_tau must be positive, got {0}")]
    Calibration(f64),
    #[error("no validation errors to calibrate on")]
    EmptyCalibration,
    #[error("score {0} outside [0, 1]")]
    Domain(f64),
    #[error("bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// The view order used for scores and feature concatenation.
pub const VIEWS: [&str; 3] = ["direct", "raw", "processed"];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub d_direct: Checkpoint,
    pub d_raw: Checkpoint,
    pub d_processed: Checkpoint,
    pub d_patch: Checkpoint,
    pub vae: Checkpoint,
    pub vae_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BundleFile {
    vae_tau: f64,
    d_direct: String,
    d_raw: String,
    d_processed: String,
    d_patch: String,
    vae: String,
}

impl ModelBundle {
    /// Reads `bundle.json` and the five checkpoints it names from `dir`.
    pub fn load(dir: &Path) -> Result<Self, DetectorError> {
        let path = dir.join(BUNDLE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| DetectorError::Bundle(format!("{}: {e}", path.display())))?;
        let f: BundleFile = serde_json::from_str(&text).map_err(|e| DetectorError::Bundle(format!("{}: {e}", path.display())))?;
        let load = |stem: &str| Checkpoint::load(&dir.join(stem)).map_err(|e| DetectorError::Bundle(format!("{stem}: {e}")));
        let b = Self {
            d_direct: load(&f.d_direct)?,
            d_raw: load(&f.d_raw)?,
            d_processed: load(&f.d_processed)?,
            d_patch: load(&f.d_patch)?,
            vae: load(&f.vae)?,
            vae_tau: f.vae_tau,
        };
        b.validate()?;
        Ok(b)
    }

    /// Writes the checkpoints as `models/<name>` under `dir` plus `bundle.json`.
    pub fn save(&self, dir: &Path) -> Result<(), DetectorError> {
        self.validate()?;
        let names = ["models/direct", "models/raw", "models/processed", "models/patch", "models/vae"];
        for (ck, stem) in self.checkpoints().into_iter().zip(names) {
            ck.save(&dir.join(stem))?;
        }
        let f = BundleFile {
            vae_tau: self.vae_tau,
            d_direct: names[0].into(),
            d_raw: names[1].into(),
            d_processed: names[2].into(),
            d_patch: names[3].into(),
            vae: names[4].into(),
        };
        let path = dir.join(BUNDLE_FILE);
        fs::write(&path, serde_json::to_string_pretty(&f).expect("serializes"))
            .map_err(|e| DetectorError::Bundle(format!("{}: {e}", path.display())))
    }

    pub fn checkpoints(&self) -> [&Checkpoint; 5] {
        [&self.d_direct, &self.d_raw, &self.d_processed, &self.d_patch, &self.vae]
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(self.vae_tau > 0.0 && self.vae_tau.is_finite()) {
            return Err(DetectorError::Calibration(self.vae_tau));
        }
        for (ck, name) in self.checkpoints()[..4].iter().zip(["d_direct", "d_raw", "d_processed", "d_patch"]) {
            if !matches!(ck.architecture, Architecture::Discriminator(_)) {
                return Err(DetectorError::Bundle(format!("{name} is not a discriminator")));
            }
        }
        if !matches!(self.vae.architecture, Architecture::Vae(_)) {
            return Err(DetectorError::Bundle("vae is not a VAE checkpoint".into()));
        }
        Ok(())
    }
}

/// Instantiated networks of a bundle, ready to score.
#[derive(Debug, Clone)]
pub struct Detector {
    pub d_direct: Discriminator<f32>,
    pub d_raw: Discriminator<f32>,
    pub d_processed: Discriminator<f32>,
    pub d_patch: Discriminator<f32>,
    pub vae: Vae<f32>,
    pub vae_tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentScores {
    pub s_direct: f64,
    pub s_raw: f64,
    pub s_processed: f64,
    pub s_patches: f64,
    pub s_vae: f64,
    pub s_fused: f64,
}

impl ComponentScores {
    pub fn from_components(c: [f64; 5]) -> Result<Self, DetectorError> {
        Ok(Self {
            s_direct: c[0],
            s_raw: c[1],
            s_processed: c[2],
            s_patches: c[3],
            s_vae: c[4],
            s_fused: fuse(&c)?,
        })
    }

    pub fn components(&self) -> [f64; 5] {
        [self.s_direct, self.s_raw, self.s_processed, self.s_patches, self.s_vae]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Live,
    Spoof,
}

/// Per-patch discriminator scores and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchScores {
    pub scores: Vec<f64>,
    pub mean: f64,
}

/// `2^(-err / tau)`.
pub fn normalize_vae(err: f64, tau: f64) -> Result<f64, DetectorError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(DetectorError::Calibration(tau));
    }
    if !(err >= 0.0) {
        return Err(DetectorError::Domain(err));
    }
    Ok((-err / tau).exp2())
}

/// Lower median of the validation live reconstruction errors.
pub fn calibrate_vae_tau(val_live_errors: &[f64]) -> Result<f64, DetectorError> {
    if val_live_errors.is_empty() {
        return Err(DetectorError::EmptyCalibration);
    }
    if let Some(&e) = val_live_errors.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return Err(DetectorError::Domain(e));
    }
    let mut v = val_live_errors.to_vec();
    v.sort_by(f64::total_cmp);
    let tau = v[(v.len() - 1) / 2];
    if tau > 0.0 {
        Ok(tau)
    } else {
        Err(DetectorError::Calibration(tau))
    }
}

/// Unweighted mean of the five component scores.
pub fn fuse(components: &[f64; 5]) -> Result<f64, DetectorError> {
    if let Some(&c) = components.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(DetectorError::Domain(c));
    }
    Ok(components.iter().sum::<f64>() / 5.0)
}

/// Spoof iff `s_fused < threshold`.
pub fn detect(s_fused: f64, threshold: f64) -> Decision {
    if s_fused < threshold {
        Decision::Spoof
    } else {
        Decision::Live
    }
}

fn discriminator_input(d: &Discriminator<f32>, img: &Image, view: &'static str) -> Result<Image, DetectorError> {
    let spec = &d.spec;
    if img.channels() != spec.input_channels {
        return Err(DetectorError::Shape {
            view,
            message: format!("{} channels, model expects {}", img.channels(), spec.input_channels),
        });
    }
    if img.width() != img.height() {
        return Err(DetectorError::Shape {
            view,
            message: format!("non-square {}x{} input", img.width(), img.height()),
        });
    }
    Ok(resize_to(img, spec.input_size))
}

impl Detector {
    pub fn from_bundle(b: &ModelBundle) -> Result<Self, DetectorError> {
        b.validate()?;
        Ok(Self {
            d_direct: b.d_direct.discriminator()?,
            d_raw: b.d_raw.discriminator()?,
            d_processed: b.d_processed.discriminator()?,
            d_patch: b.d_patch.discriminator()?,
            vae: b.vae.vae()?,
            vae_tau: b.vae_tau,
        })
    }

    pub fn view_models(&self) -> [&Discriminator<f32>; 3] {
        [&self.d_direct, &self.d_raw, &self.d_processed]
    }

    fn view_inputs(&self, roi: &RoiTriplet) -> Result<[Image; 3], DetectorError> {
        Ok([
            discriminator_input(&self.d_direct, &roi.direct, "direct")?,
            discriminator_input(&self.d_raw, &roi.raw, "raw")?,
            discriminator_input(&self.d_processed, &roi.processed, "processed")?,
        ])
    }

    /// `(s_direct, s_raw, s_processed)`.
    pub fn score_views(&self, roi: &RoiTriplet) -> Result<(f64, f64, f64), DetectorError> {
        let x = self.view_inputs(roi)?;
        Ok((
            self.d_direct.score(&x[0])?,
            self.d_raw.score(&x[1])?,
            self.d_processed.score(&x[2])?,
        ))
    }

    /// Model inputs for the patch discriminator.
    pub fn patch_inputs(&self, roi_raw: &Image) -> Result<Vec<Image>, DetectorError> {
        extract_patches(roi_raw, PATCH_COUNT, PATCH_SIZE)
            .iter()
            .map(|p| discriminator_input(&self.d_patch, p, "patch"))
            .collect()
    }

    pub fn score_patch_inputs(&self, patches: &[Image]) -> Result<PatchScores, DetectorError> {
        let refs: Vec<&Image> = patches.iter().collect();
        let scores = self.d_patch.score_batch(&refs)?;
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        Ok(PatchScores { scores, mean })
    }

    pub fn score_patches(&self, roi_raw: &Image) -> Result<PatchScores, DetectorError> {
        self.score_patch_inputs(&self.patch_inputs(roi_raw)?)
    }

    pub fn vae_error(&self, roi_direct: &Image) -> Result<f64, DetectorError> {
        let spec = &self.vae.spec;
        if roi_direct.channels() != spec.channels {
            return Err(DetectorError::Shape {
                view: "direct",
                message: format!("{} channels, VAE expects {}", roi_direct.channels(), spec.channels),
            });
        }
        let x = resize_to(roi_direct, spec.input_size);
        Ok(self.vae.recon_errors(&[&x])?[0])
    }

    pub fn score_vae(&self, roi_direct: &Image) -> Result<f64, DetectorError> {
        normalize_vae(self.vae_error(roi_direct)?, self.vae_tau)
    }

    pub fn score(&self, roi: &RoiTriplet) -> Result<ComponentScores, DetectorError> {
        let (d, r, p) = self.score_views(roi)?;
        let patches = self.score_patches(&roi.raw)?;
        let v = self.score_vae(&roi.direct)?;
        ComponentScores::from_components([d, r, p, patches.mean, v])
    }

    /// Concatenated feature vectors of the three view discriminators.
    pub fn features(&self, roi: &RoiTriplet) -> Result<Vec<f64>, DetectorError> {
        let x = self.view_inputs(roi)?;
        let mut out = Vec::new();
        for (d, img) in self.view_models().into_iter().zip(&x) {
            out.extend(d.features(img)?);
        }
        Ok(out)
    }
}

/// One row of the score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub sample_id: String,
    pub label: Label,
    pub material: Option<String>,
    pub scores: ComponentScores,
}

pub fn score_csv(rows: &[ScoreRow]) -> String {
    let mut s = String::from(SCORE_HEADER);
    s.push('\n');
    for r in rows {
        let c = &r.scores;
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.sample_id,
            r.label.as_str(),
            r.material.as_deref().unwrap_or(""),
            c.s_direct,
            c.s_raw,
            c.s_processed,
            c.s_patches,
            c.s_vae,
            c.s_fused
        );
    }
    s
}
