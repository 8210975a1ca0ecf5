//! Wiring shared by the command-line driver and the end-to-end tests: model
//! inputs per view, five-model training, bundle assembly and batch scoring.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::detector::{calibrate_vae_tau, ComponentScores, Detector, DetectorError, ModelBundle};
use crate::nnkit::train::{validation_recon_error, OneClassAudit, TrainLog};
use crate::nnkit::{train_gan, train_vae, Checkpoint, DiscriminatorSpec, LabeledGroup, NnError, TrainConfig, VaeSpec};
use crate::par;
use crate::preprocess::{extract_patches, resize_to, Image, RoiTriplet, PATCH_COUNT, PATCH_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "full_256")]
    Full256,
    #[serde(rename = "mini_64")]
    Mini64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Direct,
    Raw,
    Processed,
    Patch,
    Vae,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Direct, ModelKind::Raw, ModelKind::Processed, ModelKind::Patch, ModelKind::Vae];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Direct => "direct",
            ModelKind::Raw => "raw",
            ModelKind::Processed => "processed",
            ModelKind::Patch => "patch",
            ModelKind::Vae => "vae",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Architectures of the five models for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpecs {
    pub direct: DiscriminatorSpec,
    pub raw: DiscriminatorSpec,
    pub processed: DiscriminatorSpec,
    pub patch: DiscriminatorSpec,
    pub vae: VaeSpec,
}

impl Mode {
    pub fn specs(self) -> ModeSpecs {
        match self {
            Mode::Full256 => ModeSpecs {
                direct: DiscriminatorSpec::full(3),
                raw: DiscriminatorSpec::full(3),
                processed: DiscriminatorSpec::full(1),
                patch: DiscriminatorSpec {
                    input_size: PATCH_SIZE,
                    base_size: PATCH_SIZE >> 5,
                    ..DiscriminatorSpec::full(3)
                },
                vae: VaeSpec::full(),
            },
            Mode::Mini64 => ModeSpecs {
                direct: DiscriminatorSpec::mini(3),
                raw: DiscriminatorSpec::mini(3),
                processed: DiscriminatorSpec::mini(1),
                patch: DiscriminatorSpec::mini(3),
                vae: VaeSpec::mini(),
            },
        }
    }
}

impl ModeSpecs {
    pub fn discriminator(&self, kind: ModelKind) -> Option<&DiscriminatorSpec> {
        match kind {
            ModelKind::Direct => Some(&self.direct),
            ModelKind::Raw => Some(&self.raw),
            ModelKind::Processed => Some(&self.processed),
            ModelKind::Patch => Some(&self.patch),
            ModelKind::Vae => None,
        }
    }

    /// Network inputs of one sample for `kind`: one resized view, or the
    /// keypoint patches of the raw view.
    pub fn inputs(&self, kind: ModelKind, roi: &RoiTriplet) -> Vec<Image> {
        match kind {
            ModelKind::Direct => vec![resize_to(&roi.direct, self.direct.input_size)],
            ModelKind::Raw => vec![resize_to(&roi.raw, self.raw.input_size)],
            ModelKind::Processed => vec![resize_to(&roi.processed, self.processed.input_size)],
            ModelKind::Patch => extract_patches(&roi.raw, PATCH_COUNT, PATCH_SIZE)
                .iter()
                .map(|p| resize_to(p, self.patch.input_size))
                .collect(),
            ModelKind::Vae => vec![resize_to(&roi.direct, self.vae.input_size)],
        }
    }

    pub fn groups(&self, kind: ModelKind, samples: &[(&str, Label, &RoiTriplet)]) -> Vec<LabeledGroup> {
        par::map_slice(samples, |&(id, label, roi)| LabeledGroup {
            id: id.to_string(),
            label,
            images: self.inputs(kind, roi),
        })
    }
}

/// Training outcome of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
    pub audit: Option<OneClassAudit>,
}

impl TrainedModel {
    pub fn log_csv(&self) -> String {
        match self.kind {
            ModelKind::Vae => self.log.to_csv("recon", "kl"),
            _ => self.log.to_csv("loss_D", "loss_G"),
        }
    }
}

/// Trains one of the five models on prepared groups.
pub fn train_model(
    kind: ModelKind,
    specs: &ModeSpecs,
    train: &[LabeledGroup],
    val_live: &[LabeledGroup],
    val_spoof: &[LabeledGroup],
    cfg: &TrainConfig,
) -> Result<TrainedModel, NnError> {
    match specs.discriminator(kind) {
        Some(spec) => {
            let out = train_gan(train, val_live, val_spoof, spec, cfg)?;
            Ok(TrainedModel {
                kind,
                checkpoint: out.discriminator,
                log: out.log,
                audit: Some(out.audit),
            })
        }
        None => {
            let out = train_vae(train, val_live, &specs.vae, cfg)?;
            Ok(TrainedModel {
                kind,
                checkpoint: out.checkpoint,
                log: out.log,
                audit: None,
            })
        }
    }
}

/// Lower median of the VAE's validation live reconstruction errors.
pub fn vae_tau(vae: &Checkpoint, val_live: &[LabeledGroup]) -> Result<f64, DetectorError> {
    let net = vae.vae()?;
    let errs = val_live
        .iter()
        .map(|g| validation_recon_error(&net, std::slice::from_ref(g)))
        .collect::<Result<Vec<_>, _>>()?;
    calibrate_vae_tau(&errs)
}

/// Scores every ROI; the output order follows the input order.
pub fn score_all(det: &Detector, rois: &[&RoiTriplet]) -> Result<Vec<ComponentScores>, DetectorError> {
    par::map_slice(rois, |roi| det.score(roi)).into_iter().collect()
}

/// Builds the bundle from five trained checkpoints.
pub fn assemble_bundle(models: [Checkpoint; 5], vae_tau: f64) -> ModelBundle {
    let [d_direct, d_raw, d_processed, d_patch, vae] = models;
    ModelBundle {
        d_direct,
        d_raw,
        d_processed,
        d_patch,
        vae,
        vae_tau,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_specs_validate() {
        for mode in [Mode::Full256, Mode::Mini64] {
            let s = mode.specs();
            for k in &ModelKind::ALL[..4] {
                s.discriminator(*k).unwrap().validate().unwrap();
            }
            s.vae.validate().unwrap();
        }
        assert_eq!(Mode::Full256.specs().direct.conv_channels.len(), 5);
    }

    #[test]
    fn mode_names() {
        assert_eq!(serde_json::to_string(&Mode::Mini64).unwrap(), "\"mini_64\"");
        assert_eq!(ModelKind::parse("patch"), Some(ModelKind::Patch));
    }
}
