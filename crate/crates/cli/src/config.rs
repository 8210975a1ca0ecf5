//! Run configuration: one JSON document drives every command.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pad_core::corpus::{reference_material_partition, MaterialGroup, Partition, SynthConfig};
use pad_core::nnkit::TrainConfig;
use pad_core::pipeline::{Mode, ModelKind};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding `manifest.jsonl`; defaults to `<output_root>/data`.
    pub data_root: Option<PathBuf>,
    pub output_root: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_root: None,
            output_root: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub partition: Partition,
    /// Live records of this location form the live test set; defaults to
    /// the first location in sorted order.
    pub test_location: Option<String>,
    pub val_live_count: usize,
    pub spoof_val_fraction: f64,
    pub spoof_val_cap: usize,
    /// Material to group assignment. When absent the reference assignment
    /// is used if it covers every material, otherwise materials alternate
    /// A, B, A, ... in sorted order.
    pub material_partition: Option<BTreeMap<String, MaterialGroup>>,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            partition: Partition::Set1,
            test_location: None,
            val_live_count: 500,
            spoof_val_fraction: 0.05,
            spoof_val_cap: 150,
            material_partition: None,
        }
    }
}

impl SplitSection {
    pub fn partition_for(&self, materials: &[&str]) -> BTreeMap<String, MaterialGroup> {
        if let Some(p) = &self.material_partition {
            return p.clone();
        }
        let reference = reference_material_partition();
        if materials.iter().all(|m| reference.contains_key(*m)) {
            return reference;
        }
        let mut sorted = materials.to_vec();
        sorted.sort_unstable();
        sorted
            .iter()
            .enumerate()
            .map(|(i, m)| (m.to_string(), if i % 2 == 0 { MaterialGroup::A } else { MaterialGroup::B }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub gan_direct: TrainConfig,
    pub gan_raw: TrainConfig,
    pub gan_processed: TrainConfig,
    pub gan_patch: TrainConfig,
    pub vae: TrainConfig,
}

impl TrainSection {
    pub fn get(&self, kind: ModelKind) -> &TrainConfig {
        match kind {
            ModelKind::Direct => &self.gan_direct,
            ModelKind::Raw => &self.gan_raw,
            ModelKind::Processed => &self.gan_processed,
            ModelKind::Patch => &self.gan_patch,
            ModelKind::Vae => &self.vae,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub fdr_target: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { fdr_target: 0.002 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub n_runs: usize,
    /// Sample to time; defaults to the first live record.
    pub sample: Option<String>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            n_runs: 20,
            sample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Master seed. Synthesis, splitting and training derive their seeds
    /// from it; seeds inside the sections are overwritten.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub deterministic_mode: bool,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    /// JSON file with the two direct-to-view homographies; identity if absent.
    #[serde(default)]
    pub calibration: Option<PathBuf>,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub bench: BenchSection,
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.eval.fdr_target > 0.0 && self.eval.fdr_target < 1.0) {
            return Err(CliError::config("eval.fdr_target must lie in (0, 1)"));
        }
        if let Some(s) = &self.synth {
            s.validate().map_err(|e| CliError::config(format!("synth: {e}")))?;
        }
        for kind in ModelKind::ALL {
            self.train
                .get(kind)
                .validate()
                .map_err(|e| CliError::config(format!("train.{}: {e}", section_name(kind))))?;
        }
        if self.bench.n_runs < 5 {
            return Err(CliError::config("bench.n_runs must be at least 5"));
        }
        let s = &self.split;
        if !(0.0..=1.0).contains(&s.spoof_val_fraction) {
            return Err(CliError::config("split.spoof_val_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Effective training settings of one model.
    pub fn train_config(&self, kind: ModelKind) -> TrainConfig {
        let k = ModelKind::ALL.iter().position(|&m| m == kind).unwrap_or(0) as u64;
        TrainConfig {
            seed: self.seed.wrapping_add(k),
            deterministic_mode: self.deterministic_mode,
            ..self.train.get(kind).clone()
        }
    }

    pub fn synth_config(&self) -> Option<SynthConfig> {
        self.synth.clone().map(|s| SynthConfig { seed: self.seed, ..s })
    }
}

pub fn section_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Direct => "gan_direct",
        ModelKind::Raw => "gan_raw",
        ModelKind::Processed => "gan_processed",
        ModelKind::Patch => "gan_patch",
        ModelKind::Vae => "vae",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::parse(r#"{"mode": "mini_64"}"#).unwrap();
        assert_eq!(c.eval.fdr_target, 0.002);
        assert_eq!(c.paths.output_root, PathBuf::from("out"));
        assert!(c.deterministic_mode);
    }

    #[test]
    fn unknown_fields_and_bad_values_are_config_errors() {
        assert_eq!(RunConfig::parse(r#"{"mode": "mini_64", "bogus": 1}"#).unwrap_err().code, 2);
        assert_eq!(RunConfig::parse(r#"{"mode": "huge"}"#).unwrap_err().code, 2);
        let e = RunConfig::parse(r#"{"mode": "mini_64", "eval": {"fdr_target": 0}}"#).unwrap_err();
        assert!(e.message.contains("fdr_target"));
        let e = RunConfig::parse(r#"{"mode": "mini_64", "synth": {"spoof_severity": 0}}"#).unwrap_err();
        assert!(e.message.contains("spoof_severity"), "{}", e.message);
    }

    #[test]
    fn seeds_derive_from_master() {
        let c = RunConfig::parse(r#"{"mode": "mini_64", "seed": 40, "synth": {"seed": 3}}"#).unwrap();
        assert_eq!(c.synth_config().unwrap().seed, 40);
        assert_eq!(c.train_config(ModelKind::Raw).seed, 41);
    }

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in ["tiny.json", "desk.json", "full.json"] {
            RunConfig::load(&dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn default_partition_alternates_unknown_materials() {
        let s = SplitSection::default();
        let p = s.partition_for(&["mat_1", "mat_0", "mat_2"]);
        assert_eq!(p["mat_0"], MaterialGroup::A);
        assert_eq!(p["mat_1"], MaterialGroup::B);
        assert_eq!(p["mat_2"], MaterialGroup::A);
        assert_eq!(s.partition_for(&["Gelatin", "Ecoflex"])["Gelatin"], MaterialGroup::B);
    }
}
