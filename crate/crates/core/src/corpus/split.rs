use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, DatasetManifest, Label};

pub const DEFAULT_SPOOF_VAL_FRACTION: f64 = 0.05;
pub const DEFAULT_SPOOF_VAL_CAP: usize = 150;

/// One of the two material groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MaterialGroup {
    A,
    B,
}

/// Set1 trains on group A and tests on group B; Set2 swaps the roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Set1,
    Set2,
}

impl Partition {
    fn train_group(self) -> MaterialGroup {
        match self {
            Partition::Set1 => MaterialGroup::A,
            Partition::Set2 => MaterialGroup::B,
        }
    }
}

/// The fixed assignment of the twelve reference materials.
pub fn reference_material_partition() -> BTreeMap<String, MaterialGroup> {
    let a = ["Dragonskin", "Ecoflex", "Crayola Magic", "2D Paper", "Body Latex", "Monster Latex"];
    let b = ["Gelatin", "Playdoh", "Woodglue", "Pigmented Ecoflex", "Gold Finger", "Transparency"];
    a.iter()
        .map(|m| (m.to_string(), MaterialGroup::A))
        .chain(b.iter().map(|m| (m.to_string(), MaterialGroup::B)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub material_partition: BTreeMap<String, MaterialGroup>,
    /// Location whose live records form the live test set.
    pub test_location: String,
    pub val_live_count: usize,
    pub spoof_val_fraction: f64,
    pub spoof_val_cap: usize,
    pub seed: u64,
}

impl SplitPlan {
    pub fn new(material_partition: BTreeMap<String, MaterialGroup>, test_location: impl Into<String>, val_live_count: usize, seed: u64) -> Self {
        Self {
            material_partition,
            test_location: test_location.into(),
            val_live_count,
            spoof_val_fraction: DEFAULT_SPOOF_VAL_FRACTION,
            spoof_val_cap: DEFAULT_SPOOF_VAL_CAP,
            seed,
        }
    }

    /// Number of validation spoofs drawn from `n` training-partition spoofs.
    pub fn spoof_val_count(&self, n: usize) -> usize {
        let k = (self.spoof_val_fraction * n as f64).round() as usize;
        k.clamp(usize::from(n > 0), self.spoof_val_cap.min(n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSplit {
    pub partition: Partition,
    pub seed: u64,
    pub test_location: String,
    pub material_partition: BTreeMap<String, MaterialGroup>,
    pub train_materials: BTreeSet<String>,
    pub test_materials: BTreeSet<String>,
    pub train_live: Vec<String>,
    pub val_live: Vec<String>,
    pub test_live: Vec<String>,
    pub val_spoof: Vec<String>,
    pub test_spoof: Vec<String>,
}

impl ProtocolSplit {
    pub fn lists(&self) -> [(&'static str, &[String]); 5] {
        [
            ("train_live", &self.train_live),
            ("val_live", &self.val_live),
            ("test_live", &self.test_live),
            ("val_spoof", &self.val_spoof),
            ("test_spoof", &self.test_spoof),
        ]
    }

    /// Checks pairwise disjointness and material membership against `m`.
    pub fn check(&self, m: &DatasetManifest) -> Result<(), CorpusError> {
        let idx = m.index();
        let mut seen: HashMap<&str, &str> = HashMap::new();
        for (name, ids) in self.lists() {
            for id in ids {
                if let Some(other) = seen.insert(id, name) {
                    return Err(CorpusError::Validation {
                        id: id.clone(),
                        message: format!("in both {other} and {name}"),
                    });
                }
                let rec = idx.get(id.as_str()).ok_or_else(|| CorpusError::Validation {
                    id: id.clone(),
                    message: "not in manifest".into(),
                })?;
                let want = if name.ends_with("live") { Label::Live } else { Label::Spoof };
                if rec.label != want {
                    return Err(CorpusError::Validation {
                        id: id.clone(),
                        message: format!("wrong label for {name}"),
                    });
                }
                let allowed = match name {
                    "val_spoof" => Some(&self.train_materials),
                    "test_spoof" => Some(&self.test_materials),
                    _ => None,
                };
                if let (Some(set), Some(mat)) = (allowed, &rec.material) {
                    if !set.contains(mat) {
                        return Err(CorpusError::Validation {
                            id: id.clone(),
                            message: format!("material {mat} not allowed in {name}"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Builds the live/spoof train, validation and test id lists.
///
/// Live test is every live record of the test location. The remaining live
/// records lose `val_live_count` uniformly drawn impressions to validation.
/// Validation spoofs are a seeded draw from the training-partition
/// materials; test spoofs are every record of the test-partition materials.
pub fn make_protocol_split(m: &DatasetManifest, partition: Partition, plan: &SplitPlan) -> Result<ProtocolSplit, CorpusError> {
    let locations = m.locations();
    if locations.len() < 2 {
        return Err(CorpusError::InsufficientData(format!("{} location(s), need 2", locations.len())));
    }
    if !locations.contains(plan.test_location.as_str()) {
        return Err(CorpusError::InsufficientData(format!("test location {} has no records", plan.test_location)));
    }
    let materials = m.materials();
    if materials.len() < 2 {
        return Err(CorpusError::InsufficientData(format!("{} material(s), need 2", materials.len())));
    }
    for mat in &materials {
        if !plan.material_partition.contains_key(*mat) {
            return Err(CorpusError::UnknownMaterial(mat.to_string()));
        }
    }
    if !(0.0..=1.0).contains(&plan.spoof_val_fraction) {
        return Err(CorpusError::Config {
            field: "spoof_val_fraction",
            message: "must lie in [0, 1]".into(),
        });
    }

    let train_group = partition.train_group();
    let (train_materials, test_materials): (BTreeSet<String>, BTreeSet<String>) = {
        let mut tr = BTreeSet::new();
        let mut te = BTreeSet::new();
        for mat in &materials {
            if plan.material_partition[*mat] == train_group {
                tr.insert(mat.to_string());
            } else {
                te.insert(mat.to_string());
            }
        }
        (tr, te)
    };
    if train_materials.is_empty() || test_materials.is_empty() {
        return Err(CorpusError::InsufficientData("both material partitions need spoof records".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);

    let (test_live, held_in): (Vec<_>, Vec<_>) = m
        .records
        .iter()
        .filter(|r| r.label == Label::Live)
        .partition(|r| r.location == plan.test_location);
    if test_live.is_empty() {
        return Err(CorpusError::InsufficientData("no live records at the test location".into()));
    }
    if plan.val_live_count >= held_in.len() {
        return Err(CorpusError::InsufficientData(format!(
            "{} live records outside the test location, {} requested for validation",
            held_in.len(),
            plan.val_live_count
        )));
    }
    let test_subjects: HashSet<&str> = test_live.iter().map(|r| r.subject_id.as_str()).collect();
    if let Some(r) = held_in.iter().find(|r| test_subjects.contains(r.subject_id.as_str())) {
        return Err(CorpusError::Validation {
            id: r.id.clone(),
            message: format!("subject {} appears on both train and test sides", r.subject_id),
        });
    }
    let val_idx: HashSet<usize> = sample(&mut rng, held_in.len(), plan.val_live_count).into_iter().collect();
    let mut train_live = Vec::new();
    let mut val_live = Vec::new();
    for (i, r) in held_in.iter().enumerate() {
        if val_idx.contains(&i) {
            val_live.push(r.id.clone());
        } else {
            train_live.push(r.id.clone());
        }
    }

    let spoofs = || m.records.iter().filter(|r| r.label == Label::Spoof);
    let in_train = |r: &&super::SampleRecord| r.material.as_ref().is_some_and(|x| train_materials.contains(x));
    let pool: Vec<_> = spoofs().filter(in_train).collect();
    let k = plan.spoof_val_count(pool.len());
    let mut picked: Vec<usize> = sample(&mut rng, pool.len(), k).into_vec();
    picked.sort_unstable();
    let val_spoof = picked.iter().map(|&i| pool[i].id.clone()).collect();
    let test_spoof = spoofs().filter(|r| !in_train(r)).map(|r| r.id.clone()).collect();

    let split = ProtocolSplit {
        partition,
        seed: plan.seed,
        test_location: plan.test_location.clone(),
        material_partition: plan.material_partition.clone(),
        train_materials,
        test_materials,
        train_live,
        val_live,
        test_live: test_live.iter().map(|r| r.id.clone()).collect(),
        val_spoof,
        test_spoof,
    };
    split.check(m)?;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SampleRecord;

    fn rec(id: usize, label: Label, material: Option<&str>, location: &str) -> SampleRecord {
        SampleRecord {
            id: format!("r{id}"),
            path_direct: "d.png".into(),
            path_raw: "r.png".into(),
            path_processed: "p.png".into(),
            label,
            material: material.map(str::to_string),
            location: location.into(),
            subject_id: format!("{location}_{}", id / 10),
            finger_id: "0".into(),
        }
    }

    fn small() -> (DatasetManifest, SplitPlan) {
        let mut recs = Vec::new();
        for i in 0..60 {
            recs.push(rec(i, Label::Live, None, ["loc_0", "loc_1", "loc_2"][i % 3]));
        }
        for i in 0..40 {
            recs.push(rec(100 + i, Label::Spoof, Some(["m0", "m1", "m2", "m3"][i % 4]), "loc_0"));
        }
        let map = [("m0", MaterialGroup::A), ("m1", MaterialGroup::B), ("m2", MaterialGroup::A), ("m3", MaterialGroup::B)]
            .iter()
            .map(|(m, g)| (m.to_string(), *g))
            .collect();
        (DatasetManifest::new(recs).unwrap(), SplitPlan::new(map, "loc_0", 5, 9))
    }

    #[test]
    fn counts_and_materials() {
        let (m, plan) = small();
        let s = make_protocol_split(&m, Partition::Set1, &plan).unwrap();
        assert_eq!((s.train_live.len(), s.val_live.len(), s.test_live.len()), (35, 5, 20));
        assert_eq!(s.test_spoof.len(), 20);
        assert_eq!(s.val_spoof.len(), 1);
        assert!(s.train_materials.contains("m0") && s.test_materials.contains("m1"));
        let s2 = make_protocol_split(&m, Partition::Set2, &plan).unwrap();
        assert_eq!(s2.train_materials, s.test_materials);
    }

    #[test]
    fn deterministic_for_seed() {
        let (m, plan) = small();
        let a = make_protocol_split(&m, Partition::Set1, &plan).unwrap();
        let b = make_protocol_split(&m, Partition::Set1, &plan).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_material_rejected() {
        let (m, mut plan) = small();
        plan.material_partition.remove("m3");
        assert_eq!(
            make_protocol_split(&m, Partition::Set1, &plan),
            Err(CorpusError::UnknownMaterial("m3".into()))
        );
    }

    #[test]
    fn val_count_rule() {
        let (_, plan) = small();
        assert_eq!(plan.spoof_val_count(3219), 150);
        assert_eq!(plan.spoof_val_count(1000), 50);
        assert_eq!(plan.spoof_val_count(4), 1);
        assert_eq!(plan.spoof_val_count(0), 0);
    }
}
