use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, CorpusError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Live,
    Spoof,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Live => "live",
            Label::Spoof => "spoof",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "live" => Some(Label::Live),
            "spoof" => Some(Label::Spoof),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub path_direct: PathBuf,
    pub path_raw: PathBuf,
    pub path_processed: PathBuf,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
    pub location: String,
    pub subject_id: String,
    pub finger_id: String,
}

impl SampleRecord {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |message: &str| CorpusError::Validation {
            id: self.id.clone(),
            message: message.to_string(),
        };
        if self.id.is_empty() {
            return Err(bad("empty id"));
        }
        match (self.label, &self.material) {
            (Label::Spoof, None) => Err(bad("spoof record without material")),
            (Label::Live, Some(_)) => Err(bad("live record with material")),
            (Label::Spoof, Some(m)) if m.is_empty() => Err(bad("empty material")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
    pub schema_version: u32,
    /// Directory that relative image paths resolve against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    /// Validates the records; paths are not touched.
    pub fn new(records: Vec<SampleRecord>) -> Result<Self, CorpusError> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            r.validate()?;
            if let Some(first) = seen.insert(&r.id, i) {
                return Err(CorpusError::Validation {
                    id: r.id.clone(),
                    message: format!("duplicate id at records {} and {}", first + 1, i + 1),
                });
            }
        }
        Ok(Self {
            records,
            schema_version: SCHEMA_VERSION,
            root: PathBuf::new(),
        })
    }

    /// Sorted material inventory of the spoof records.
    pub fn materials(&self) -> BTreeSet<&str> {
        self.records.iter().filter_map(|r| r.material.as_deref()).collect()
    }

    pub fn locations(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.location.as_str()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn index(&self) -> HashMap<&str, &SampleRecord> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }
}

/// Parses JSON Lines text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_manifest(text: &str) -> Result<DatasetManifest, CorpusError> {
    let mut records = Vec::new();
    let mut lines: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        rec.validate()?;
        if let Some(first) = lines.insert(rec.id.clone(), line_no) {
            return Err(CorpusError::Validation {
                id: rec.id,
                message: format!("duplicate id on lines {first} and {line_no}"),
            });
        }
        records.push(rec);
    }
    DatasetManifest::new(records)
}

/// Loads a manifest and checks that every image path is a readable file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut m = parse_manifest(&text)?;
    m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    for r in &m.records {
        for p in [&r.path_direct, &r.path_raw, &r.path_processed] {
            let full = m.resolve(p);
            if fs::File::open(&full).is_err() {
                return Err(CorpusError::Validation {
                    id: r.id.clone(),
                    message: format!("unreadable image {}", full.display()),
                });
            }
        }
    }
    Ok(m)
}

pub fn save_manifest(m: &DatasetManifest, path: &Path) -> Result<(), CorpusError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, m.to_jsonl()).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, label: &str, material: Option<&str>) -> String {
        let mat = material.map(|m| format!(",\"material\":\"{m}\"")).unwrap_or_default();
        format!(
            "{{\"id\":\"{id}\",\"path_direct\":\"a.png\",\"path_raw\":\"b.png\",\"path_processed\":\"c.png\",\"label\":\"{label}\"{mat},\"location\":\"loc_0\",\"subject_id\":\"s\",\"finger_id\":\"f\"}}"
        )
    }

    #[test]
    fn parses_well_formed_lines() {
        let text = [line("a", "live", None), line("b", "spoof", Some("mat_0")), line("c", "live", None)].join("\n");
        let m = parse_manifest(&text).unwrap();
        assert_eq!(m.records.len(), 3);
        assert_eq!(m.materials().into_iter().collect::<Vec<_>>(), vec!["mat_0"]);
    }

    #[test]
    fn spoof_without_material_names_id() {
        let text = [line("a", "live", None), line("bad", "spoof", None)].join("\n");
        match parse_manifest(&text) {
            Err(CorpusError::Validation { id, .. }) => assert_eq!(id, "bad"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_cite_both_lines() {
        let mut lines: Vec<String> = (0..7).map(|i| line(&format!("x{i}"), "live", None)).collect();
        lines[6] = line("x1", "live", None);
        match parse_manifest(&lines.join("\n")) {
            Err(CorpusError::Validation { id, message }) => {
                assert_eq!(id, "x1");
                assert!(message.contains("lines 2 and 7"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = format!("{}\n{{not json\n", line("a", "live", None));
        assert!(matches!(parse_manifest(&text), Err(CorpusError::Parse { line: 2, .. })));
    }

    #[test]
    fn live_with_material_rejected() {
        assert!(parse_manifest(&line("a", "live", Some("m"))).is_err());
    }
}
