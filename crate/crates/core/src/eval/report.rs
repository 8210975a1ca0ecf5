use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{fraction_below, roc_auc, tdr_at_fdr};
use super::EvalError;
use crate::corpus::Label;
use crate::detector::{ComponentScores, ScoreRow, SCORE_HEADER};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    /// Parses the detector's score CSV. Row numbers are 1-based file lines.
    pub fn parse_csv(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == SCORE_HEADER => {}
            Some((_, h)) => {
                return Err(EvalError::Parse {
                    row: 1,
                    message: format!("unexpected header {h:?}"),
                })
            }
            None => return Err(EvalError::Parse { row: 1, message: "empty file".into() }),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let row = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim_end().split(',').collect();
            if f.len() != 9 {
                return Err(EvalError::Parse {
                    row,
                    message: format!("{} fields, expected 9", f.len()),
                });
            }
            let label = Label::parse(f[1]).ok_or_else(|| EvalError::UnknownLabel {
                row,
                label: f[1].to_string(),
            })?;
            let material = (!f[2].is_empty()).then(|| f[2].to_string());
            if (label == Label::Spoof) != material.is_some() {
                return Err(EvalError::Parse {
                    row,
                    message: "material must be present exactly for spoof rows".into(),
                });
            }
            let mut v = [0.0; 6];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = f[3 + k].parse().map_err(|e| EvalError::Parse {
                    row,
                    message: format!("column {}: {e}", 4 + k),
                })?;
                if !(0.0..=1.0).contains(slot) {
                    return Err(EvalError::Parse {
                        row,
                        message: format!("column {} value {} outside [0, 1]", 4 + k, slot),
                    });
                }
            }
            rows.push(ScoreRow {
                sample_id: f[0].to_string(),
                label,
                material,
                scores: ComponentScores {
                    s_direct: v[0],
                    s_raw: v[1],
                    s_processed: v[2],
                    s_patches: v[3],
                    s_vae: v[4],
                    s_fused: v[5],
                },
            });
        }
        Ok(Self { rows })
    }

    pub fn fused(&self, label: Label) -> Vec<f64> {
        self.column(label, |s| s.s_fused)
    }

    pub fn column(&self, label: Label, f: impl Fn(&ComponentScores) -> f64) -> Vec<f64> {
        self.rows.iter().filter(|r| r.label == label).map(|r| f(&r.scores)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialTdr {
    pub tdr: f64,
    pub count: usize,
    pub detected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub manifest_hash: String,
    pub bundle_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fdr_target: f64,
    pub threshold: f64,
    /// Where the live scores setting the threshold came from.
    pub threshold_source: String,
    pub realized_fdr: f64,
    pub overall_tdr: f64,
    pub n_live: usize,
    pub n_spoof: usize,
    pub per_material: BTreeMap<String, MaterialTdr>,
    pub mean_tdr_across_materials: f64,
    pub weighted_mean_tdr: f64,
    pub auc: f64,
    /// ROC AUC of each component score on its own.
    pub component_auc: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// One global threshold from every live row; per-material TDRs against it.
pub fn per_material_report(table: &ScoreTable, fdr_target: f64) -> Result<EvalReport, EvalError> {
    let live = table.fused(Label::Live);
    let spoof = table.fused(Label::Spoof);
    let op = tdr_at_fdr(&live, &spoof, fdr_target)?;
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, r) in table.rows.iter().enumerate() {
        if r.label == Label::Spoof {
            let m = r.material.clone().ok_or_else(|| EvalError::Parse {
                row: i + 2,
                message: "spoof row without material".into(),
            })?;
            groups.entry(m).or_default().push(r.scores.s_fused);
        }
    }
    let per_material: BTreeMap<String, MaterialTdr> = groups
        .into_iter()
        .map(|(m, s)| {
            let detected = s.iter().filter(|&&v| v < op.threshold).count();
            (
                m,
                MaterialTdr {
                    tdr: fraction_below(&s, op.threshold),
                    count: s.len(),
                    detected,
                },
            )
        })
        .collect();
    let mean = per_material.values().map(|m| m.tdr).sum::<f64>() / per_material.len() as f64;
    let weighted = per_material.values().map(|m| m.detected).sum::<usize>() as f64 / spoof.len() as f64;
    let names = ["s_direct", "s_raw", "s_processed", "s_patches", "s_vae", "s_fused"];
    let mut component_auc = BTreeMap::new();
    for (k, name) in names.iter().enumerate() {
        let pick = |s: &ComponentScores| if k < 5 { s.components()[k] } else { s.s_fused };
        let a = roc_auc(&table.column(Label::Live, pick), &table.column(Label::Spoof, pick))?;
        component_auc.insert(name.to_string(), a);
    }
    Ok(EvalReport {
        fdr_target,
        threshold: op.threshold,
        threshold_source: "live test scores".into(),
        realized_fdr: op.realized_fdr,
        overall_tdr: op.tdr,
        n_live: live.len(),
        n_spoof: spoof.len(),
        per_material,
        mean_tdr_across_materials: mean,
        weighted_mean_tdr: weighted,
        auc: component_auc["s_fused"],
        component_auc,
        timing_ms: None,
        provenance: None,
    })
}

impl EvalReport {
    /// Plain-text table with one row per material and the averages.
    pub fn to_text(&self) -> String {
        let width = self.per_material.keys().map(String::len).max().unwrap_or(8).max(22);
        let mut s = String::new();
        let _ = writeln!(s, "TDR at FDR = {:.2}% (threshold {:.6}, realized FDR {:.2}%)", self.fdr_target * 100.0, self.threshold, self.realized_fdr * 100.0);
        let _ = writeln!(s, "threshold from {}; {} live, {} spoof", self.threshold_source, self.n_live, self.n_spoof);
        let _ = writeln!(s, "{:<width$}  {:>8}  {:>8}", "material", "# test", "TDR (%)");
        for (m, r) in &self.per_material {
            let _ = writeln!(s, "{:<width$}  {:>8}  {:>8.1}", m, r.count, r.tdr * 100.0);
        }
        let _ = writeln!(s, "{:<width$}  {:>8}  {:>8.1}", "mean across materials", self.n_spoof, self.mean_tdr_across_materials * 100.0);
        let _ = writeln!(s, "{:<width$}  {:>8}  {:>8.1}", "weighted by count", self.n_spoof, self.weighted_mean_tdr * 100.0);
        let _ = writeln!(s, "ROC AUC {:.4}", self.auc);
        if let Some(t) = &self.timing_ms {
            for (k, v) in t {
                let _ = writeln!(s, "{k:<width$}  {v:>8.2} ms");
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, label: Label, mat: Option<&str>, s: f64) -> ScoreRow {
        ScoreRow {
            sample_id: id.into(),
            label,
            material: mat.map(str::to_string),
            scores: ComponentScores::from_components([s; 5]).unwrap(),
        }
    }

    #[test]
    fn two_materials_split_by_threshold() {
        let mut rows = vec![];
        for i in 0..10 {
            rows.push(row(&format!("l{i}"), Label::Live, None, 0.6 + i as f64 * 0.01));
        }
        rows.push(row("a", Label::Spoof, Some("Gelatin"), 0.1));
        rows.push(row("b", Label::Spoof, Some("Gelatin"), 0.2));
        rows.push(row("c", Label::Spoof, Some("Playdoh"), 0.9));
        let r = per_material_report(&ScoreTable { rows }, 0.0).unwrap();
        assert_eq!(r.per_material["Gelatin"].tdr, 1.0);
        assert_eq!(r.per_material["Playdoh"].tdr, 0.0);
        assert_eq!(r.mean_tdr_across_materials, 0.5);
        assert!((r.weighted_mean_tdr - 2.0 / 3.0).abs() < 1e-12);
        let text = r.to_text();
        assert!(text.contains("Gelatin") && text.contains("Playdoh"));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let rows = vec![row("l", Label::Live, None, 0.5), row("s", Label::Spoof, Some("m"), 0.25)];
        let csv = crate::detector::score_csv(&rows);
        assert_eq!(ScoreTable::parse_csv(&csv).unwrap().rows, rows);
        let bad = format!("{csv}x,live,,0.1,0.1\n");
        assert!(matches!(ScoreTable::parse_csv(&bad), Err(EvalError::Parse { row: 4, .. })));
        let bad = format!("{csv}x,alive,,0.1,0.1,0.1,0.1,0.1,0.1\n");
        assert!(matches!(ScoreTable::parse_csv(&bad), Err(EvalError::UnknownLabel { row: 4, .. })));
    }

    #[test]
    fn empty_class_rejected() {
        let rows = vec![row("l", Label::Live, None, 0.5)];
        assert_eq!(per_material_report(&ScoreTable { rows }, 0.1), Err(EvalError::EmptyScores));
    }
}
