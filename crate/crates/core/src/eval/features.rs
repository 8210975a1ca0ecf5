//! Export of the concatenated view-discriminator features.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::EvalError;
use crate::corpus::Label;
use crate::detector::Detector;
use crate::par;
use crate::preprocess::RoiTriplet;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub sample_id: String,
    pub label: Label,
    pub material: Option<String>,
    pub features: Vec<f64>,
}

pub fn features_csv(rows: &[FeatureRow]) -> String {
    let dim = rows.first().map_or(0, |r| r.features.len());
    let mut s = String::from("sample_id,label,material");
    for i in 0..dim {
        let _ = write!(s, ",f_{i}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{},{}", r.sample_id, r.label.as_str(), r.material.as_deref().unwrap_or(""));
        for v in &r.features {
            let _ = write!(s, ",{v:.6}");
        }
        s.push('\n');
    }
    s
}

/// Computes direct, raw and processed features for each sample and writes
/// them as CSV. Returns the rows written.
pub fn export_features(
    det: &Detector,
    samples: &[(String, Label, Option<String>, RoiTriplet)],
    out_path: &Path,
) -> Result<Vec<FeatureRow>, EvalError> {
    let rows = par::map_slice(samples, |(id, label, material, roi)| -> Result<FeatureRow, EvalError> {
        Ok(FeatureRow {
            sample_id: id.clone(),
            label: *label,
            material: material.clone(),
            features: det.features(roi)?,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = out_path.parent() {
        fs::create_dir_all(dir).map_err(|e| EvalError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(out_path, features_csv(&rows)).map_err(|e| EvalError::Io(format!("{}: {e}", out_path.display())))?;
    Ok(rows)
}
