//! Wall-clock timing of the scoring pipeline, stage by stage.

use std::fs;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::detector::{fuse, normalize_vae, Detector};
use crate::par;
use crate::preprocess::{extract_roi_triplet, resize_to, Calibration, CaptureTriplet};

pub const REFERENCE_TIMING: &str = "paper: 778 ms (2.9 GHz i5, 8 GB)";
/// Discarded runs before timing starts; they fault in buffers and settle caches.
pub const WARMUP_RUNS: usize = 3;
pub const STAGES: [&str; 7] = ["preprocess", "score_direct", "score_raw", "score_processed", "patches", "vae", "fusion"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_runs: usize,
    pub stages: Vec<StageTiming>,
    /// Wall clock of the whole pipeline, timed separately from the stages.
    pub total: StageTiming,
    pub hardware: String,
    pub reference: String,
    /// The reference row was measured on different hardware.
    pub reference_comparable: bool,
}

impl BenchReport {
    pub fn stage_means(&self) -> Vec<(String, f64)> {
        self.stages.iter().map(|s| (s.stage.clone(), s.mean_ms)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<16} {:>10} {:>10}\n", "stage", "mean ms", "std ms");
        for t in self.stages.iter().chain(std::iter::once(&self.total)) {
            s.push_str(&format!("{:<16} {:>10.3} {:>10.3}\n", t.stage, t.mean_ms, t.std_ms));
        }
        s.push_str(&format!("hardware: {}\n{} (different hardware, not comparable)\n", self.hardware, self.reference));
        s
    }
}

fn summarize(stage: &str, xs: &[f64]) -> StageTiming {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    StageTiming {
        stage: stage.into(),
        mean_ms: mean,
        std_ms: var.sqrt(),
    }
}

/// CPU model, logical core count and memory, as far as the OS reveals them.
pub fn hardware_description() -> String {
    let cpu = fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|t| t.lines().find(|l| l.starts_with("model name")).and_then(|l| l.split(':').nth(1)).map(|s| s.trim().to_string()))
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mem = fs::read_to_string("/proc/meminfo")
        .ok()
        .and_then(|t| {
            t.lines()
                .find(|l| l.starts_with("MemTotal"))
                .and_then(|l| l.split_whitespace().nth(1))
                .and_then(|kb| kb.parse::<f64>().ok())
        })
        .map(|kb| format!(", {:.1} GB", kb / 1024.0 / 1024.0))
        .unwrap_or_default();
    format!("{cpu}, {cores} logical cores{mem}")
}

/// Times `n_runs` full scorings of `capture` on one thread after
/// `WARMUP_RUNS` discarded runs.
pub fn benchmark_speed(det: &Detector, capture: &CaptureTriplet, cal: &Calibration, n_runs: usize) -> Result<BenchReport, EvalError> {
    if n_runs < 5 {
        return Err(EvalError::Domain(format!("n_runs = {n_runs}, need at least 5")));
    }
    par::single_threaded(|| {
        let mut per_stage = vec![Vec::with_capacity(n_runs); STAGES.len()];
        let mut totals = Vec::with_capacity(n_runs);
        for run in 0..WARMUP_RUNS + n_runs {
            let mut t = [0.0; STAGES.len()];
            let start = Instant::now();
            let mut lap = Instant::now();
            let mut tick = |i: usize, lap: &mut Instant| {
                t[i] = lap.elapsed().as_secs_f64() * 1e3;
                *lap = Instant::now();
            };
            let (roi, _) = extract_roi_triplet(capture, cal)?;
            tick(0, &mut lap);
            let views = [&roi.direct, &roi.raw, &roi.processed];
            let mut comps = [0.0; 5];
            for (k, (d, img)) in det.view_models().into_iter().zip(views).enumerate() {
                comps[k] = d.score(&resize_to(img, d.spec.input_size)).map_err(crate::detector::DetectorError::from)?;
                tick(1 + k, &mut lap);
            }
            comps[3] = det.score_patches(&roi.raw)?.mean;
            tick(4, &mut lap);
            comps[4] = normalize_vae(det.vae_error(&roi.direct)?, det.vae_tau)?;
            tick(5, &mut lap);
            std::hint::black_box(fuse(&comps)?);
            tick(6, &mut lap);
            let total = start.elapsed().as_secs_f64() * 1e3;
            if run >= WARMUP_RUNS {
                for (i, v) in t.iter().enumerate() {
                    per_stage[i].push(*v);
                }
                totals.push(total);
            }
        }
        Ok(BenchReport {
            n_runs,
            stages: STAGES.iter().zip(&per_stage).map(|(s, xs)| summarize(s, xs)).collect(),
            total: summarize("total", &totals),
            hardware: hardware_description(),
            reference: REFERENCE_TIMING.into(),
            reference_comparable: false,
        })
    })
}
