//! Timing checks live alone in this binary so no other test competes for
//! the CPU while they measure.

mod common;

use pad_core::corpus::{synth_capture, SynthConfig};
use pad_core::detector::Detector;
use pad_core::eval::*;
use pad_core::pipeline::Mode;
use pad_core::preprocess::Calibration;

#[test]
fn bench_stages_add_up_and_repeat() {
    let det = Detector::from_bundle(&common::untrained_bundle(&Mode::Mini64.specs(), 6)).unwrap();
    let capture = synth_capture(&SynthConfig::default(), 0, false, None).unwrap().triplet;
    let cal = Calibration::identity();
    assert!(benchmark_speed(&det, &capture, &cal, 4).is_err());

    let short = benchmark_speed(&det, &capture, &cal, 5).unwrap();
    let long = benchmark_speed(&det, &capture, &cal, 50).unwrap();
    for rep in [&short, &long] {
        let names: Vec<&str> = rep.stages.iter().map(|s| s.stage.as_str()).collect();
        assert_eq!(names, bench::STAGES);
        let sum: f64 = rep.stages.iter().map(|s| s.mean_ms).sum();
        let max = rep.stages.iter().map(|s| s.mean_ms).fold(0.0, f64::max);
        assert!(rep.total.mean_ms >= max);
        assert!((rep.total.mean_ms - sum).abs() <= 0.05 * sum + 0.5, "total {} vs sum {sum}", rep.total.mean_ms);
        assert_eq!(rep.reference, "paper: 778 ms (2.9 GHz i5, 8 GB)");
        assert!(!rep.reference_comparable);
        assert!(!rep.hardware.is_empty());
        assert!(rep.to_text().contains("not comparable"));
    }
    let se = |t: &StageTiming, n: usize| t.std_ms / (n as f64).sqrt();
    let tol = 3.0 * (se(&short.total, 5).powi(2) + se(&long.total, 50).powi(2)).sqrt();
    assert!((short.total.mean_ms - long.total.mean_ms).abs() <= tol, "{} vs {} (tol {tol})", short.total.mean_ms, long.total.mean_ms);
}
