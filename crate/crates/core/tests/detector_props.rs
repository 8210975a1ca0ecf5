mod common;

use pad_core::detector::*;
use pad_core::pipeline::Mode;
use pad_core::preprocess::Image;
use pad_core::RoiTriplet;
use proptest::prelude::*;

fn roi(seed: u8) -> RoiTriplet {
    RoiTriplet {
        direct: Image::from_fn(256, 256, 3, |x, y, c| (x as u8).wrapping_mul(3) ^ (y as u8).wrapping_add(seed) ^ c as u8),
        raw: Image::from_fn(256, 256, 3, |x, y, c| ((x / 7 + y / 5) as u8).wrapping_mul(seed | 1).wrapping_add(c as u8 * 40)),
        processed: Image::from_fn(256, 256, 1, |x, y, _| if ((x + seed as usize) / 4 + y / 4) % 2 == 0 { 30 } else { 220 }),
    }
}

#[test]
fn vae_normalization_fixed_points() {
    for tau in [0.01, 0.3, 2.5] {
        assert_eq!(normalize_vae(0.0, tau).unwrap(), 1.0);
        assert_eq!(normalize_vae(tau, tau).unwrap(), 0.5);
        assert_eq!(normalize_vae(2.0 * tau, tau).unwrap(), 0.25);
    }
    assert!(matches!(normalize_vae(1.0, 0.0), Err(DetectorError::Calibration(_))));
    assert!(matches!(normalize_vae(-1.0, 1.0), Err(DetectorError::Domain(_))));
    assert_eq!(calibrate_vae_tau(&[0.4, 0.1, 0.3, 0.2]).unwrap(), 0.2);
    assert!(matches!(calibrate_vae_tau(&[]), Err(DetectorError::EmptyCalibration)));
}

#[test]
fn fusion_rejects_out_of_range() {
    assert!(fuse(&[0.5, 0.5, 1.2, 0.5, 0.5]).is_err());
    assert!(fuse(&[0.5, f64::NAN, 0.5, 0.5, 0.5]).is_err());
    assert_eq!(detect(0.4, 0.4), Decision::Live);
    assert_eq!(detect(0.39, 0.4), Decision::Spoof);
}

#[test]
fn view_scores_come_from_their_own_networks() {
    let specs = Mode::Mini64.specs();
    let base = common::untrained_bundle(&specs, 10);
    let det = Detector::from_bundle(&base).unwrap();
    let r = roi(3);
    let s = det.score(&r).unwrap();
    assert!((s.s_fused - s.components().iter().sum::<f64>() / 5.0).abs() < 1e-12);

    // replace one view network at a time; only its own score may move
    let other = common::untrained_bundle(&specs, 77);
    let swaps: [(fn(&mut pad_core::ModelBundle, &pad_core::ModelBundle), usize); 4] = [
        (|b, o| b.d_direct = o.d_direct.clone(), 0),
        (|b, o| b.d_raw = o.d_raw.clone(), 1),
        (|b, o| b.d_processed = o.d_processed.clone(), 2),
        (|b, o| b.d_patch = o.d_patch.clone(), 3),
    ];
    for (swap, k) in swaps {
        let mut b = base.clone();
        swap(&mut b, &other);
        let t = Detector::from_bundle(&b).unwrap().score(&r).unwrap();
        for j in 0..5 {
            if j == k {
                assert_ne!(t.components()[j], s.components()[j], "component {k}");
            } else {
                assert_eq!(t.components()[j], s.components()[j], "swap {k} moved {j}");
            }
        }
    }
    // each view model sees its own view
    let mut r2 = r.clone();
    r2.raw = roi(9).raw;
    let t = det.score_views(&r2).unwrap();
    let s3 = det.score_views(&r).unwrap();
    assert_eq!((t.0, t.2), (s3.0, s3.2));
    assert_ne!(t.1, s3.1);
}

#[test]
fn wrong_channel_count_is_a_shape_error() {
    let det = Detector::from_bundle(&common::untrained_bundle(&Mode::Mini64.specs(), 1)).unwrap();
    let mut r = roi(1);
    r.processed = Image::new(256, 256, 3);
    assert!(matches!(det.score(&r), Err(DetectorError::Shape { view: "processed", .. })));
}

#[test]
fn bundle_round_trip_and_missing_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let b = common::untrained_bundle(&Mode::Mini64.specs(), 2);
    b.save(dir.path()).unwrap();
    assert_eq!(ModelBundle::load(dir.path()).unwrap(), b);
    std::fs::remove_file(dir.path().join("models/patch.json")).unwrap();
    assert!(matches!(ModelBundle::load(dir.path()), Err(DetectorError::Bundle(_))));
}

#[test]
fn scoring_is_deterministic() {
    let det = Detector::from_bundle(&common::untrained_bundle(&Mode::Mini64.specs(), 5)).unwrap();
    let r = roi(4);
    assert_eq!(det.score(&r).unwrap(), det.score(&r).unwrap());
    let single = pad_core::par::single_threaded(|| det.score(&r).unwrap());
    assert_eq!(single, det.score(&r).unwrap());
}

fn comps() -> impl Strategy<Value = [f64; 5]> {
    prop::array::uniform5(0.0f64..=1.0)
}

proptest! {
    #[test]
    fn fusion_is_the_exact_mean(c in comps()) {
        let f = fuse(&c).unwrap();
        let manual = (c[0] + c[1] + c[2] + c[3] + c[4]) / 5.0;
        prop_assert!((f - manual).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn fusion_is_permutation_invariant(c in comps(), perm in Just([0usize, 1, 2, 3, 4]).prop_shuffle()) {
        let p: [f64; 5] = std::array::from_fn(|i| c[perm[i]]);
        prop_assert!((fuse(&c).unwrap() - fuse(&p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fusion_is_monotone(c in comps(), k in 0usize..5, bump in 0.0f64..1.0) {
        let mut d = c;
        d[k] = (c[k] + bump).min(1.0);
        prop_assert!(fuse(&d).unwrap() >= fuse(&c).unwrap());
    }

    #[test]
    fn normalize_vae_strictly_decreasing(a in 0.0f64..100.0, b in 0.0f64..100.0, tau in 0.01f64..10.0) {
        prop_assume!(a < b && (b - a) > 1e-9 * tau);
        prop_assert!(normalize_vae(a, tau).unwrap() > normalize_vae(b, tau).unwrap());
    }

    #[test]
    fn decisions_survive_monotone_rescaling(s in 0.0f64..1.0, t in 0.0f64..1.0, k in 0.1f64..5.0) {
        prop_assume!((s - t).abs() > 1e-9);
        let f = |v: f64| v.powf(k) * 0.5 + 0.25;
        prop_assert_eq!(detect(s, t), detect(f(s), f(t)));
    }
}
