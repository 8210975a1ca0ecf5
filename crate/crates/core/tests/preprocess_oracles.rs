mod common;

use common::*;
use pad_core::corpus::{synth_capture, SynthConfig};
use pad_core::preprocess::roi::{crop, window_for};
use pad_core::preprocess::stages::{connected_components, dilate, equalize, erode, gaussian_kernel, luma};
use pad_core::preprocess::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: usize = 60;

fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed ^ salt)
}

fn dims(r: &mut impl Rng) -> (usize, usize) {
    (r.gen_range(1..=48), r.gen_range(1..=48))
}

#[test]
fn luma_matches_exact_rounding() {
    let mut r = rng(1);
    for _ in 0..CASES {
        let (w, h) = dims(&mut r);
        let img = random_rgb(&mut r, w, h);
        let out = luma(&img);
        for (p, &v) in img.data().chunks_exact(3).zip(out.data()) {
            assert_eq!(v, oracle_luma(p[0], p[1], p[2]));
        }
    }
    // every colour whose weighted sum lands exactly on a half
    for g in 0..=255u8 {
        for b in 0..=255u8 {
            let img = Image::from_vec(1, 1, 3, vec![7, g, b]).unwrap();
            assert_eq!(luma(&img).data()[0], oracle_luma(7, g, b));
        }
    }
}

#[test]
fn equalize_matches_counting_oracle() {
    let mut r = rng(2);
    for _ in 0..CASES {
        let (w, h) = dims(&mut r);
        let img = random_gray(&mut r, w, h);
        assert_eq!(equalize(&img).data(), &oracle_equalize(&img)[..]);
    }
}

#[test]
fn laplacian_matches_dense_oracle() {
    let mut r = rng(3);
    for _ in 0..CASES {
        let (w, h) = dims(&mut r);
        let img = random_gray(&mut r, w, h);
        let got = laplacian_magnitude(&img).unwrap();
        // integer inputs, so the result is exact
        assert_eq!(got, oracle_laplacian(&img));
    }
}

#[test]
fn gaussian_matches_dense_oracle() {
    let mut r = rng(4);
    for _ in 0..CASES {
        let (w, h) = dims(&mut r);
        let img = random_real(&mut r, w, h);
        let d = max_abs_diff(&gaussian_smooth(&img), &oracle_gaussian(&img));
        assert!(d < 1e-6, "{w}x{h}: {d}");
    }
}

#[test]
fn gaussian_interior_impulse_is_the_kernel() {
    let k = oracle_gaussian_kernel_2d();
    let img = RealImage::from_fn(48, 48, |x, y| if (x, y) == (24, 24) { 1.0 } else { 0.0 });
    let out = gaussian_smooth(&img);
    for j in 0..30 {
        for i in 0..30 {
            // tap i reads offset i - 15, so the impulse lands at 24 + 15 - i
            let v = out.get(39 - i, 39 - j);
            assert!((v - k[j][i]).abs() < 1e-12);
        }
    }
    let sep = gaussian_kernel(30, 5.0);
    assert!((sep.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn gaussian_mass_is_conserved_away_from_borders() {
    // a blob far from the edges keeps its total mass
    let img = RealImage::from_fn(96, 96, |x, y| if (44..52).contains(&x) && (40..50).contains(&y) { 10.0 } else { 0.0 });
    let before: f64 = img.data.iter().sum();
    let after: f64 = gaussian_smooth(&img).data.iter().sum();
    assert!((before - after).abs() < 1e-6);

    let mut r = rng(5);
    let small = random_real(&mut r, 48, 48);
    let d = max_abs_diff(&gaussian_smooth(&small), &oracle_gaussian(&small));
    assert!(d < 1e-6);
}

#[test]
fn binarize_and_opening_match_exhaustive_morphology() {
    let mut r = rng(6);
    for _ in 0..CASES {
        let (w, h) = dims(&mut r);
        let img = RealImage::from_fn(w, h, |_, _| if r.gen_bool(0.6) { r.gen_range(70.0..80.0) } else { 75.0 });
        assert_eq!(binarize_clean(&img), oracle_binarize_clean(&img));
    }
}

#[test]
fn erode_dilate_match_window_scan() {
    let mut r = rng(7);
    for _ in 0..CASES {
        let (w, h) = dims(&mut r);
        let img = random_gray(&mut r, w, h);
        let lifted = RealImage::from_fn(w, h, |x, y| if img.get(x, y, 0) > 128 { 100.0 } else { 0.0 });
        let bin = Image::from_fn(w, h, 1, |x, y, _| if lifted.get(x, y) > 75.0 { 255 } else { 0 });
        let opened = dilate(&erode(&bin, 5), 5);
        assert_eq!(opened, oracle_binarize_clean(&lifted));
    }
}

#[test]
fn speck_removed_block_kept() {
    let speck = RealImage::from_fn(48, 48, |x, y| if (20..23).contains(&x) && (30..33).contains(&y) { 255.0 } else { 0.0 });
    assert!(binarize_clean(&speck).data().iter().all(|&v| v == 0));
    let block = RealImage::from_fn(48, 48, |x, y| if (14..34).contains(&x) && (14..34).contains(&y) { 255.0 } else { 0.0 });
    let out = binarize_clean(&block);
    assert_eq!(out, oracle_binarize_clean(&block));
    assert_eq!(out.data().iter().filter(|&&v| v != 0).count(), 400);
}

#[test]
fn components_match_label_propagation() {
    let mut r = rng(8);
    for _ in 0..CASES {
        let (w, h) = dims(&mut r);
        let img = random_binary(&mut r, w, h);
        let got = connected_components(&img);
        let want = oracle_components(&img);
        assert_eq!(got.len(), want.len());
        for (g, (first, area, c)) in got.iter().zip(&want) {
            assert_eq!((g.first_index, g.area), (*first, *area));
            assert!((g.centroid.0 - c.0).abs() < 1e-9 && (g.centroid.1 - c.1).abs() < 1e-9);
        }
        match largest_blob_centroid(&img) {
            Ok(c) => assert_eq!(Some(c), oracle_largest_centroid(&img)),
            Err(PreprocessError::NoForeground) => assert!(want.is_empty()),
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn crop_matches_pixelwise_copy() {
    let mut r = rng(9);
    for _ in 0..CASES {
        let (w, h) = dims(&mut r);
        let img = random_rgb(&mut r, w, h);
        let size = r.gen_range(1..64);
        let center = (r.gen_range(-5.0..w as f64 + 5.0), r.gen_range(-5.0..h as f64 + 5.0));
        let win = window_for(&img, center, size);
        let out = crop(&img, win);
        for oy in 0..size {
            for ox in 0..size {
                let (sx, sy) = (win.x0 + ox as i64, win.y0 + oy as i64);
                let inside = sx >= 0 && sy >= 0 && sx < w as i64 && sy < h as i64;
                for c in 0..3 {
                    let want = if inside { img.get(sx as usize, sy as usize, c) } else { 0 };
                    assert_eq!(out.get(ox, oy, c), want);
                }
            }
        }
    }
}

fn shifted(img: &Image, dx: isize, dy: isize) -> Image {
    let (w, h) = (img.width() as isize, img.height() as isize);
    Image::from_fn(img.width(), img.height(), img.channels(), |x, y, c| {
        let sx = (x as isize - dx).clamp(0, w - 1) as usize;
        let sy = (y as isize - dy).clamp(0, h - 1) as usize;
        img.get(sx, sy, c)
    })
}

#[test]
fn synthetic_centroid_near_ground_truth() {
    let cfg = SynthConfig::default();
    for i in 0..6 {
        let s = synth_capture(&cfg, i, false, None).unwrap();
        let c = locate_finger_centroid(&s.triplet.direct);
        let err = ((c.0 - s.center.0).powi(2) + (c.1 - s.center.1).powi(2)).sqrt();
        assert!(err < 20.0, "sample {i}: {c:?} vs {:?}", s.center);
    }
}

fn locate_finger_centroid(direct: &Image) -> (f64, f64) {
    pad_core::preprocess::roi::locate_finger(direct).unwrap()
}

#[test]
fn centroid_follows_translation() {
    let cfg = SynthConfig::default();
    let s = synth_capture(&cfg, 3, false, None).unwrap();
    let base = locate_finger_centroid(&s.triplet.direct);
    for (dx, dy) in [(12, 0), (0, -9), (-15, 7)] {
        let c = locate_finger_centroid(&shifted(&s.triplet.direct, dx, dy));
        assert!((c.0 - base.0 - dx as f64).abs() <= 2.0, "{dx},{dy}: {c:?} vs {base:?}");
        assert!((c.1 - base.1 - dy as f64).abs() <= 2.0, "{dx},{dy}: {c:?} vs {base:?}");
    }
}

#[test]
fn roi_triplet_is_deterministic_and_aligned() {
    let cfg = SynthConfig::default();
    let s = synth_capture(&cfg, 5, true, Some("mat_1")).unwrap();
    let cal = Calibration::identity();
    let (a, meta) = extract_roi_triplet(&s.triplet, &cal).unwrap();
    let (b, _) = extract_roi_triplet(&s.triplet, &cal).unwrap();
    assert_eq!(a, b);
    assert_eq!(meta.window_direct, meta.window_raw);
    assert_eq!(meta.window_direct, meta.window_processed);
    for (img, ch) in [(&a.direct, 3), (&a.raw, 3), (&a.processed, 1)] {
        assert_eq!((img.width(), img.height(), img.channels()), (ROI_SIZE, ROI_SIZE, ch));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equalize_is_monotone(data in proptest::collection::vec(any::<u8>(), 1..400)) {
        let n = data.len();
        let img = Image::from_vec(n, 1, 1, data.clone()).unwrap();
        let eq = equalize(&img);
        for i in 0..n {
            for j in 0..n {
                if data[i] < data[j] {
                    prop_assert!(eq.data()[i] <= eq.data()[j]);
                }
            }
        }
    }

    #[test]
    fn opening_is_anti_extensive_and_idempotent(seed in any::<u64>(), w in 1usize..40, h in 1usize..40) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let img = random_binary(&mut r, w, h);
        let open = dilate(&erode(&img, 5), 5);
        for (o, i) in open.data().iter().zip(img.data()) {
            prop_assert!(o <= i);
        }
        prop_assert_eq!(dilate(&erode(&open, 5), 5), open);
    }

    #[test]
    fn laplacian_ignores_offset(seed in any::<u64>(), off in 0u8..50) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let img = Image::from_fn(17, 13, 1, |_, _, _| r.gen_range(0..200));
        let lifted = Image::from_fn(17, 13, 1, |x, y, _| img.get(x, y, 0) + off);
        prop_assert_eq!(laplacian_magnitude(&img).unwrap(), laplacian_magnitude(&lifted).unwrap());
    }
}
