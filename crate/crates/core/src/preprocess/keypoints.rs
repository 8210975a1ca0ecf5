//! Keypoint patches on the raw FTIR ROI.
//!
//! Keypoints are local maxima of the smoothed Laplacian magnitude of the
//! ROI luminance, thinned by greedy non-maximum suppression.

use super::image::{Image, RealImage};
use super::roi::crop;
use super::roi::Window;
use super::stages::{gaussian_kernel, laplacian_abs, separable_filter};

pub const PATCH_SIZE: usize = 64;
pub const PATCH_COUNT: usize = 16;
pub const RESPONSE_SIGMA: f64 = 3.0;
pub const SUPPRESSION_RADIUS: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: usize,
    pub y: usize,
    pub response: f64,
}

fn luminance(img: &Image) -> RealImage {
    let ch = img.channels();
    RealImage {
        width: img.width(),
        height: img.height(),
        data: img
            .data()
            .chunks_exact(ch)
            .map(|p| {
                if ch == 1 {
                    f64::from(p[0])
                } else {
                    0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
                }
            })
            .collect(),
    }
}

/// Keypoint response map: Gaussian (sigma 3) smoothed Laplacian magnitude.
pub fn response_map(img: &Image) -> RealImage {
    let size = 2 * (3.0 * RESPONSE_SIGMA).ceil() as usize + 1;
    separable_filter(&laplacian_abs(&luminance(img)), &gaussian_kernel(size, RESPONSE_SIGMA))
}

/// Up to `k` keypoints whose `patch`-sized crop fits inside the image.
pub fn detect_keypoints(img: &Image, k: usize, patch: usize) -> Vec<Keypoint> {
    let resp = response_map(img);
    let (w, h) = (resp.width, resp.height);
    let half = patch / 2;
    let mut cands = Vec::new();
    if w < patch || h < patch {
        return cands;
    }
    for y in half..=(h - patch + half) {
        for x in half..=(w - patch + half) {
            let v = resp.get(x, y);
            if v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'n: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if (dx, dy) != (0, 0) && resp.get_clamped(x as isize + dx, y as isize + dy) > v {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                cands.push(Keypoint { x, y, response: v });
            }
        }
    }
    // strongest first; equal responses keep scan order (stable sort)
    cands.sort_by(|a, b| b.response.total_cmp(&a.response));
    let mut kept: Vec<Keypoint> = Vec::new();
    for c in cands {
        if kept.len() == k {
            break;
        }
        let far = kept.iter().all(|q| {
            let dx = q.x as f64 - c.x as f64;
            let dy = q.y as f64 - c.y as f64;
            (dx * dx + dy * dy).sqrt() > SUPPRESSION_RADIUS
        });
        if far {
            kept.push(c);
        }
    }
    kept
}

/// `patch x patch` crops around up to `k` keypoints of `roi`; falls back to
/// the centre crop when nothing qualifies.
pub fn extract_patches(roi: &Image, k: usize, patch: usize) -> Vec<Image> {
    let half = patch as i64 / 2;
    let kps = detect_keypoints(roi, k.max(1), patch);
    if kps.is_empty() {
        let win = Window {
            x0: roi.width() as i64 / 2 - half,
            y0: roi.height() as i64 / 2 - half,
            size: patch,
        };
        return vec![crop(roi, win)];
    }
    kps.iter()
        .map(|kp| {
            crop(
                roi,
                Window {
                    x0: kp.x as i64 - half,
                    y0: kp.y as i64 - half,
                    size: patch,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_roi_falls_back_to_center() {
        let roi = Image::from_fn(256, 256, 3, |_, _, _| 80);
        let p = extract_patches(&roi, PATCH_COUNT, PATCH_SIZE);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].width(), p[0].height()), (64, 64));
    }

    #[test]
    fn separated_impulses_give_one_patch_each() {
        let spots = [(60usize, 70usize), (180, 60), (120, 190)];
        let roi = Image::from_fn(256, 256, 3, |x, y, _| if spots.contains(&(x, y)) { 255 } else { 0 });
        let kps = detect_keypoints(&roi, PATCH_COUNT, PATCH_SIZE);
        assert_eq!(kps.len(), 3);
        let mut found: Vec<_> = kps.iter().map(|k| (k.x, k.y)).collect();
        found.sort_unstable();
        let mut want = spots.to_vec();
        want.sort_unstable();
        assert_eq!(found, want);
        let patches = extract_patches(&roi, PATCH_COUNT, PATCH_SIZE);
        assert_eq!(patches.len(), 3);
        for p in &patches {
            assert_eq!(p.get(32, 32, 0), 255);
        }
    }

    #[test]
    fn close_maxima_are_suppressed() {
        let roi = Image::from_fn(256, 256, 1, |x, y, _| {
            if (x, y) == (100, 100) || (x, y) == (110, 100) {
                255
            } else {
                0
            }
        });
        assert_eq!(detect_keypoints(&roi, PATCH_COUNT, PATCH_SIZE).len(), 1);
    }
}
