//! Alignment window, cross-view mapping and ROI triplet extraction.

use serde::{Deserialize, Serialize};

use super::image::{round_half_up_u8, Image, RealImage};
use super::stages::{binarize_clean, gaussian_smooth, gray_equalize, laplacian_magnitude, largest_blob_centroid};
use super::{CaptureTriplet, PreprocessError, RoiTriplet};

/// Side of the square alignment window.
pub const WINDOW_SIZE: usize = 768;
/// Side of the resized ROI.
pub const ROI_SIZE: usize = 256;

/// Projective maps from direct-view pixel coordinates into the other views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub homography_direct_to_raw: [[f64; 3]; 3],
    pub homography_direct_to_processed: [[f64; 3]; 3],
}

pub const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

impl Default for Calibration {
    fn default() -> Self {
        Self::identity()
    }
}

impl Calibration {
    pub fn identity() -> Self {
        Self {
            homography_direct_to_raw: IDENTITY,
            homography_direct_to_processed: IDENTITY,
        }
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        for h in [&self.homography_direct_to_raw, &self.homography_direct_to_processed] {
            let det = det3(h);
            if !det.is_finite() || det.abs() <= 1e-9 {
                return Err(PreprocessError::SingularCalibration(det));
            }
        }
        Ok(())
    }

    /// Short content hash used to tag sidecars.
    pub fn id(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for h in [&self.homography_direct_to_raw, &self.homography_direct_to_processed] {
            for row in h {
                for v in row {
                    hasher.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(&hasher.finalize()[..8])
    }
}

fn det3(h: &[[f64; 3]; 3]) -> f64 {
    h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1]) - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
        + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0])
}

/// Applies a homography to a point.
pub fn map_point(p: (f64, f64), h: &[[f64; 3]; 3]) -> Result<(f64, f64), PreprocessError> {
    let (x, y) = p;
    let u = h[0][0] * x + h[0][1] * y + h[0][2];
    let v = h[1][0] * x + h[1][1] * y + h[1][2];
    let s = h[2][0] * x + h[2][1] * y + h[2][2];
    if !(s.abs() >= 1e-9) {
        return Err(PreprocessError::DegenerateMapping { x, y });
    }
    Ok((u / s, v / s))
}

/// Crop window in source-image coordinates; negative origins mean the source
/// was zero-padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub x0: i64,
    pub y0: i64,
    pub size: usize,
}

fn window_origin(center: f64, extent: usize, size: usize) -> i64 {
    if extent < size {
        // symmetric zero padding, the odd pixel goes after
        -(((size - extent) / 2) as i64)
    } else {
        let c = (center + 0.5).floor() as i64;
        (c - (size / 2) as i64).clamp(0, (extent - size) as i64)
    }
}

/// Window placement used by [`crop_window`].
pub fn window_for(img: &Image, center: (f64, f64), size: usize) -> Window {
    Window {
        x0: window_origin(center.0, img.width(), size),
        y0: window_origin(center.1, img.height(), size),
        size,
    }
}

/// Copies `win` out of `img`, filling outside pixels with zeros.
pub fn crop(img: &Image, win: Window) -> Image {
    let ch = img.channels();
    let mut out = Image::new(win.size, win.size, ch);
    let (w, h) = (img.width() as i64, img.height() as i64);
    for oy in 0..win.size {
        let sy = win.y0 + oy as i64;
        if sy < 0 || sy >= h {
            continue;
        }
        let x_lo = (-win.x0).clamp(0, win.size as i64) as usize;
        let x_hi = (w - win.x0).clamp(0, win.size as i64) as usize;
        if x_lo >= x_hi {
            continue;
        }
        let src_start = ((sy * w + win.x0 + x_lo as i64) as usize) * ch;
        let len = (x_hi - x_lo) * ch;
        let dst_start = (oy * win.size + x_lo) * ch;
        out.data_mut()[dst_start..dst_start + len]
            .copy_from_slice(&img.data()[src_start..src_start + len]);
    }
    out
}

/// 768x768 window centred on `center` (clamped inside, zero-padded when the
/// image is smaller than the window).
pub fn crop_window(img: &Image, center: (f64, f64)) -> (Image, Window) {
    let win = window_for(img, center, WINDOW_SIZE);
    (crop(img, win), win)
}

/// Bilinear resize with pixel-centre alignment, rounded half-up.
pub fn resize_bilinear(img: &Image, out_w: usize, out_h: usize) -> Image {
    let ch = img.channels();
    let (w, h) = (img.width(), img.height());
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let taps = |dst: usize, scale: f64, extent: usize| {
        let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(extent - 1);
        let i1 = (i0 + 1).min(extent - 1);
        (i0, i1, src - i0 as f64)
    };
    let xs: Vec<_> = (0..out_w).map(|x| taps(x, sx, w)).collect();
    let mut out = Image::new(out_w, out_h, ch);
    for oy in 0..out_h {
        let (y0, y1, fy) = taps(oy, sy, h);
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..ch {
                let top = f64::from(img.get(x0, y0, c)) * (1.0 - fx) + f64::from(img.get(x1, y0, c)) * fx;
                let bot = f64::from(img.get(x0, y1, c)) * (1.0 - fx) + f64::from(img.get(x1, y1, c)) * fx;
                out.set(ox, oy, c, round_half_up_u8(top * (1.0 - fy) + bot * fy));
            }
        }
    }
    out
}

/// Box-filter downsampling by an integer factor, bilinear otherwise.
pub fn resize_to(img: &Image, size: usize) -> Image {
    if img.width() == size && img.height() == size {
        return img.clone();
    }
    if img.width() % size != 0 || img.height() % size != 0 || img.width() != img.height() {
        return resize_bilinear(img, size, size);
    }
    let f = img.width() / size;
    let ch = img.channels();
    let norm = (f * f) as f64;
    Image::from_fn(size, size, ch, |x, y, c| {
        let mut acc = 0u32;
        for dy in 0..f {
            for dx in 0..f {
                acc += u32::from(img.get(x * f + dx, y * f + dy, c));
            }
        }
        round_half_up_u8(f64::from(acc) / norm)
    })
}

/// Audit record for one extracted triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiMeta {
    pub centroid: (f64, f64),
    pub window_direct: Window,
    pub window_raw: Window,
    pub window_processed: Window,
    pub calibration_id: String,
}

/// Smoothed Laplacian magnitude of the equalized direct view.
pub fn foreground_response(direct: &Image) -> Result<RealImage, PreprocessError> {
    let eq = gray_equalize(direct)?;
    Ok(gaussian_smooth(&laplacian_magnitude(&eq)?))
}

/// Locates the finger in the direct view.
pub fn locate_finger(direct: &Image) -> Result<(f64, f64), PreprocessError> {
    let response = foreground_response(direct)?;
    largest_blob_centroid(&binarize_clean(&response))
}

/// Full ROI pipeline: locate on the direct view, map the centroid into the
/// other views, crop 768x768 windows and resize them to 256x256.
pub fn extract_roi_triplet(
    t: &CaptureTriplet,
    cal: &Calibration,
) -> Result<(RoiTriplet, RoiMeta), PreprocessError> {
    t.validate()?;
    cal.validate()?;
    let centroid = locate_finger(&t.direct)?;
    let c_raw = map_point(centroid, &cal.homography_direct_to_raw)?;
    let c_proc = map_point(centroid, &cal.homography_direct_to_processed)?;

    let (d, wd) = crop_window(&t.direct, centroid);
    let (r, wr) = crop_window(&t.raw, c_raw);
    let (p, wp) = crop_window(&t.processed, c_proc);
    let roi = RoiTriplet {
        direct: resize_bilinear(&d, ROI_SIZE, ROI_SIZE),
        raw: resize_bilinear(&r, ROI_SIZE, ROI_SIZE),
        processed: resize_bilinear(&p, ROI_SIZE, ROI_SIZE),
    };
    let meta = RoiMeta {
        centroid,
        window_direct: wd,
        window_raw: wr,
        window_processed: wp,
        calibration_id: cal.id(),
    };
    Ok((roi, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_index_arithmetic() {
        let img = Image::new(1000, 1000, 1);
        let w = window_for(&img, (500.0, 500.0), WINDOW_SIZE);
        assert_eq!((w.x0, w.y0), (116, 116));
        assert_eq!(w.x0 + WINDOW_SIZE as i64 - 1, 883);

        let w = window_for(&img, (10.0, 10.0), WINDOW_SIZE);
        assert_eq!((w.x0, w.y0), (0, 0));
        let w = window_for(&img, (990.0, 995.0), WINDOW_SIZE);
        assert_eq!((w.x0, w.y0), (232, 232));
    }

    #[test]
    fn small_image_is_zero_padded() {
        // 600 rows x 900 cols
        let img = Image::from_fn(900, 600, 1, |_, _, _| 9);
        let (out, w) = crop_window(&img, (450.0, 300.0));
        assert_eq!(w.y0, -84);
        assert_eq!(out.height(), 768);
        for y in 0..84 {
            assert_eq!(out.get(100, y, 0), 0);
            assert_eq!(out.get(100, 767 - y, 0), 0);
        }
        assert_eq!(out.get(100, 84, 0), 9);
        assert_eq!(out.get(100, 683, 0), 9);
    }

    #[test]
    fn crop_copies_pixels() {
        let img = Image::from_fn(800, 790, 3, |x, y, c| ((x + 3 * y + c) % 251) as u8);
        let (out, w) = crop_window(&img, (400.0, 400.0));
        assert_eq!((w.x0, w.y0), (16, 16));
        assert_eq!(out.get(5, 7, 2), img.get(21, 23, 2));
    }

    #[test]
    fn homographies() {
        assert_eq!(map_point((3.0, 4.0), &IDENTITY).unwrap(), (3.0, 4.0));
        let t = [[1.0, 0.0, 10.0], [0.0, 1.0, 5.0], [0.0, 0.0, 1.0]];
        assert_eq!(map_point((3.0, 4.0), &t).unwrap(), (13.0, 9.0));
        let s = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(map_point((3.0, 4.0), &s).unwrap(), (6.0, 8.0));
        let bad = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]];
        assert!(matches!(
            map_point((0.0, 5.0), &bad),
            Err(PreprocessError::DegenerateMapping { .. })
        ));
    }

    #[test]
    fn singular_calibration_rejected() {
        let mut cal = Calibration::identity();
        cal.homography_direct_to_raw = [[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(cal.validate().is_err());
        assert!(Calibration::identity().validate().is_ok());
    }

    #[test]
    fn resize_preserves_constants_and_box_filter_averages() {
        let img = Image::from_fn(768, 768, 3, |_, _, c| 10 * c as u8 + 7);
        let out = resize_bilinear(&img, 256, 256);
        assert!(out.data().chunks(3).all(|p| p == [7, 17, 27]));

        let img = Image::from_fn(8, 8, 1, |x, _, _| if x % 2 == 0 { 0 } else { 100 });
        let out = resize_to(&img, 4);
        assert!(out.data().iter().all(|&v| v == 50));
    }
}
