//! Direct-view foreground localisation stages.

use super::image::{Image, RealImage};
use super::PreprocessError;

/// Side length of the smoothing kernel applied to the Laplacian magnitude.
pub const SMOOTH_KERNEL_SIZE: usize = 30;
/// Standard deviation of the smoothing kernel.
pub const SMOOTH_SIGMA: f64 = 5.0;
/// Foreground iff the smoothed magnitude is strictly above this value.
pub const BINARIZE_THRESHOLD: f64 = 75.0;
/// Side of the square structuring element used for the opening.
pub const MORPH_SIZE: usize = 5;

/// BT.601 luma, rounded half-up.
pub fn luma(img: &Image) -> Image {
    assert_eq!(img.channels(), 3, "luma expects a 3-channel image");
    let data = img
        .data()
        .chunks_exact(3)
        // exact half-up rounding of the decimal weights
        .map(|p| ((299 * u32::from(p[0]) + 587 * u32::from(p[1]) + 114 * u32::from(p[2]) + 500) / 1000) as u8)
        .collect();
    Image::from_vec(img.width(), img.height(), 1, data).expect("one byte per pixel")
}

/// Histogram equalization of a single-channel image.
///
/// `out = round((cdf(v) - cdf_min) / (N - cdf_min) * 255)`. Constant images
/// are returned unchanged.
pub fn equalize(img: &Image) -> Image {
    assert_eq!(img.channels(), 1, "equalize expects a single channel");
    let mut hist = [0usize; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let n = img.data().len();
    let cdf_min = hist.iter().copied().find(|&h| h > 0).unwrap_or(0);
    if n == cdf_min {
        return img.clone();
    }
    let mut lut = [0u8; 256];
    let mut cdf = 0usize;
    let denom = n - cdf_min;
    for (v, &h) in hist.iter().enumerate() {
        cdf += h;
        if h > 0 {
            // round((cdf - cdf_min) / denom * 255) half-up, in integers
            lut[v] = ((2 * 255 * (cdf - cdf_min) + denom) / (2 * denom)) as u8;
        }
    }
    let data = img.data().iter().map(|&v| lut[v as usize]).collect();
    Image::from_vec(img.width(), img.height(), 1, data).expect("same size")
}

/// Grayscale conversion followed by histogram equalization.
pub fn gray_equalize(img: &Image) -> Result<Image, PreprocessError> {
    if img.channels() != 3 {
        return Err(PreprocessError::Channels {
            expected: "3",
            found: img.channels(),
        });
    }
    Ok(equalize(&luma(img)))
}

/// Absolute response of the 4-neighbour Laplacian, replicate border.
pub fn laplacian_magnitude(img: &Image) -> Result<RealImage, PreprocessError> {
    if img.channels() != 1 {
        return Err(PreprocessError::Channels {
            expected: "1",
            found: img.channels(),
        });
    }
    Ok(laplacian_abs(&RealImage::from_gray(img)))
}

pub(crate) fn laplacian_abs(src: &RealImage) -> RealImage {
    let (w, h) = (src.width, src.height);
    let mut out = RealImage::zeros(w, h);
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let c = src.get(x, y);
            let v = src.get(x, up) + src.get(x, down) + src.get(left, y) + src.get(right, y)
                - 4.0 * c;
            out.data[y * w + x] = v.abs();
        }
    }
    out
}

/// Normalized 1-D Gaussian taps centred between the two middle taps for
/// even sizes.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let mid = (size as f64 - 1.0) / 2.0;
    let mut k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - mid;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable correlation with `kernel` along both axes; tap `i` reads the
/// sample at offset `i - size/2` with replicate border.
pub fn separable_filter(src: &RealImage, kernel: &[f64]) -> RealImage {
    let (w, h) = (src.width, src.height);
    let anchor = (kernel.len() / 2) as isize;
    let mut tmp = RealImage::zeros(w, h);
    let pad_lo = anchor as usize;
    let pad_hi = kernel.len() - 1 - pad_lo;
    let mut padded = vec![0.0; w + pad_lo + pad_hi];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        padded[..pad_lo].fill(row[0]);
        padded[pad_lo..pad_lo + w].copy_from_slice(row);
        padded[pad_lo + w..].fill(row[w - 1]);
        let dst = &mut tmp.data[y * w..(y + 1) * w];
        for (i, &k) in kernel.iter().enumerate() {
            for (d, &s) in dst.iter_mut().zip(&padded[i..i + w]) {
                *d += k * s;
            }
        }
    }
    let mut out = RealImage::zeros(w, h);
    for y in 0..h {
        for (i, &k) in kernel.iter().enumerate() {
            let ys = (y as isize + i as isize - anchor).clamp(0, h as isize - 1) as usize;
            let src_row = &tmp.data[ys * w..(ys + 1) * w];
            let dst_row = &mut out.data[y * w..(y + 1) * w];
            for (d, &s) in dst_row.iter_mut().zip(src_row) {
                *d += k * s;
            }
        }
    }
    out
}

/// 30x30 Gaussian smoothing (sigma 5), replicate border.
pub fn gaussian_smooth(img: &RealImage) -> RealImage {
    separable_filter(img, &gaussian_kernel(SMOOTH_KERNEL_SIZE, SMOOTH_SIGMA))
}

/// Threshold at 75 (strict) followed by a 5x5 opening.
pub fn binarize_clean(img: &RealImage) -> Image {
    let data: Vec<u8> = img
        .data
        .iter()
        .map(|&v| if v > BINARIZE_THRESHOLD { 255 } else { 0 })
        .collect();
    let bin = Image::from_vec(img.width, img.height, 1, data).expect("one byte per pixel");
    dilate(&erode(&bin, MORPH_SIZE), MORPH_SIZE)
}

/// Erosion with a `size x size` square; pixels outside the image are ignored.
pub fn erode(img: &Image, size: usize) -> Image {
    rank_filter(img, size, |a, b| a.min(b))
}

/// Dilation with a `size x size` square; pixels outside the image are ignored.
pub fn dilate(img: &Image, size: usize) -> Image {
    rank_filter(img, size, |a, b| a.max(b))
}

fn rank_filter(img: &Image, size: usize, pick: impl Fn(u8, u8) -> u8) -> Image {
    assert_eq!(img.channels(), 1);
    let (w, h) = (img.width(), img.height());
    let before = size / 2;
    let after = size - 1 - size / 2;
    let src = img.data();
    // out-of-image neighbours are skipped by only combining in-range shifts
    let mut tmp = src.to_vec();
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let dst = &mut tmp[y * w..(y + 1) * w];
        for d in 1..=after.min(w.saturating_sub(1)) {
            for (t, &s) in dst[..w - d].iter_mut().zip(&row[d..]) {
                *t = pick(*t, s);
            }
        }
        for d in 1..=before.min(w.saturating_sub(1)) {
            for (t, &s) in dst[d..].iter_mut().zip(&row[..w - d]) {
                *t = pick(*t, s);
            }
        }
    }
    let mut out = tmp.clone();
    for y in 0..h {
        let lo = y.saturating_sub(before);
        let hi = (y + after).min(h - 1);
        for ys in lo..=hi {
            if ys == y {
                continue;
            }
            let dst = &mut out[y * w..(y + 1) * w];
            let src_row = &tmp[ys * w..(ys + 1) * w];
            for (t, &s) in dst.iter_mut().zip(src_row) {
                *t = pick(*t, s);
            }
        }
    }
    Image::from_vec(w, h, 1, out).expect("same size")
}

/// Connected foreground component (8-connectivity).
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    /// Row-major index of the first pixel met while scanning.
    pub first_index: usize,
    pub area: usize,
    pub centroid: (f64, f64),
}

/// All 8-connected foreground components, in order of their first pixel.
pub fn connected_components(binary: &Image) -> Vec<Blob> {
    assert_eq!(binary.channels(), 1);
    let (w, h) = (binary.width(), binary.height());
    let data = binary.data();
    let mut seen = vec![false; w * h];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if data[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut area, mut sx, mut sy) = (0usize, 0f64, 0f64);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            area += 1;
            sx += x as f64;
            sy += y as f64;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if data[j] != 0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        blobs.push(Blob {
            first_index: start,
            area,
            centroid: (sx / area as f64, sy / area as f64),
        });
    }
    blobs
}

/// Centroid `(x, y)` of the largest blob; ties go to the blob whose first
/// pixel comes first in row-major order.
pub fn largest_blob_centroid(binary: &Image) -> Result<(f64, f64), PreprocessError> {
    let mut best: Option<Blob> = None;
    for b in connected_components(binary) {
        if best.as_ref().map_or(true, |cur| b.area > cur.area) {
            best = Some(b);
        }
    }
    best.map(|b| b.centroid).ok_or(PreprocessError::NoForeground)
}
