//! Minimal raster plots: score histograms, ROC curves and a 2-D feature
//! scatter. No axis labels; axes span `[0, 1]` unless noted.

use std::path::Path;

use super::EvalError;
use crate::preprocess::Image;

const W: usize = 480;
const H: usize = 360;
const MARGIN: usize = 30;

/// Distinct colors for series; live is always the first.
pub const PALETTE: [[u8; 3]; 6] = [[40, 150, 60], [200, 40, 40], [40, 80, 200], [220, 140, 20], [140, 50, 170], [20, 160, 170]];

struct Canvas {
    img: Image,
}

impl Canvas {
    fn new() -> Self {
        let mut c = Self {
            img: Image::from_fn(W, H, 3, |_, _, _| 255),
        };
        let (x0, y0, x1, y1) = (MARGIN as i64, MARGIN as i64, (W - MARGIN) as i64, (H - MARGIN) as i64);
        c.line(x0, y1, x1, y1, [0, 0, 0]);
        c.line(x0, y0, x0, y1, [0, 0, 0]);
        c
    }

    fn put(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < W && (y as usize) < H {
            for (c, v) in rgb.iter().enumerate() {
                self.img.set(x as usize, y as usize, c, *v);
            }
        }
    }

    fn line(&mut self, mut x0: i64, mut y0: i64, x1: i64, y1: i64, rgb: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, rgb);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    /// Maps unit coordinates into the plot area.
    fn to_px(u: f64, v: f64) -> (i64, i64) {
        let pw = (W - 2 * MARGIN) as f64;
        let ph = (H - 2 * MARGIN) as f64;
        (
            MARGIN as i64 + (u.clamp(0.0, 1.0) * pw).round() as i64,
            (H - MARGIN) as i64 - (v.clamp(0.0, 1.0) * ph).round() as i64,
        )
    }

    fn polyline(&mut self, pts: &[(f64, f64)], rgb: [u8; 3]) {
        for w in pts.windows(2) {
            let (a, b) = (Self::to_px(w[0].0, w[0].1), Self::to_px(w[1].0, w[1].1));
            self.line(a.0, a.1, b.0, b.1, rgb);
        }
    }

    fn dot(&mut self, u: f64, v: f64, rgb: [u8; 3]) {
        let (x, y) = Self::to_px(u, v);
        for dy in -1..=1 {
            for dx in -1..=1 {
                self.put(x + dx, y + dy, rgb);
            }
        }
    }

    fn save(&self, path: &Path) -> Result<(), EvalError> {
        self.img.save_png(path).map_err(EvalError::from)
    }
}

/// Overlaid normalized score histograms, one outline per series.
pub fn plot_histograms(series: &[(&str, Vec<f64>)], bins: usize, path: &Path) -> Result<(), EvalError> {
    let mut c = Canvas::new();
    let hists: Vec<Vec<f64>> = series
        .iter()
        .map(|(_, xs)| {
            let mut h = vec![0.0; bins];
            for &x in xs {
                h[((x.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)] += 1.0;
            }
            let n = xs.len().max(1) as f64;
            h.iter().map(|v| v / n).collect()
        })
        .collect();
    let peak = hists.iter().flatten().copied().fold(1e-9, f64::max);
    for (k, h) in hists.iter().enumerate() {
        let mut pts = Vec::with_capacity(2 * bins + 2);
        for (i, v) in h.iter().enumerate() {
            let y = v / peak;
            pts.push((i as f64 / bins as f64, y));
            pts.push(((i + 1) as f64 / bins as f64, y));
        }
        c.polyline(&pts, PALETTE[k % PALETTE.len()]);
    }
    c.save(path)
}

/// ROC polylines, FDR on the horizontal axis.
pub fn plot_roc(curves: &[Vec<(f64, f64)>], path: &Path) -> Result<(), EvalError> {
    let mut c = Canvas::new();
    c.polyline(&[(0.0, 0.0), (1.0, 1.0)], [190, 190, 190]);
    for (k, pts) in curves.iter().enumerate() {
        c.polyline(pts, PALETTE[k % PALETTE.len()]);
    }
    c.save(path)
}

/// Projection of the rows of `x` onto their two leading principal axes.
pub fn pca_2d(x: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let n = x.len();
    if n == 0 {
        return vec![];
    }
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let xc: Vec<Vec<f64>> = x.iter().map(|r| r.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for k in 0..2 {
        let mut v: Vec<f64> = (0..d).map(|j| if j % 2 == k { 1.0 } else { 0.5 }).collect();
        for _ in 0..100 {
            let proj: Vec<f64> = xc.iter().map(|r| dot(r, &v)).collect();
            let mut w = vec![0.0; d];
            for (r, p) in xc.iter().zip(&proj) {
                for j in 0..d {
                    w[j] += r[j] * p;
                }
            }
            for a in &axes {
                let c = dot(&w, a);
                w.iter_mut().zip(a).for_each(|(wi, ai)| *wi -= c * ai);
            }
            let norm = dot(&w, &w).sqrt();
            if norm < 1e-12 {
                break;
            }
            v = w.iter().map(|wi| wi / norm).collect();
        }
        axes.push(v);
    }
    xc.iter().map(|r| (dot(r, &axes[0]), dot(r, &axes[1]))).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scatter of 2-D points, colored by group index.
pub fn plot_scatter(points: &[(f64, f64)], groups: &[usize], path: &Path) -> Result<(), EvalError> {
    let mut c = Canvas::new();
    let (mut lo, mut hi) = ((f64::MAX, f64::MAX), (f64::MIN, f64::MIN));
    for p in points {
        lo = (lo.0.min(p.0), lo.1.min(p.1));
        hi = (hi.0.max(p.0), hi.1.max(p.1));
    }
    let span = ((hi.0 - lo.0).max(1e-12), (hi.1 - lo.1).max(1e-12));
    for (p, g) in points.iter().zip(groups) {
        c.dot((p.0 - lo.0) / span.0, (p.1 - lo.1) / span.1, PALETTE[g % PALETTE.len()]);
    }
    c.save(path)
}
