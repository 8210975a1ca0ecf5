//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use pad_core::preprocess::{Image, RealImage};
use rand::Rng;

pub fn random_rgb(rng: &mut impl Rng, w: usize, h: usize) -> Image {
    Image::from_fn(w, h, 3, |_, _, _| rng.gen())
}

/// Gray image with a few flat regions so histograms have ties.
pub fn random_gray(rng: &mut impl Rng, w: usize, h: usize) -> Image {
    let levels: Vec<u8> = (0..rng.gen_range(1..8)).map(|_| rng.gen()).collect();
    let noisy = rng.gen_bool(0.5);
    Image::from_fn(w, h, 1, |_, _, _| if noisy { rng.gen() } else { levels[rng.gen_range(0..levels.len())] })
}

pub fn random_real(rng: &mut impl Rng, w: usize, h: usize) -> RealImage {
    RealImage::from_fn(w, h, |_, _| rng.gen_range(0.0..300.0))
}

/// Sparse random binary image with blob-like clumps.
pub fn random_binary(rng: &mut impl Rng, w: usize, h: usize) -> Image {
    let density = rng.gen_range(0.05..0.6);
    let mut img = Image::new(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            if rng.gen_bool(density) {
                img.set(x, y, 0, 255);
            }
        }
    }
    img
}

pub fn oracle_luma(r: u8, g: u8, b: u8) -> u8 {
    // half-up rounding of the decimal weighted sum, exactly in thousandths
    let t = 299 * r as u64 + 587 * g as u64 + 114 * b as u64;
    let (q, rem) = (t / 1000, t % 1000);
    (if rem >= 500 { q + 1 } else { q }) as u8
}

/// Equalization evaluated per pixel by counting.
pub fn oracle_equalize(img: &Image) -> Vec<u8> {
    let d = img.data();
    let n = d.len() as u64;
    let min = *d.iter().min().unwrap();
    let cdf_min = d.iter().filter(|&&v| v == min).count() as u64;
    if cdf_min == n {
        return d.to_vec();
    }
    d.iter()
        .map(|&v| {
            let cdf = d.iter().filter(|&&u| u <= v).count() as u64;
            let num = (cdf - cdf_min) * 255;
            let den = n - cdf_min;
            let (q, rem) = (num / den, num % den);
            (if 2 * rem >= den { q + 1 } else { q }) as u8
        })
        .collect()
}

fn clampi(v: isize, n: usize) -> usize {
    v.clamp(0, n as isize - 1) as usize
}

/// Dense 2-D correlation with replicate border; `k[j][i]` reads offset
/// `(i - anchor, j - anchor)`.
pub fn oracle_correlate(src: &RealImage, k: &[Vec<f64>], anchor: isize) -> RealImage {
    RealImage::from_fn(src.width, src.height, |x, y| {
        let mut acc = 0.0;
        for (j, row) in k.iter().enumerate() {
            for (i, &kv) in row.iter().enumerate() {
                let xs = clampi(x as isize + i as isize - anchor, src.width);
                let ys = clampi(y as isize + j as isize - anchor, src.height);
                acc += kv * src.get(xs, ys);
            }
        }
        acc
    })
}

pub fn oracle_laplacian(img: &Image) -> RealImage {
    let k = vec![vec![0.0, 1.0, 0.0], vec![1.0, -4.0, 1.0], vec![0.0, 1.0, 0.0]];
    let r = oracle_correlate(&RealImage::from_gray(img), &k, 1);
    RealImage::from_fn(r.width, r.height, |x, y| r.get(x, y).abs())
}

/// 30x30 Gaussian, sigma 5, as a dense 2-D kernel built from scratch.
pub fn oracle_gaussian_kernel_2d() -> Vec<Vec<f64>> {
    let n = 30;
    let mid = 14.5;
    let mut k = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for (j, row) in k.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            let (dx, dy) = (i as f64 - mid, j as f64 - mid);
            *v = (-(dx * dx + dy * dy) / 50.0).exp();
            total += *v;
        }
    }
    k.iter_mut().flatten().for_each(|v| *v /= total);
    k
}

pub fn oracle_gaussian(src: &RealImage) -> RealImage {
    oracle_correlate(src, &oracle_gaussian_kernel_2d(), 15)
}

/// Window min/max over the 5x5 square, skipping out-of-image pixels.
fn oracle_rank(img: &Image, max: bool) -> Image {
    let (w, h) = (img.width(), img.height());
    Image::from_fn(w, h, 1, |x, y, _| {
        let mut vals = vec![];
        for dy in -2isize..=2 {
            for dx in -2isize..=2 {
                let (xs, ys) = (x as isize + dx, y as isize + dy);
                if xs >= 0 && ys >= 0 && (xs as usize) < w && (ys as usize) < h {
                    vals.push(img.get(xs as usize, ys as usize, 0));
                }
            }
        }
        if max {
            *vals.iter().max().unwrap()
        } else {
            *vals.iter().min().unwrap()
        }
    })
}

pub fn oracle_binarize_clean(src: &RealImage) -> Image {
    let bin = Image::from_fn(src.width, src.height, 1, |x, y, _| if src.get(x, y) > 75.0 { 255 } else { 0 });
    oracle_rank(&oracle_rank(&bin, false), true)
}

/// Component labels by repeated min-label propagation until a fixed point.
pub fn oracle_components(img: &Image) -> Vec<(usize, usize, (f64, f64))> {
    let (w, h) = (img.width(), img.height());
    let fg = |i: usize| img.data()[i] != 0;
    let mut label: Vec<usize> = (0..w * h).collect();
    loop {
        let mut changed = false;
        for i in 0..w * h {
            if !fg(i) {
                continue;
            }
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if fg(j) && label[j] < label[i] {
                        label[i] = label[j];
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    // label = smallest member index = first pixel in row-major order
    let mut out: Vec<(usize, usize, (f64, f64))> = vec![];
    for root in 0..w * h {
        if !fg(root) || label[root] != root {
            continue;
        }
        let members: Vec<usize> = (0..w * h).filter(|&i| fg(i) && label[i] == root).collect();
        let n = members.len() as f64;
        let cx = members.iter().map(|&i| (i % w) as f64).sum::<f64>() / n;
        let cy = members.iter().map(|&i| (i / w) as f64).sum::<f64>() / n;
        out.push((root, members.len(), (cx, cy)));
    }
    out
}

pub fn oracle_largest_centroid(img: &Image) -> Option<(f64, f64)> {
    let comps = oracle_components(img);
    let max = comps.iter().map(|c| c.1).max()?;
    comps.iter().find(|c| c.1 == max).map(|c| c.2)
}

pub fn max_abs_diff(a: &RealImage, b: &RealImage) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Brute-force threshold sweep: the largest candidate (a live score or
/// +inf) whose strict-below live count is at most floor(fdr * n); among
/// those, the lowest such threshold value that attains the maximal
/// admissible FDR count is the k-th order statistic.
pub fn oracle_operating_point(live: &[f64], spoof: &[f64], fdr: f64) -> (f64, f64) {
    let k = (fdr * live.len() as f64).floor() as usize;
    let mut candidates: Vec<f64> = live.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    // admissible thresholds misclassify at most k lives; pick the one that
    // flags the most spoofs, lowest value on ties
    let mut best: Option<(usize, f64)> = None;
    for &t in &candidates {
        let fp = live.iter().filter(|&&s| s < t).count();
        if fp > k {
            continue;
        }
        let tp = spoof.iter().filter(|&&s| s < t).count();
        if best.map_or(true, |(btp, bt)| tp > btp || (tp == btp && t > bt)) {
            best = Some((tp, t));
        }
    }
    let (tp, t) = best.expect("min live score is always admissible");
    (t, tp as f64 / spoof.len() as f64)
}

/// O(n^2) AUC with ties counted one half.
pub fn oracle_auc(live: &[f64], spoof: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &l in live {
        for &s in spoof {
            acc += if s < l {
                1.0
            } else if s == l {
                0.5
            } else {
                0.0
            };
        }
    }
    acc / (live.len() * spoof.len()) as f64
}

/// Bundle of freshly initialised networks for `specs`.
pub fn untrained_bundle(specs: &pad_core::pipeline::ModeSpecs, seed: u64) -> pad_core::ModelBundle {
    use pad_core::nnkit::{build_discriminator, Architecture, Checkpoint, Vae};
    use rand::SeedableRng;
    let disc = |s: &pad_core::nnkit::DiscriminatorSpec, k: u64| {
        let d = build_discriminator(s, seed + k).unwrap();
        Checkpoint::of_network(Architecture::Discriminator(s.clone()), &d, 0, None, seed + k)
    };
    let vae: Vae<f32> = Vae::new(&specs.vae, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed + 9)).unwrap();
    let vae = Checkpoint::of_network(Architecture::Vae(specs.vae.clone()), &vae, 0, None, seed + 9);
    pad_core::pipeline::assemble_bundle(
        [disc(&specs.direct, 1), disc(&specs.raw, 2), disc(&specs.processed, 3), disc(&specs.patch, 4), vae],
        0.05,
    )
}
