//! Seeded three-view synthetic fingerprint captures.
//!
//! Every sample shares one ridge geometry across its views. Spoofs take the
//! same geometry draw as a live sample with the same index and then apply
//! material-specific perturbations scaled by the severity, so the live and
//! spoof populations coincide at severity zero.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, save_manifest, CorpusError, DatasetManifest, Label, SampleRecord};
use crate::par;
use crate::preprocess::{CaptureTriplet, Image};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_live: usize,
    pub n_spoof: usize,
    /// Side of the square capture, pixels.
    pub image_size: usize,
    /// Inclusive range of the ridge period, pixels.
    pub ridge_period_range: (f64, f64),
    pub spoof_severity: f64,
    pub materials: Vec<String>,
    pub locations: Vec<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_live: 800,
            n_spoof: 600,
            image_size: 512,
            ridge_period_range: (6.0, 8.5),
            spoof_severity: 0.6,
            materials: (0..4).map(|k| format!("mat_{k}")).collect(),
            locations: (0..4).map(|k| format!("loc_{k}")).collect(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let err = |field, message: &str| {
            Err(CorpusError::Config {
                field,
                message: message.into(),
            })
        };
        if !(self.spoof_severity > 0.0 && self.spoof_severity <= 1.0) {
            return err("spoof_severity", "must lie in (0, 1]");
        }
        if self.n_live == 0 {
            return err("n_live", "must be positive");
        }
        if self.n_spoof == 0 {
            return err("n_spoof", "must be positive");
        }
        if self.image_size < 64 {
            return err("image_size", "must be at least 64");
        }
        let (lo, hi) = self.ridge_period_range;
        if !(lo >= 3.0 && hi >= lo && hi <= self.image_size as f64 / 8.0) {
            return err("ridge_period_range", "need 3 <= lo <= hi <= image_size / 8");
        }
        if self.materials.is_empty() || self.materials.iter().any(String::is_empty) {
            return err("materials", "need at least one non-empty tag");
        }
        if self.locations.is_empty() || self.locations.iter().any(String::is_empty) {
            return err("locations", "need at least one non-empty tag");
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_live + self.n_spoof
    }

    /// Label and material of corpus index `i`: lives first, then spoofs
    /// with materials assigned round-robin.
    pub fn assignment(&self, i: usize) -> (bool, Option<&str>) {
        if i < self.n_live {
            (false, None)
        } else {
            let j = i - self.n_live;
            (true, Some(self.materials[j % self.materials.len()].as_str()))
        }
    }
}

/// One rendered capture with its record and ground-truth finger centre.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub triplet: CaptureTriplet,
    pub record: SampleRecord,
    pub center: (f64, f64),
}

/// Sum of a few random plane waves, roughly in [-1, 1].
struct SmoothField {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl SmoothField {
    fn new(rng: &mut ChaCha8Rng, n: usize, wavelength: f64) -> Self {
        let waves = (0..n)
            .map(|_| {
                let dir = rng.gen_range(0.0..TAU);
                let k = TAU / (wavelength * rng.gen_range(0.7..1.4));
                (k * dir.cos(), k * dir.sin(), rng.gen_range(0.0..TAU), rng.gen_range(0.5..1.0))
            })
            .collect::<Vec<_>>();
        Self { waves }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let norm: f64 = self.waves.iter().map(|w| w.3).sum();
        self.waves.iter().map(|&(kx, ky, ph, a)| a * (kx * x + ky * y + ph).cos()).sum::<f64>() / norm
    }

    /// Samples the field every `GRID` pixels for bilinear lookup.
    fn tabulate(&self, size: usize) -> Grid {
        let n = size / GRID + 2;
        let values = (0..n * n).map(|i| self.at(((i % n) * GRID) as f64, ((i / n) * GRID) as f64)).collect();
        Grid { n, values }
    }
}

const GRID: usize = 8;

/// Coarse samples of a smooth field; wavelengths are far above `GRID`.
struct Grid {
    n: usize,
    values: Vec<f64>,
}

impl Grid {
    fn at(&self, x: usize, y: usize) -> f64 {
        let (gx, gy) = (x / GRID, y / GRID);
        let (fx, fy) = ((x % GRID) as f64 / GRID as f64, (y % GRID) as f64 / GRID as f64);
        let v = |i: usize, j: usize| self.values[j * self.n + i];
        let top = lerp(v(gx, gy), v(gx + 1, gy), fx);
        let bottom = lerp(v(gx, gy + 1), v(gx + 1, gy + 1), fx);
        lerp(top, bottom, fy)
    }
}

struct Geometry {
    center: (f64, f64),
    axes: (f64, f64),
    core: (f64, f64),
    period: f64,
    warp: SmoothField,
    warp_amp: f64,
    pressure: SmoothField,
    background: SmoothField,
    skin: [f64; 3],
    contrast: f64,
}

/// Material-wide spoof traits, a pure function of the tag.
#[derive(Debug, Clone, Copy)]
struct MaterialTraits {
    color: [f64; 3],
    contrast_loss: f64,
    period_shift: f64,
    bubbles: f64,
    channel_mix: f64,
    tint: [f64; 3],
}

impl MaterialTraits {
    fn of(tag: &str) -> Self {
        let digest = Sha256::digest(tag.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let hue = rng.gen_range(0.0..TAU);
        let color = [
            150.0 + 90.0 * hue.cos(),
            150.0 + 90.0 * (hue - TAU / 3.0).cos(),
            150.0 + 90.0 * (hue + TAU / 3.0).cos(),
        ];
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        Self {
            color,
            contrast_loss: rng.gen_range(0.5..1.0),
            period_shift: sign * rng.gen_range(0.5..1.0),
            bubbles: rng.gen_range(0.4..1.0),
            channel_mix: rng.gen_range(0.5..1.0),
            tint: [rng.gen_range(0.6..1.4), rng.gen_range(0.6..1.4), rng.gen_range(0.6..1.4)],
        }
    }
}

struct Bubble {
    x: f64,
    y: f64,
    r: f64,
}

fn geometry(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Geometry {
    let s = cfg.image_size as f64;
    let jitter = 0.1 * s;
    let center = (s / 2.0 + rng.gen_range(-jitter..jitter), s / 2.0 + rng.gen_range(-jitter..jitter));
    let axes = (s * rng.gen_range(0.22..0.28), s * rng.gen_range(0.30..0.36));
    let core = (
        center.0 + axes.0 * rng.gen_range(-0.3..0.3),
        center.1 + axes.1 * rng.gen_range(-0.4..0.1),
    );
    let (lo, hi) = cfg.ridge_period_range;
    let period = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    Geometry {
        center,
        axes,
        core,
        period,
        warp: SmoothField::new(rng, 4, s * 0.6),
        warp_amp: rng.gen_range(8.0..16.0),
        pressure: SmoothField::new(rng, 3, s * 0.5),
        background: SmoothField::new(rng, 3, s * 0.8),
        skin: [
            rng.gen_range(195.0..225.0),
            rng.gen_range(140.0..165.0),
            rng.gen_range(115.0..140.0),
        ],
        contrast: rng.gen_range(0.85..1.0),
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Renders sample `index`. `material` must be present iff `is_spoof`.
pub fn synth_capture(cfg: &SynthConfig, index: usize, is_spoof: bool, material: Option<&str>) -> Result<SynthSample, CorpusError> {
    cfg.validate()?;
    if is_spoof != material.is_some() {
        return Err(CorpusError::Config {
            field: "material",
            message: "material must be given exactly for spoofs".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mut g = geometry(cfg, &mut rng);
    let noise_seed: u64 = rng.gen();

    let sev = if is_spoof { cfg.spoof_severity } else { 0.0 };
    let traits = material.map(MaterialTraits::of);
    let mut bubbles = Vec::new();
    if let Some(t) = traits {
        let mut srng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5bd1_e995_9e37_79b9);
        srng.set_stream(index as u64);
        g.contrast *= 1.0 - 0.6 * sev * t.contrast_loss;
        g.period *= 1.0 + 0.2 * sev * t.period_shift;
        for c in 0..3 {
            g.skin[c] = lerp(g.skin[c], t.color[c], 0.8 * sev);
        }
        let n = (2.0 + 14.0 * sev * t.bubbles).round() as usize;
        for _ in 0..n {
            let a = srng.gen_range(0.0..TAU);
            let rr = srng.gen_range(0.0..0.85f64).sqrt();
            bubbles.push(Bubble {
                x: g.center.0 + rr * g.axes.0 * a.cos(),
                y: g.center.1 + rr * g.axes.1 * a.sin(),
                r: srng.gen_range(3.0..6.0 + 12.0 * sev),
            });
        }
    }

    let size = cfg.image_size;
    let mut direct = vec![0u8; size * size * 3];
    let mut raw = vec![0u8; size * size * 3];
    let mut processed = vec![0u8; size * size];
    let edge = 0.04;
    let warp = g.warp.tabulate(size);
    let pressure_field = g.pressure.tabulate(size);
    let background = g.background.tabulate(size);
    for y in 0..size {
        let mut nrng = ChaCha8Rng::seed_from_u64(noise_seed);
        nrng.set_stream(y as u64);
        for x in 0..size {
            let (fx, fy) = (x as f64, y as f64);
            let dx = (fx - g.center.0) / g.axes.0;
            let dy = (fy - g.center.1) / g.axes.1;
            let rho = (dx * dx + dy * dy).sqrt();
            let mask = ((1.0 - rho) / edge).clamp(0.0, 1.0);
            let noise: [f64; 3] = [nrng.gen_range(-1.5..1.5), nrng.gen_range(-1.5..1.5), nrng.gen_range(-1.5..1.5)];

            let bg = background.at(x, y);
            let bg_direct = 48.0 + 20.0 * bg;
            let mut v = 0.0;
            let mut bubble = 0.0f64;
            if mask > 0.0 {
                let cx = fx - g.core.0;
                let cy = (fy - g.core.1) * 0.85;
                let phase = TAU * (cx * cx + cy * cy).sqrt() / g.period + g.warp_amp * warp.at(x, y);
                let ridge = 0.5 + 0.5 * (5.0 * phase.sin()).tanh() / 5.0f64.tanh();
                // contrast loss dims the valleys; ridge floors stay dark
                v = ridge * g.contrast;
                for b in &bubbles {
                    if (fx - b.x).abs() > 1.2 * b.r || (fy - b.y).abs() > 1.2 * b.r {
                        continue;
                    }
                    let d = ((fx - b.x).powi(2) + (fy - b.y).powi(2)).sqrt() / b.r;
                    if d < 1.2 {
                        bubble = bubble.max(if d < 1.0 { 1.0 } else { (1.2 - d) / 0.2 });
                    }
                }
                v = lerp(v, 0.5 * g.contrast, bubble);
            }
            let pressure = 0.85 + 0.15 * pressure_field.at(x, y);
            let i = y * size + x;

            // ridges sit darker than the background
            let shade = (0.08 + 0.92 * v) * pressure;
            for c in 0..3 {
                let finger = g.skin[c] * shade + 60.0 * sev * bubble;
                direct[i * 3 + c] = clamp_u8(lerp(bg_direct, finger, mask) + 0.6 * noise[c]);
            }

            let contact = v * mask;
            let valley = [110.0, 205.0, 150.0];
            let ridge_col = [35.0, 60.0, 45.0];
            let mut px = [0.0; 3];
            for c in 0..3 {
                px[c] = lerp(valley[c], ridge_col[c], contact) * (0.9 + 0.1 * pressure);
            }
            if let Some(t) = traits {
                let gray = (px[0] + px[1] + px[2]) / 3.0;
                let m = 0.6 * sev * t.channel_mix * mask;
                for c in 0..3 {
                    px[c] = lerp(px[c], gray * t.tint[c], m) + 40.0 * sev * bubble * mask;
                }
            }
            for c in 0..3 {
                raw[i * 3 + c] = clamp_u8(px[c] + 2.0 * noise[(c + 1) % 3]);
            }
            processed[i] = clamp_u8(245.0 - 220.0 * contact + 2.0 * noise[2]);
        }
    }

    let triplet = CaptureTriplet {
        direct: Image::from_vec(size, size, 3, direct).expect("sized"),
        raw: Image::from_vec(size, size, 3, raw).expect("sized"),
        processed: Image::from_vec(size, size, 1, processed).expect("sized"),
    };
    Ok(SynthSample {
        triplet,
        record: synth_record(cfg, index, is_spoof, material),
        center: g.center,
    })
}

/// Manifest record of sample `index` without rendering any pixels.
pub fn synth_record(cfg: &SynthConfig, index: usize, is_spoof: bool, material: Option<&str>) -> SampleRecord {
    let id = format!("s{index:06}");
    let nloc = cfg.locations.len();
    let location = cfg.locations[index % nloc].clone();
    let ordinal = index / nloc;
    let subject_id = if is_spoof {
        format!("spoof_{}_{:04}", location, ordinal / 10)
    } else {
        format!("{}_{:04}", location, ordinal / 10)
    };
    SampleRecord {
        path_direct: format!("{id}.direct.png").into(),
        path_raw: format!("{id}.raw.png").into(),
        path_processed: format!("{id}.processed.png").into(),
        label: if is_spoof { Label::Spoof } else { Label::Live },
        material: material.map(str::to_string),
        location,
        subject_id,
        finger_id: format!("{}", ordinal % 10),
        id,
    }
}

/// Renders the whole corpus into `out_dir` with a `manifest.jsonl`.
pub fn synth_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest, CorpusError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let records = par::map_range(cfg.total(), |i| -> Result<SampleRecord, CorpusError> {
        let (spoof, mat) = cfg.assignment(i);
        let s = synth_capture(cfg, i, spoof, mat)?;
        let r = s.record;
        for (img, p) in [
            (&s.triplet.direct, &r.path_direct),
            (&s.triplet.raw, &r.path_raw),
            (&s.triplet.processed, &r.path_processed),
        ] {
            let full = out_dir.join(p);
            img.save_png(&full).map_err(|e| io_err(&full, e))?;
        }
        Ok(r)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let mut manifest = DatasetManifest::new(records)?;
    manifest.root = out_dir.to_path_buf();
    save_manifest(&manifest, &out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
