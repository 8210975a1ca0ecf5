//! Live-only adversarial training and VAE training with validation-based
//! checkpoint selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Architecture, Checkpoint};
use super::loss::{discriminator_loss, generator_loss, kl_divergence, mse};
use super::models::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec, Network, Vae, VaeSpec};
use super::optim::Adam;
use super::{NnError, Tensor};
use crate::corpus::Label;
use crate::eval::metrics::tdr_at_fdr;
use crate::preprocess::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub max_epochs: usize,
    /// Optional hard cap on optimizer steps.
    pub max_steps: Option<u64>,
    pub eval_every: u64,
    pub patience: usize,
    /// FDR operating point of the validation metric.
    pub val_fdr: f64,
    pub seed: u64,
    pub deterministic_mode: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            max_epochs: 25,
            max_steps: None,
            eval_every: 20,
            patience: 10,
            val_fdr: 0.002,
            seed: 0,
            deterministic_mode: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.batch_size == 0 {
            return Err(NnError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(NnError::Config("learning_rate must be positive".into()));
        }
        if self.eval_every == 0 || self.patience == 0 {
            return Err(NnError::Config("eval_every and patience must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fdr) {
            return Err(NnError::Config("val_fdr must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One sample's images (a single view image, or all patches of a sample).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGroup {
    pub id: String,
    pub label: Label,
    pub images: Vec<Image>,
}

impl LabeledGroup {
    pub fn single(id: impl Into<String>, label: Label, image: Image) -> Self {
        Self {
            id: id.into(),
            label,
            images: vec![image],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    /// `loss_D` for GANs, reconstruction error for the VAE.
    pub loss_a: f64,
    /// `loss_G` for GANs, KL term for the VAE.
    pub loss_b: f64,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    /// CSV with header `step,<a>,<b>,val_metric`.
    pub fn to_csv(&self, col_a: &str, col_b: &str) -> String {
        let mut s = format!("step,{col_a},{col_b},val_metric\n");
        for r in &self.rows {
            let v = r.val_metric.map(|v| format!("{v:.6}")).unwrap_or_default();
            s.push_str(&format!("{},{:.6},{:.6},{}\n", r.step, r.loss_a, r.loss_b, v));
        }
        s
    }

    /// Metrics of the evaluation points, in order.
    pub fn eval_metrics(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.val_metric).collect()
    }
}

/// Instrumentation of the one-class contract.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneClassAudit {
    /// Backward passes over batches holding live training images.
    pub live_backward_passes: u64,
    /// Backward passes over batches holding any spoof-labelled image.
    pub spoof_backward_passes: u64,
    /// Forward-only evaluations of validation spoof samples.
    pub val_spoof_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanOutcome {
    pub discriminator: Checkpoint,
    pub generator: Checkpoint,
    pub log: TrainLog,
    pub audit: OneClassAudit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
}

fn require_live(groups: &[LabeledGroup], what: &'static str) -> Result<(), NnError> {
    if groups.is_empty() || groups.iter().all(|g| g.images.is_empty()) {
        return Err(NnError::EmptyData(what));
    }
    match groups.iter().find(|g| g.label != Label::Live) {
        Some(g) => Err(NnError::OneClassViolation(g.id.clone())),
        None => Ok(()),
    }
}

/// Epoch-wise shuffled batches over every image of every group.
struct Batcher {
    index: Vec<(usize, usize)>,
    batch: usize,
}

impl Batcher {
    fn new(groups: &[LabeledGroup], batch: usize) -> Self {
        let index = groups
            .iter()
            .enumerate()
            .flat_map(|(g, grp)| (0..grp.images.len()).map(move |i| (g, i)))
            .collect();
        Self { index, batch }
    }

    fn epoch(&mut self, rng: &mut ChaCha8Rng) -> Vec<Vec<(usize, usize)>> {
        self.index.shuffle(rng);
        if self.index.len() <= self.batch {
            return vec![self.index.clone()];
        }
        // drop the ragged tail
        self.index
            .chunks_exact(self.batch)
            .map(|c| c.to_vec())
            .collect()
    }
}

fn batch_tensor(groups: &[LabeledGroup], idx: &[(usize, usize)]) -> (Tensor<f32>, bool) {
    let imgs: Vec<&Image> = idx.iter().map(|&(g, i)| &groups[g].images[i]).collect();
    let has_spoof = idx.iter().any(|&(g, _)| groups[g].label == Label::Spoof);
    (Tensor::from_images(&imgs), has_spoof)
}

fn group_scores(d: &Discriminator<f32>, groups: &[LabeledGroup]) -> Result<Vec<f64>, NnError> {
    groups
        .iter()
        .map(|g| {
            let refs: Vec<&Image> = g.images.iter().collect();
            let s = d.score_batch(&refs)?;
            Ok(s.iter().sum::<f64>() / s.len().max(1) as f64)
        })
        .collect()
}

/// Validation TDR at `fdr` with the discriminator sigmoid as liveness score.
pub fn validation_tdr(
    d: &Discriminator<f32>,
    val_live: &[LabeledGroup],
    val_spoof: &[LabeledGroup],
    fdr: f64,
) -> Result<f64, NnError> {
    let live = group_scores(d, val_live)?;
    let spoof = group_scores(d, val_spoof)?;
    tdr_at_fdr(&live, &spoof, fdr)
        .map(|r| r.tdr)
        .map_err(|e| NnError::Domain(e.to_string()))
}

fn check_shapes(groups: &[LabeledGroup], size: usize, channels: usize) -> Result<(), NnError> {
    for g in groups {
        for img in &g.images {
            if img.width() != size || img.height() != size || img.channels() != channels {
                return Err(NnError::Shape(format!(
                    "sample {}: expected {size}x{size}x{channels}, got {}x{}x{}",
                    g.id,
                    img.width(),
                    img.height(),
                    img.channels()
                )));
            }
        }
    }
    Ok(())
}

/// Trains a DCGAN on live images only and returns the discriminator and
/// generator of the evaluation with the best validation TDR (earliest on
/// ties).
pub fn train_gan(
    train: &[LabeledGroup],
    val_live: &[LabeledGroup],
    val_spoof: &[LabeledGroup],
    spec: &DiscriminatorSpec,
    cfg: &TrainConfig,
) -> Result<GanOutcome, NnError> {
    cfg.validate()?;
    require_live(train, "live training set")?;
    require_live(val_live, "live validation set")?;
    if val_spoof.is_empty() {
        return Err(NnError::EmptyData("spoof validation set"));
    }
    if let Some(g) = val_spoof.iter().find(|g| g.label != Label::Spoof) {
        return Err(NnError::Config(format!("validation spoof set holds live sample {}", g.id)));
    }
    for set in [train, val_live, val_spoof] {
        check_shapes(set, spec.input_size, spec.input_channels)?;
    }

    let gspec = GeneratorSpec::mirror(spec);
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut d = Discriminator::<f32>::new(spec, &mut init_rng)?;
    let mut g = Generator::<f32>::new(&gspec, &mut init_rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut opt_d = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2);
    let mut opt_g = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2);

    let d_arch = Architecture::Discriminator(spec.clone());
    let g_arch = Architecture::Generator(gspec.clone());
    let snapshot = |d: &Discriminator<f32>, g: &Generator<f32>, step: u64, metric: Option<f64>| {
        (
            Checkpoint::of_network(d_arch.clone(), d, step, metric, cfg.seed),
            Checkpoint::of_network(g_arch.clone(), g, step, metric, cfg.seed),
        )
    };

    let mut log = TrainLog::default();
    let mut audit = OneClassAudit::default();
    let mut best: Option<(f64, Checkpoint, Checkpoint)> = None;
    let mut stale = 0usize;
    let mut step = 0u64;
    let mut last_eval = 0u64;
    let mut batcher = Batcher::new(train, cfg.batch_size);

    let evaluate = |d: &Discriminator<f32>,
                        g: &Generator<f32>,
                        step: u64,
                        audit: &mut OneClassAudit,
                        best: &mut Option<(f64, Checkpoint, Checkpoint)>,
                        stale: &mut usize|
     -> Result<f64, NnError> {
        let tdr = validation_tdr(d, val_live, val_spoof, cfg.val_fdr)?;
        audit.val_spoof_evaluations += val_spoof.len() as u64;
        if best.as_ref().map_or(true, |(b, _, _)| tdr > *b) {
            let (dc, gc) = snapshot(d, g, step, Some(tdr));
            *best = Some((tdr, dc, gc));
            *stale = 0;
        } else {
            *stale += 1;
        }
        Ok(tdr)
    };

    'outer: for _epoch in 0..cfg.max_epochs {
        for idx in batcher.epoch(&mut rng) {
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break 'outer;
            }
            step += 1;
            let (real, has_spoof) = batch_tensor(train, &idx);
            let n = real.n;

            // discriminator step
            let z = Tensor::randn(n, gspec.z_dim, &mut rng);
            let fake = g.forward(&z);
            let (out_r, tr_r) = d.forward_cached(real);
            let (out_f, tr_f) = d.forward_cached(fake);
            let (loss_d, dl_r, dl_f) = discriminator_loss(&out_r.logits, &out_f.logits);
            if has_spoof {
                audit.spoof_backward_passes += 1;
            } else {
                audit.live_backward_passes += 1;
            }
            d.backward(tr_r, &dl_r, false);
            d.backward(tr_f, &dl_f, false);
            opt_d.step(d.params_mut());

            // generator step
            let z = Tensor::randn(n, gspec.z_dim, &mut rng);
            let (fake, tr_g) = g.forward_cached(z);
            let (out, tr_d) = d.forward_cached(fake);
            let (loss_g, dl) = generator_loss(&out.logits);
            let dimg = d.backward(tr_d, &dl, true).expect("input gradient requested");
            d.zero_grad();
            g.backward(tr_g, dimg);
            opt_g.step(g.params_mut());

            if !loss_d.is_finite() || !loss_g.is_finite() {
                let last = best.map(|(_, dc, _)| dc).unwrap_or_else(|| snapshot(&d, &g, 0, None).0);
                return Err(NnError::Divergence {
                    step,
                    last_good: Some(Box::new(last)),
                });
            }
            let mut row = LogRow {
                step,
                loss_a: loss_d,
                loss_b: loss_g,
                val_metric: None,
            };
            if step % cfg.eval_every == 0 {
                row.val_metric = Some(evaluate(&d, &g, step, &mut audit, &mut best, &mut stale)?);
                last_eval = step;
            }
            log.rows.push(row);
            if stale >= cfg.patience {
                break 'outer;
            }
        }
    }
    if last_eval != step || best.is_none() {
        let m = evaluate(&d, &g, step, &mut audit, &mut best, &mut stale)?;
        if let Some(r) = log.rows.last_mut().filter(|r| r.step == step) {
            r.val_metric = Some(m);
        }
    }
    let (_, discriminator, generator) = best.expect("at least one evaluation ran");
    Ok(GanOutcome {
        discriminator,
        generator,
        log,
        audit,
    })
}

/// Mean posterior-mean reconstruction error over the first image of each
/// group.
pub fn validation_recon_error(vae: &Vae<f32>, groups: &[LabeledGroup]) -> Result<f64, NnError> {
    let imgs: Vec<&Image> = groups.iter().filter_map(|g| g.images.first()).collect();
    if imgs.is_empty() {
        return Err(NnError::EmptyData("VAE validation set"));
    }
    let errs = vae.recon_errors(&imgs)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Trains the VAE on live images; keeps the evaluation with the lowest
/// validation reconstruction error (earliest on ties).
pub fn train_vae(
    train: &[LabeledGroup],
    val_live: &[LabeledGroup],
    spec: &VaeSpec,
    cfg: &TrainConfig,
) -> Result<VaeOutcome, NnError> {
    cfg.validate()?;
    require_live(train, "live training set")?;
    require_live(val_live, "live validation set")?;
    for set in [train, val_live] {
        check_shapes(set, spec.input_size, spec.channels)?;
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vae = Vae::<f32>::new(spec, &mut init_rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut opt = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2);
    let arch = Architecture::Vae(spec.clone());

    let mut log = TrainLog::default();
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut stale = 0usize;
    let mut step = 0u64;
    let mut last_eval = 0u64;
    let mut batcher = Batcher::new(train, cfg.batch_size);

    let evaluate = |vae: &Vae<f32>, step: u64, best: &mut Option<(f64, Checkpoint)>, stale: &mut usize| -> Result<f64, NnError> {
        let err = validation_recon_error(vae, val_live)?;
        if best.as_ref().map_or(true, |(b, _)| err < *b) {
            *best = Some((err, Checkpoint::of_network(arch.clone(), vae, step, Some(err), cfg.seed)));
            *stale = 0;
        } else {
            *stale += 1;
        }
        Ok(err)
    };

    'outer: for _epoch in 0..cfg.max_epochs {
        for idx in batcher.epoch(&mut rng) {
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break 'outer;
            }
            step += 1;
            let (x, _) = batch_tensor(train, &idx);
            let eps = Tensor::randn(x.n, spec.latent_dim, &mut rng);
            let target = x.data.clone();
            let (out, trace) = vae.forward_cached(x, eps);
            let (recon, drecon) = mse(&out.recon.data, &target);
            let (kl, dmu, dlv) = kl_divergence(&out.mu.data, &out.logvar.data);
            let w = spec.kl_weight as f32;
            let dmu: Vec<f32> = dmu.iter().map(|v| v * w).collect();
            let dlv: Vec<f32> = dlv.iter().map(|v| v * w).collect();
            let r = &out.recon;
            let drecon = Tensor::from_vec(r.n, r.c, r.h, r.w, drecon);
            vae.backward(&out, trace, drecon, &dmu, &dlv);
            opt.step(vae.params_mut());

            if !recon.is_finite() || !kl.is_finite() {
                let last = best
                    .map(|(_, c)| c)
                    .unwrap_or_else(|| Checkpoint::of_network(arch.clone(), &vae, 0, None, cfg.seed));
                return Err(NnError::Divergence {
                    step,
                    last_good: Some(Box::new(last)),
                });
            }
            let mut row = LogRow {
                step,
                loss_a: recon,
                loss_b: kl,
                val_metric: None,
            };
            if step % cfg.eval_every == 0 {
                row.val_metric = Some(evaluate(&vae, step, &mut best, &mut stale)?);
                last_eval = step;
            }
            log.rows.push(row);
            if stale >= cfg.patience {
                break 'outer;
            }
        }
    }
    if last_eval != step || best.is_none() {
        let m = evaluate(&vae, step, &mut best, &mut stale)?;
        if let Some(r) = log.rows.last_mut().filter(|r| r.step == step) {
            r.val_metric = Some(m);
        }
    }
    let (_, checkpoint) = best.expect("at least one evaluation ran");
    Ok(VaeOutcome { checkpoint, log })
}
