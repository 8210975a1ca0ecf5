//! Discriminator, generator and VAE networks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Conv2d, ConvTranspose2d, GroupNorm, Layer, Linear, Param, Sequential, Trace};
use super::{NnError, Scalar, Tensor};
use crate::preprocess::Image;

pub const KERNEL: usize = 5;
pub const STRIDE: usize = 2;
pub const PAD: usize = 2;
pub const OUT_PAD: usize = 1;
pub const FEATURE_DIM: usize = 128;
pub const Z_DIM: usize = 100;
pub const LATENT_DIM: usize = 128;
pub const BASE_SIZE: usize = 8;
pub const LEAKY_SLOPE: f64 = 0.2;
pub const GROUPS: usize = 8;

/// Convolution widths of the 256x256 networks.
pub const FULL_CHANNELS: [usize; 5] = [64, 128, 256, 512, 512];
/// Convolution widths of the 64x64 desk-scale networks.
pub const MINI_CHANNELS: [usize; 3] = [16, 32, 64];

/// Batch size used when scoring many images.
const SCORE_BATCH: usize = 64;

fn check_chain(input: usize, base: usize, convs: usize) -> Result<(), NnError> {
    if convs == 0 || base == 0 || base.checked_shl(convs as u32) != Some(input) {
        return Err(NnError::Spec(format!(
            "{convs} stride-{STRIDE} convolutions do not reduce {input} to {base}"
        )));
    }
    Ok(())
}

fn check_groups(channels: &[usize], groups: usize) -> Result<(), NnError> {
    match channels.iter().find(|&&c| groups == 0 || c % groups != 0) {
        Some(c) => Err(NnError::Spec(format!("{c} channels not divisible by {groups} groups"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub input_size: usize,
    pub input_channels: usize,
    pub conv_channels: Vec<usize>,
    pub feature_dim: usize,
    pub leaky_slope: f64,
    pub groupnorm_groups: usize,
    pub base_size: usize,
}

impl DiscriminatorSpec {
    /// 256x256 input, five convolutions.
    pub fn full(input_channels: usize) -> Self {
        Self {
            input_size: 256,
            input_channels,
            conv_channels: FULL_CHANNELS.to_vec(),
            feature_dim: FEATURE_DIM,
            leaky_slope: LEAKY_SLOPE,
            groupnorm_groups: GROUPS,
            base_size: BASE_SIZE,
        }
    }

    /// 64x64 input, three convolutions.
    pub fn mini(input_channels: usize) -> Self {
        Self {
            input_size: 64,
            conv_channels: MINI_CHANNELS.to_vec(),
            ..Self::full(input_channels)
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_channels != 1 && self.input_channels != 3 {
            return Err(NnError::Spec(format!("{} input channels", self.input_channels)));
        }
        if self.feature_dim == 0 {
            return Err(NnError::Spec("feature_dim must be positive".into()));
        }
        check_chain(self.input_size, self.base_size, self.conv_channels.len())?;
        check_groups(&self.conv_channels[1..], self.groupnorm_groups)
    }

    /// Spatial size before the first and after every convolution.
    pub fn spatial_chain(&self) -> Vec<usize> {
        (0..=self.conv_channels.len()).map(|i| self.input_size >> i).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub z_dim: usize,
    pub base_size: usize,
    /// Widths from the projected block down to the last hidden layer.
    pub channels: Vec<usize>,
    pub output_channels: usize,
    pub output_size: usize,
    pub groupnorm_groups: usize,
}

impl GeneratorSpec {
    /// Generator whose layer widths mirror `d`.
    pub fn mirror(d: &DiscriminatorSpec) -> Self {
        Self {
            z_dim: Z_DIM,
            base_size: d.base_size,
            channels: d.conv_channels.iter().rev().copied().collect(),
            output_channels: d.input_channels,
            output_size: d.input_size,
            groupnorm_groups: d.groupnorm_groups,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        check_chain(self.output_size, self.base_size, self.channels.len())?;
        check_groups(&self.channels, self.groupnorm_groups)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeSpec {
    pub input_size: usize,
    pub channels: usize,
    pub latent_dim: usize,
    pub conv_channels: Vec<usize>,
    pub groupnorm_groups: usize,
    pub leaky_slope: f64,
    pub kl_weight: f64,
    pub base_size: usize,
}

impl VaeSpec {
    pub fn full() -> Self {
        Self {
            input_size: 256,
            channels: 3,
            latent_dim: LATENT_DIM,
            conv_channels: FULL_CHANNELS.to_vec(),
            groupnorm_groups: GROUPS,
            leaky_slope: LEAKY_SLOPE,
            kl_weight: 1.0,
            base_size: BASE_SIZE,
        }
    }

    pub fn mini() -> Self {
        Self {
            input_size: 64,
            conv_channels: MINI_CHANNELS.to_vec(),
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.latent_dim == 0 || self.kl_weight < 0.0 {
            return Err(NnError::Spec("latent_dim > 0 and kl_weight >= 0 required".into()));
        }
        check_chain(self.input_size, self.base_size, self.conv_channels.len())?;
        check_groups(&self.conv_channels, self.groupnorm_groups)
    }

    fn flat_dim(&self) -> usize {
        self.conv_channels.last().copied().unwrap_or(0) * self.base_size * self.base_size
    }
}

/// Parameter access shared by all networks.
pub trait Network<T: Scalar> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn flat_weights(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.value.iter().map(|v| v.as_f64()))
            .collect()
    }

    fn set_flat_weights(&mut self, w: &[f64]) -> Result<(), NnError> {
        let expected = self.param_count();
        if w.len() != expected {
            return Err(NnError::Shape(format!(
                "weight blob holds {} values, network needs {expected}",
                w.len()
            )));
        }
        let mut off = 0;
        for p in self.params_mut() {
            for v in p.value.iter_mut() {
                *v = T::of(w[off]);
                off += 1;
            }
        }
        Ok(())
    }
}

fn check_image(img: &Image, size: usize, channels: usize) -> Result<(), NnError> {
    if img.width() != size || img.height() != size || img.channels() != channels {
        return Err(NnError::Shape(format!(
            "expected {size}x{size}x{channels} image, got {}x{}x{}",
            img.width(),
            img.height(),
            img.channels()
        )));
    }
    Ok(())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone)]
pub struct DiscOutput<T> {
    /// `n x feature_dim` activations of the feature layer.
    pub features: Tensor<T>,
    /// Pre-sigmoid outputs, one per sample.
    pub logits: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct DiscTrace<T> {
    body: Trace<T>,
    features: Tensor<T>,
}

/// Convolutional discriminator: strided convolutions, global average pool,
/// a feature layer and a single sigmoid unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    pub spec: DiscriminatorSpec,
    pub body: Sequential<T>,
    pub head: Linear<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(spec: &DiscriminatorSpec, rng: &mut impl Rng) -> Result<Self, NnError> {
        spec.validate()?;
        let mut layers = Vec::new();
        let mut in_c = spec.input_channels;
        for (i, &c) in spec.conv_channels.iter().enumerate() {
            layers.push(Layer::Conv(Conv2d::new(in_c, c, KERNEL, STRIDE, PAD, rng)));
            if i > 0 {
                layers.push(Layer::Norm(GroupNorm::new(spec.groupnorm_groups, c)?));
            }
            layers.push(Layer::LeakyRelu(spec.leaky_slope));
            in_c = c;
        }
        layers.push(Layer::GlobalAvgPool);
        layers.push(Layer::Linear(Linear::new(in_c, spec.feature_dim, rng)));
        layers.push(Layer::LeakyRelu(spec.leaky_slope));
        let head = Linear::new(spec.feature_dim, 1, rng);
        Ok(Self {
            spec: spec.clone(),
            body: Sequential::new(layers),
            head,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> DiscOutput<T> {
        let features = self.body.forward(x);
        let logits = self.head.forward(&features).data;
        DiscOutput { features, logits }
    }

    pub fn forward_cached(&self, x: Tensor<T>) -> (DiscOutput<T>, DiscTrace<T>) {
        let (features, body) = self.body.forward_cached(x);
        let logits = self.head.forward(&features).data;
        (
            DiscOutput {
                features: features.clone(),
                logits,
            },
            DiscTrace { body, features },
        )
    }

    /// Backpropagates gradients with respect to the logits.
    pub fn backward(&mut self, trace: DiscTrace<T>, dlogits: &[T], need_dx: bool) -> Option<Tensor<T>> {
        let dy = Tensor::from_vec(dlogits.len(), 1, 1, 1, dlogits.to_vec());
        let dfeat = self
            .head
            .backward(&trace.features, &dy, true)
            .expect("feature gradient requested");
        self.body.backward(trace.body, dfeat, need_dx)
    }

    fn check(&self, img: &Image) -> Result<(), NnError> {
        check_image(img, self.spec.input_size, self.spec.input_channels)
    }

    fn run_batched(&self, images: &[&Image]) -> Result<DiscOutput<T>, NnError> {
        for img in images {
            self.check(img)?;
        }
        let mut logits = Vec::with_capacity(images.len());
        let mut feats = Vec::with_capacity(images.len() * self.spec.feature_dim);
        for chunk in images.chunks(SCORE_BATCH) {
            let out = self.forward(&Tensor::from_images(chunk));
            logits.extend(out.logits);
            feats.extend(out.features.data);
        }
        Ok(DiscOutput {
            features: Tensor::from_vec(images.len(), self.spec.feature_dim, 1, 1, feats),
            logits,
        })
    }

    /// Pre-sigmoid output for one image.
    pub fn logit(&self, img: &Image) -> Result<f64, NnError> {
        Ok(self.run_batched(&[img])?.logits[0].as_f64())
    }

    /// Liveness score in (0, 1); higher means more live.
    pub fn score(&self, img: &Image) -> Result<f64, NnError> {
        Ok(sigmoid(self.logit(img)?))
    }

    pub fn score_batch(&self, images: &[&Image]) -> Result<Vec<f64>, NnError> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self
            .run_batched(images)?
            .logits
            .iter()
            .map(|l| sigmoid(l.as_f64()))
            .collect())
    }

    /// Feature-layer activations for one image.
    pub fn features(&self, img: &Image) -> Result<Vec<f64>, NnError> {
        Ok(self
            .run_batched(&[img])?
            .features
            .data
            .iter()
            .map(|v| v.as_f64())
            .collect())
    }
}

impl<T: Scalar> Network<T> for Discriminator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.body.params();
        p.push(&self.head.weight);
        p.push(&self.head.bias);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.body.params_mut();
        p.push(&mut self.head.weight);
        p.push(&mut self.head.bias);
        p
    }
}

/// Upsampling stack shared by the generator and the VAE decoder: project,
/// reshape to `channels[0] x base x base`, then stride-2 transposed
/// convolutions ending in `tanh`.
fn upsampling_stack<T: Scalar>(
    in_dim: usize,
    base: usize,
    channels: &[usize],
    out_channels: usize,
    groups: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Layer<T>>, NnError> {
    let c0 = channels[0];
    let mut layers = vec![
        Layer::Linear(Linear::new(in_dim, c0 * base * base, rng)),
        Layer::Reshape { c: c0, h: base, w: base },
        Layer::Norm(GroupNorm::new(groups, c0)?),
        Layer::Relu,
    ];
    for (i, &c) in channels.iter().enumerate() {
        let next = channels.get(i + 1).copied().unwrap_or(out_channels);
        layers.push(Layer::Deconv(ConvTranspose2d::new(c, next, KERNEL, STRIDE, PAD, OUT_PAD, rng)));
        if i + 1 < channels.len() {
            layers.push(Layer::Norm(GroupNorm::new(groups, next)?));
            layers.push(Layer::Relu);
        } else {
            layers.push(Layer::Tanh);
        }
    }
    Ok(layers)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    pub spec: GeneratorSpec,
    pub net: Sequential<T>,
}

impl<T: Scalar> Generator<T> {
    pub fn new(spec: &GeneratorSpec, rng: &mut impl Rng) -> Result<Self, NnError> {
        spec.validate()?;
        let layers = upsampling_stack(
            spec.z_dim,
            spec.base_size,
            &spec.channels,
            spec.output_channels,
            spec.groupnorm_groups,
            rng,
        )?;
        Ok(Self {
            spec: spec.clone(),
            net: Sequential::new(layers),
        })
    }

    pub fn forward(&self, z: &Tensor<T>) -> Tensor<T> {
        self.net.forward(z)
    }

    pub fn forward_cached(&self, z: Tensor<T>) -> (Tensor<T>, Trace<T>) {
        self.net.forward_cached(z)
    }

    pub fn backward(&mut self, trace: Trace<T>, dy: Tensor<T>) {
        self.net.backward(trace, dy, false);
    }
}

impl<T: Scalar> Network<T> for Generator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.net.params()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.net.params_mut()
    }
}

/// Convolutional VAE with a diagonal Gaussian posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct Vae<T> {
    pub spec: VaeSpec,
    pub encoder: Sequential<T>,
    pub mu: Linear<T>,
    pub logvar: Linear<T>,
    pub decoder: Sequential<T>,
}

#[derive(Debug, Clone)]
pub struct VaeTrace<T> {
    encoder: Trace<T>,
    flat: Tensor<T>,
    decoder: Trace<T>,
}

/// Outputs of one stochastic VAE pass.
#[derive(Debug, Clone)]
pub struct VaeOutput<T> {
    pub mu: Tensor<T>,
    pub logvar: Tensor<T>,
    pub eps: Tensor<T>,
    pub recon: Tensor<T>,
}

impl<T: Scalar> Vae<T> {
    pub fn new(spec: &VaeSpec, rng: &mut impl Rng) -> Result<Self, NnError> {
        spec.validate()?;
        let mut layers = Vec::new();
        let mut in_c = spec.channels;
        for (i, &c) in spec.conv_channels.iter().enumerate() {
            layers.push(Layer::Conv(Conv2d::new(in_c, c, KERNEL, STRIDE, PAD, rng)));
            if i > 0 {
                layers.push(Layer::Norm(GroupNorm::new(spec.groupnorm_groups, c)?));
            }
            layers.push(Layer::LeakyRelu(spec.leaky_slope));
            in_c = c;
        }
        layers.push(Layer::Reshape {
            c: spec.flat_dim(),
            h: 1,
            w: 1,
        });
        let mu = Linear::new(spec.flat_dim(), spec.latent_dim, rng);
        let logvar = Linear::new(spec.flat_dim(), spec.latent_dim, rng);
        let dec_channels: Vec<usize> = spec.conv_channels.iter().rev().copied().collect();
        let decoder = upsampling_stack(
            spec.latent_dim,
            spec.base_size,
            &dec_channels,
            spec.channels,
            spec.groupnorm_groups,
            rng,
        )?;
        Ok(Self {
            spec: spec.clone(),
            encoder: Sequential::new(layers),
            mu,
            logvar,
            decoder: Sequential::new(decoder),
        })
    }

    /// Posterior mean of each sample.
    pub fn encode_mean(&self, x: &Tensor<T>) -> Tensor<T> {
        self.mu.forward(&self.encoder.forward(x))
    }

    /// Deterministic reconstruction through the posterior mean.
    pub fn reconstruct(&self, x: &Tensor<T>) -> Tensor<T> {
        self.decoder.forward(&self.encode_mean(x))
    }

    /// Stochastic pass with externally drawn noise `eps` (`n x latent`).
    pub fn forward_cached(&self, x: Tensor<T>, eps: Tensor<T>) -> (VaeOutput<T>, VaeTrace<T>) {
        let (flat, encoder) = self.encoder.forward_cached(x);
        let mu = self.mu.forward(&flat);
        let logvar = self.logvar.forward(&flat);
        let mut z = mu.clone();
        for ((zv, &lv), &e) in z.data.iter_mut().zip(&logvar.data).zip(&eps.data) {
            *zv += (lv * T::of(0.5)).exp() * e;
        }
        let (recon, decoder) = self.decoder.forward_cached(z);
        (
            VaeOutput {
                mu,
                logvar,
                eps,
                recon,
            },
            VaeTrace {
                encoder,
                flat,
                decoder,
            },
        )
    }

    /// Backpropagates gradients of the loss with respect to the
    /// reconstruction and (directly) to `mu` / `logvar`.
    pub fn backward(
        &mut self,
        out: &VaeOutput<T>,
        trace: VaeTrace<T>,
        drecon: Tensor<T>,
        dmu_direct: &[T],
        dlogvar_direct: &[T],
    ) {
        let dz = self
            .decoder
            .backward(trace.decoder, drecon, true)
            .expect("latent gradient requested");
        let mut dmu = dz.clone();
        dmu.data.iter_mut().zip(dmu_direct).for_each(|(a, &b)| *a += b);
        let mut dlv = dz;
        for (i, g) in dlv.data.iter_mut().enumerate() {
            let s = (out.logvar.data[i] * T::of(0.5)).exp();
            *g = *g * out.eps.data[i] * s * T::of(0.5) + dlogvar_direct[i];
        }
        let mut dflat = self.mu.backward(&trace.flat, &dmu, true).expect("requested");
        let d2 = self.logvar.backward(&trace.flat, &dlv, true).expect("requested");
        dflat.data.iter_mut().zip(&d2.data).for_each(|(a, &b)| *a += b);
        self.encoder.backward(trace.encoder, dflat, false);
    }

    /// Mean squared reconstruction residual per image (posterior mean, no
    /// sampling), on the `[-1, 1]` intensity scale.
    pub fn recon_errors(&self, images: &[&Image]) -> Result<Vec<f64>, NnError> {
        for img in images {
            check_image(img, self.spec.input_size, self.spec.channels)?;
        }
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(SCORE_BATCH) {
            let x = Tensor::<T>::from_images(chunk);
            let r = self.reconstruct(&x);
            for i in 0..x.n {
                out.push(mean_squared(x.sample(i), r.sample(i)));
            }
        }
        Ok(out)
    }
}

pub fn mean_squared<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y).as_f64();
            d * d
        })
        .sum();
    s / a.len() as f64
}

impl<T: Scalar> Network<T> for Vae<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.encoder.params();
        p.extend([&self.mu.weight, &self.mu.bias, &self.logvar.weight, &self.logvar.bias]);
        p.extend(self.decoder.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.encoder.params_mut();
        p.extend([
            &mut self.mu.weight,
            &mut self.mu.bias,
            &mut self.logvar.weight,
            &mut self.logvar.bias,
        ]);
        p.extend(self.decoder.params_mut());
        p
    }
}
