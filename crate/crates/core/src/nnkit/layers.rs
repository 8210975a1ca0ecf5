//! Layers with explicit forward caches and hand-written backward passes.
//!
//! Per-sample work runs through [`crate::par`]. Weight gradients are
//! accumulated over fixed-size sample chunks and reduced in chunk order, so
//! results never depend on the thread count.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::scalar::gemm;
use super::{NnError, Scalar, Tensor};
use crate::par;

/// Samples per gradient-reduction chunk.
const GRAD_CHUNK: usize = 8;
/// Standard deviation of the initial weights.
pub const INIT_STD: f64 = 0.02;
pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn filled(len: usize, v: T) -> Self {
        Self {
            value: vec![v; len],
            grad: vec![T::zero(); len],
        }
    }

    pub fn normal(len: usize, std: f64, rng: &mut impl Rng) -> Self {
        let dist = Normal::new(0.0, std).expect("positive std");
        Self {
            value: (0..len).map(|_| T::of(dist.sample(rng))).collect(),
            grad: vec![T::zero(); len],
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    fn accumulate(&mut self, g: &[T]) {
        for (a, &b) in self.grad.iter_mut().zip(g) {
            *a += b;
        }
    }
}

/// Sliding-window geometry shared by convolution and its adjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Self {
        let out = |x: usize| (x + 2 * pad - k) / stride + 1;
        Self {
            c,
            h,
            w,
            k,
            stride,
            pad,
            ho: out(h),
            wo: out(w),
        }
    }

    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    /// `x (c x h x w)` to `cols (c*k*k x ho*wo)`.
    pub fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let n = self.cols();
        for ci in 0..self.c {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (ci * self.k + ki) * self.k + kj;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        let seg = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        if iy < 0 || iy >= self.h as isize {
                            seg.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, v) in seg.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            *v = if ix < 0 || ix >= self.w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeom::im2col`], accumulating into `x`.
    pub fn col2im<T: Scalar>(&self, cols: &[T], x: &mut [T]) {
        let n = self.cols();
        for ci in 0..self.c {
            let plane = &mut x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (ci * self.k + ki) * self.k + kj;
                    let src = &cols[row * n..(row + 1) * n];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += src[oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Runs `f(sample, dw, db, dx)` over fixed chunks of samples and reduces the
/// per-chunk weight gradients in chunk order.
fn chunked_backward<T, F>(
    n: usize,
    w_len: usize,
    b_len: usize,
    dx_len: Option<usize>,
    f: F,
) -> (Vec<T>, Vec<T>, Option<Vec<T>>)
where
    T: Scalar,
    F: Fn(usize, &mut [T], &mut [T], Option<&mut [T]>) + Sync + Send,
{
    let chunks = n.div_ceil(GRAD_CHUNK);
    let parts = par::map_range(chunks, |ci| {
        let lo = ci * GRAD_CHUNK;
        let hi = (lo + GRAD_CHUNK).min(n);
        let mut dw = vec![T::zero(); w_len];
        let mut db = vec![T::zero(); b_len];
        let mut dx = dx_len.map(|l| vec![T::zero(); l * (hi - lo)]);
        for i in lo..hi {
            let slot = dx
                .as_mut()
                .map(|d| &mut d[(i - lo) * dx_len.unwrap_or(0)..(i - lo + 1) * dx_len.unwrap_or(0)]);
            f(i, &mut dw, &mut db, slot);
        }
        (dw, db, dx)
    });
    let mut dw = vec![T::zero(); w_len];
    let mut db = vec![T::zero(); b_len];
    let mut dx = dx_len.map(|l| Vec::with_capacity(l * n));
    for (pw, pb, px) in parts {
        dw.iter_mut().zip(&pw).for_each(|(a, &b)| *a += b);
        db.iter_mut().zip(&pb).for_each(|(a, &b)| *a += b);
        if let (Some(dx), Some(px)) = (dx.as_mut(), px) {
            dx.extend_from_slice(&px);
        }
    }
    (dw, db, dx)
}

/// 2-D convolution, weights `out_c x in_c x k x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize, rng: &mut impl Rng) -> Self {
        Self {
            in_c,
            out_c,
            k,
            stride,
            pad,
            weight: Param::normal(out_c * in_c * k * k, INIT_STD, rng),
            bias: Param::filled(out_c, T::zero()),
        }
    }

    fn geom(&self, x: &Tensor<T>) -> ConvGeom {
        ConvGeom::new(self.in_c, x.h, x.w, self.k, self.stride, self.pad)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.in_c, "conv input channels");
        let g = self.geom(x);
        let mut y = Tensor::zeros(x.n, self.out_c, g.ho, g.wo);
        let out_len = y.sample_len();
        par::for_each_chunk_mut(&mut y.data, out_len, |i, ys| {
            let mut cols = vec![T::zero(); g.rows() * g.cols()];
            g.im2col(x.sample(i), &mut cols);
            gemm(self.out_c, g.rows(), g.cols(), &self.weight.value, false, &cols, false, T::zero(), ys);
            for (o, row) in ys.chunks_mut(g.cols()).enumerate() {
                let b = self.bias.value[o];
                row.iter_mut().for_each(|v| *v += b);
            }
        });
        y
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let g = self.geom(x);
        let in_len = x.sample_len();
        let (w, out_c) = (&self.weight.value, self.out_c);
        let (dw, db, dx) = chunked_backward(x.n, w.len(), out_c, need_dx.then_some(in_len), |i, dw, db, dx| {
            let mut cols = vec![T::zero(); g.rows() * g.cols()];
            g.im2col(x.sample(i), &mut cols);
            let dys = dy.sample(i);
            gemm(out_c, g.cols(), g.rows(), dys, false, &cols, true, T::one(), dw);
            for (o, row) in dys.chunks(g.cols()).enumerate() {
                db[o] += row.iter().copied().sum::<T>();
            }
            if let Some(dx) = dx {
                gemm(g.rows(), out_c, g.cols(), w, true, dys, false, T::zero(), &mut cols);
                g.col2im(&cols, dx);
            }
        });
        self.weight.accumulate(&dw);
        self.bias.accumulate(&db);
        dx.map(|d| Tensor::from_vec(x.n, x.c, x.h, x.w, d))
    }
}

/// Transposed convolution doubling the spatial size, weights
/// `in_c x out_c x k x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_pad: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            in_c,
            out_c,
            k,
            stride,
            pad,
            out_pad,
            weight: Param::normal(in_c * out_c * k * k, INIT_STD, rng),
            bias: Param::filled(out_c, T::zero()),
        }
    }

    pub fn out_size(&self, input: usize) -> usize {
        (input - 1) * self.stride + self.k + self.out_pad - 2 * self.pad
    }

    fn geom(&self, x: &Tensor<T>) -> ConvGeom {
        let g = ConvGeom::new(self.out_c, self.out_size(x.h), self.out_size(x.w), self.k, self.stride, self.pad);
        debug_assert_eq!((g.ho, g.wo), (x.h, x.w));
        g
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.in_c, "deconv input channels");
        let g = self.geom(x);
        let mut y = Tensor::zeros(x.n, self.out_c, g.h, g.w);
        let out_len = y.sample_len();
        let plane = g.h * g.w;
        par::for_each_chunk_mut(&mut y.data, out_len, |i, ys| {
            let mut cols = vec![T::zero(); g.rows() * g.cols()];
            gemm(g.rows(), self.in_c, g.cols(), &self.weight.value, true, x.sample(i), false, T::zero(), &mut cols);
            g.col2im(&cols, ys);
            for (o, p) in ys.chunks_mut(plane).enumerate() {
                let b = self.bias.value[o];
                p.iter_mut().for_each(|v| *v += b);
            }
        });
        y
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let g = self.geom(x);
        let in_len = x.sample_len();
        let (w, in_c, out_c) = (&self.weight.value, self.in_c, self.out_c);
        let plane = g.h * g.w;
        let (dw, db, dx) = chunked_backward(x.n, w.len(), out_c, need_dx.then_some(in_len), |i, dw, db, dx| {
            let dys = dy.sample(i);
            let mut dcols = vec![T::zero(); g.rows() * g.cols()];
            g.im2col(dys, &mut dcols);
            gemm(in_c, g.cols(), g.rows(), x.sample(i), false, &dcols, true, T::one(), dw);
            for (o, p) in dys.chunks(plane).enumerate() {
                db[o] += p.iter().copied().sum::<T>();
            }
            if let Some(dx) = dx {
                gemm(in_c, g.rows(), g.cols(), w, false, &dcols, false, T::zero(), dx);
            }
        });
        self.weight.accumulate(&dw);
        self.bias.accumulate(&db);
        dx.map(|d| Tensor::from_vec(x.n, x.c, x.h, x.w, d))
    }
}

/// Group normalization with per-channel affine parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupNorm<T> {
    pub groups: usize,
    pub channels: usize,
    pub eps: f64,
    pub gamma: Param<T>,
    pub beta: Param<T>,
}

/// Normalized activations and per-(sample, group) inverse deviations.
#[derive(Debug, Clone)]
pub struct NormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

/// Normalizes `x` per (sample, group) then applies `gamma`/`beta`.
pub fn group_normalize<T: Scalar>(
    x: &Tensor<T>,
    groups: usize,
    eps: f64,
    gamma: &[T],
    beta: &[T],
) -> Result<Tensor<T>, NnError> {
    if groups == 0 || x.c % groups != 0 {
        return Err(NnError::Shape(format!(
            "{} channels cannot be split into {groups} groups",
            x.c
        )));
    }
    if gamma.len() != x.c || beta.len() != x.c {
        return Err(NnError::Shape("affine parameters must have one entry per channel".into()));
    }
    Ok(group_norm_forward(x, groups, eps, gamma, beta).0)
}

fn group_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    groups: usize,
    eps: f64,
    gamma: &[T],
    beta: &[T],
) -> (Tensor<T>, NormCache<T>) {
    let plane = x.h * x.w;
    let cpg = x.c / groups;
    let glen = cpg * plane;
    let per_sample = par::map_range(x.n, |i| {
        let xs = x.sample(i);
        let mut y = vec![T::zero(); xs.len()];
        let mut xhat = vec![T::zero(); xs.len()];
        let mut inv = Vec::with_capacity(groups);
        for g in 0..groups {
            let seg = &xs[g * glen..(g + 1) * glen];
            let m = T::of(glen as f64);
            let mean = seg.iter().copied().sum::<T>() / m;
            let var = seg.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / m;
            let is = T::one() / (var + T::of(eps)).sqrt();
            inv.push(is);
            for (j, &v) in seg.iter().enumerate() {
                let idx = g * glen + j;
                let ch = g * cpg + j / plane;
                let xh = (v - mean) * is;
                xhat[idx] = xh;
                y[idx] = gamma[ch] * xh + beta[ch];
            }
        }
        (y, xhat, inv)
    });
    let mut y = Vec::with_capacity(x.data.len());
    let mut xhat = Vec::with_capacity(x.data.len());
    let mut inv_std = Vec::with_capacity(x.n * groups);
    for (a, b, c) in per_sample {
        y.extend(a);
        xhat.extend(b);
        inv_std.extend(c);
    }
    (Tensor::from_vec(x.n, x.c, x.h, x.w, y), NormCache { xhat, inv_std })
}

impl<T: Scalar> GroupNorm<T> {
    pub fn new(groups: usize, channels: usize) -> Result<Self, NnError> {
        if groups == 0 || channels % groups != 0 {
            return Err(NnError::Shape(format!(
                "{channels} channels cannot be split into {groups} groups"
            )));
        }
        Ok(Self {
            groups,
            channels,
            eps: NORM_EPS,
            gamma: Param::filled(channels, T::one()),
            beta: Param::filled(channels, T::zero()),
        })
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> (Tensor<T>, NormCache<T>) {
        assert_eq!(x.c, self.channels, "group norm channels");
        group_norm_forward(x, self.groups, self.eps, &self.gamma.value, &self.beta.value)
    }

    pub fn backward(&mut self, cache: &NormCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let plane = dy.h * dy.w;
        let cpg = self.channels / self.groups;
        let glen = cpg * plane;
        let (groups, gamma) = (self.groups, &self.gamma.value);
        let channels = self.channels;
        let parts = par::map_range(dy.n, |i| {
            let dys = dy.sample(i);
            let xh = &cache.xhat[i * dys.len()..(i + 1) * dys.len()];
            let mut dx = vec![T::zero(); dys.len()];
            let mut dgamma = vec![T::zero(); channels];
            let mut dbeta = vec![T::zero(); channels];
            for g in 0..groups {
                let is = cache.inv_std[i * groups + g];
                let m = T::of(glen as f64);
                let (mut s1, mut s2) = (T::zero(), T::zero());
                for j in 0..glen {
                    let idx = g * glen + j;
                    let ch = g * cpg + j / plane;
                    dgamma[ch] += dys[idx] * xh[idx];
                    dbeta[ch] += dys[idx];
                    let dxh = dys[idx] * gamma[ch];
                    s1 += dxh;
                    s2 += dxh * xh[idx];
                }
                for j in 0..glen {
                    let idx = g * glen + j;
                    let ch = g * cpg + j / plane;
                    let dxh = dys[idx] * gamma[ch];
                    dx[idx] = is / m * (m * dxh - s1 - xh[idx] * s2);
                }
            }
            (dx, dgamma, dbeta)
        });
        let mut dx = Vec::with_capacity(dy.data.len());
        for (a, dg, db) in parts {
            dx.extend(a);
            self.gamma.accumulate(&dg);
            self.beta.accumulate(&db);
        }
        Tensor::from_vec(dy.n, dy.c, dy.h, dy.w, dx)
    }
}

/// Fully connected layer over flattened samples, weights `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_f: usize,
    pub out_f: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_f: usize, out_f: usize, rng: &mut impl Rng) -> Self {
        Self {
            in_f,
            out_f,
            weight: Param::normal(out_f * in_f, INIT_STD, rng),
            bias: Param::filled(out_f, T::zero()),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.sample_len(), self.in_f, "linear input width");
        let mut y = Tensor::zeros(x.n, self.out_f, 1, 1);
        gemm(x.n, self.in_f, self.out_f, &x.data, false, &self.weight.value, true, T::zero(), &mut y.data);
        for row in y.data.chunks_mut(self.out_f) {
            row.iter_mut().zip(&self.bias.value).for_each(|(v, &b)| *v += b);
        }
        y
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        gemm(self.out_f, x.n, self.in_f, &dy.data, true, &x.data, false, T::one(), &mut self.weight.grad);
        for row in dy.data.chunks(self.out_f) {
            self.bias.accumulate(row);
        }
        need_dx.then(|| {
            let mut dx = vec![T::zero(); x.data.len()];
            gemm(x.n, self.out_f, self.in_f, &dy.data, false, &self.weight.value, false, T::zero(), &mut dx);
            Tensor::from_vec(x.n, x.c, x.h, x.w, dx)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    Deconv(ConvTranspose2d<T>),
    Norm(GroupNorm<T>),
    Linear(Linear<T>),
    LeakyRelu(f64),
    Relu,
    Tanh,
    GlobalAvgPool,
    Reshape { c: usize, h: usize, w: usize },
}

#[derive(Debug, Clone)]
pub enum Cache<T> {
    Input(Tensor<T>),
    Output(Tensor<T>),
    Norm(NormCache<T>),
    Shape([usize; 4]),
}

fn leaky<T: Scalar>(v: T, slope: T) -> T {
    if v > T::zero() {
        v
    } else {
        v * slope
    }
}

impl<T: Scalar> Layer<T> {
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        match self {
            Layer::Norm(n) => n.forward_cached(x).0,
            _ => self.forward_cached(x.clone()).0,
        }
    }

    /// Forward pass that keeps what the backward pass needs.
    pub fn forward_cached(&self, x: Tensor<T>) -> (Tensor<T>, Cache<T>) {
        match self {
            Layer::Conv(l) => {
                let y = l.forward(&x);
                (y, Cache::Input(x))
            }
            Layer::Deconv(l) => {
                let y = l.forward(&x);
                (y, Cache::Input(x))
            }
            Layer::Linear(l) => {
                let y = l.forward(&x);
                (y, Cache::Input(x))
            }
            Layer::Norm(l) => {
                let (y, c) = l.forward_cached(&x);
                (y, Cache::Norm(c))
            }
            Layer::LeakyRelu(s) => {
                let s = T::of(*s);
                let mut y = x.clone();
                y.data.iter_mut().for_each(|v| *v = leaky(*v, s));
                (y, Cache::Input(x))
            }
            Layer::Relu => {
                let mut y = x.clone();
                y.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
                (y, Cache::Input(x))
            }
            Layer::Tanh => {
                let mut y = x;
                y.data.iter_mut().for_each(|v| *v = v.tanh());
                let c = Cache::Output(y.clone());
                (y, c)
            }
            Layer::GlobalAvgPool => {
                let plane = x.h * x.w;
                let inv = T::of(1.0 / plane as f64);
                let data = x.data.chunks(plane).map(|p| p.iter().copied().sum::<T>() * inv).collect();
                let shape = x.shape();
                (Tensor::from_vec(x.n, x.c, 1, 1, data), Cache::Shape(shape))
            }
            Layer::Reshape { c, h, w } => {
                let shape = x.shape();
                (x.with_shape(*c, *h, *w), Cache::Shape(shape))
            }
        }
    }

    pub fn backward(&mut self, cache: Cache<T>, dy: Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        match (self, cache) {
            (Layer::Conv(l), Cache::Input(x)) => l.backward(&x, &dy, need_dx),
            (Layer::Deconv(l), Cache::Input(x)) => l.backward(&x, &dy, need_dx),
            (Layer::Linear(l), Cache::Input(x)) => l.backward(&x, &dy, need_dx),
            (Layer::Norm(l), Cache::Norm(c)) => Some(l.backward(&c, &dy)),
            (Layer::LeakyRelu(s), Cache::Input(x)) => {
                let s = T::of(*s);
                let mut dx = dy;
                dx.data
                    .iter_mut()
                    .zip(&x.data)
                    .for_each(|(g, &v)| if v <= T::zero() { *g *= s });
                Some(dx)
            }
            (Layer::Relu, Cache::Input(x)) => {
                let mut dx = dy;
                dx.data
                    .iter_mut()
                    .zip(&x.data)
                    .for_each(|(g, &v)| if v <= T::zero() { *g = T::zero() });
                Some(dx)
            }
            (Layer::Tanh, Cache::Output(y)) => {
                let mut dx = dy;
                dx.data
                    .iter_mut()
                    .zip(&y.data)
                    .for_each(|(g, &t)| *g *= T::one() - t * t);
                Some(dx)
            }
            (Layer::GlobalAvgPool, Cache::Shape([n, c, h, w])) => {
                let inv = T::of(1.0 / (h * w) as f64);
                let mut data = Vec::with_capacity(n * c * h * w);
                for &g in &dy.data {
                    data.extend(std::iter::repeat(g * inv).take(h * w));
                }
                Some(Tensor::from_vec(n, c, h, w, data))
            }
            (Layer::Reshape { .. }, Cache::Shape([_, c, h, w])) => Some(dy.with_shape(c, h, w)),
            _ => panic!("layer/cache mismatch in backward pass"),
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::Deconv(l) => vec![&l.weight, &l.bias],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            Layer::Norm(l) => vec![&l.gamma, &l.beta],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Deconv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Norm(l) => vec![&mut l.gamma, &mut l.beta],
            _ => Vec::new(),
        }
    }
}

/// Caches recorded by [`Sequential::forward_cached`], in layer order.
#[derive(Debug, Clone)]
pub struct Trace<T>(Vec<Cache<T>>);

#[derive(Debug, Clone, PartialEq)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut cur: Option<Tensor<T>> = None;
        for layer in &self.layers {
            let input = cur.as_ref().unwrap_or(x);
            cur = Some(match layer {
                // no need to copy the input for stateless-in-inference layers
                Layer::Norm(_) | Layer::Conv(_) | Layer::Deconv(_) | Layer::Linear(_) => layer.forward(input),
                _ => layer.forward_cached(input.clone()).0,
            });
        }
        cur.unwrap_or_else(|| x.clone())
    }

    pub fn forward_cached(&self, x: Tensor<T>) -> (Tensor<T>, Trace<T>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for layer in &self.layers {
            let (y, c) = layer.forward_cached(cur);
            caches.push(c);
            cur = y;
        }
        (cur, Trace(caches))
    }

    /// Backpropagates `dy`, accumulating parameter gradients. Returns the
    /// input gradient when `need_dx` is set.
    pub fn backward(&mut self, trace: Trace<T>, dy: Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let mut grad = dy;
        for (idx, (layer, cache)) in self.layers.iter_mut().zip(trace.0).enumerate().rev() {
            let out = layer.backward(cache, grad, need_dx || idx > 0);
            if idx == 0 {
                return if need_dx { out } else { None };
            }
            grad = out.expect("inner layers always return an input gradient");
        }
        Some(grad)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}
