use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Scalar;
use crate::preprocess::Image;

/// Dense NCHW activation block.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor buffer size mismatch");
        Self { n, c, h, w, data }
    }

    /// `n x dim` matrix of standard normal draws.
    pub fn randn(n: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let data = (0..n * dim)
            .map(|_| {
                let v: f64 = StandardNormal.sample(rng);
                T::of(v)
            })
            .collect();
        Self::from_vec(n, dim, 1, 1, data)
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let l = self.sample_len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn with_shape(mut self, c: usize, h: usize, w: usize) -> Self {
        assert_eq!(c * h * w, self.sample_len(), "reshape changes element count");
        self.c = c;
        self.h = h;
        self.w = w;
        self
    }

    /// Packs images into a tensor with intensities mapped to `[-1, 1]`.
    pub fn from_images(images: &[&Image]) -> Self {
        assert!(!images.is_empty(), "empty image batch");
        let (w, h, c) = (images[0].width(), images[0].height(), images[0].channels());
        let mut data = Vec::with_capacity(images.len() * c * h * w);
        for img in images {
            assert_eq!(
                (img.width(), img.height(), img.channels()),
                (w, h, c),
                "images in a batch must share a shape"
            );
            let px = img.data();
            for ch in 0..c {
                data.extend(
                    px.iter()
                        .skip(ch)
                        .step_by(c)
                        .map(|&v| T::of(f64::from(v) / 127.5 - 1.0)),
                );
            }
        }
        Self::from_vec(images.len(), c, h, w, data)
    }

    /// Inverse of [`Tensor::from_images`] for sample `i`.
    pub fn to_image(&self, i: usize) -> Image {
        let s = self.sample(i);
        let plane = self.h * self.w;
        Image::from_fn(self.w, self.h, self.c, |x, y, ch| {
            let v = (s[ch * plane + y * self.w + x].as_f64() + 1.0) * 127.5;
            crate::preprocess::round_half_up_u8(v)
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
