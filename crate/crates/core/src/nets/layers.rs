//! Layer primitives with explicit forward caches and backward passes.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::{matmul, Scalar, Tensor};

/// One trainable tensor and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

/// Equality ignores the gradient buffer, which is scratch space.
impl<T: PartialEq> PartialEq for Param<T> {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.value == other.value
    }
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Vec<T>) -> Self {
        let grad = vec![T::zero(); value.len()];
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> Param<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::from_f64(x.to_f64().unwrap()).unwrap()).collect();
        Param {
            name: self.name.clone(),
            value: conv(&self.value),
            grad: conv(&self.grad),
        }
    }
}

pub(crate) fn normal_vec<T: Scalar>(rng: &mut impl Rng, len: usize, std: f64) -> Vec<T> {
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(z * std)
        })
        .collect()
}

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Output columns `[x0, x1)` whose input column `ox * s + kx - 1` lies inside `[0, w)`.
fn valid_span(kx: usize, s: usize, w: usize, ow: usize) -> (usize, usize) {
    let x0 = if kx == 0 { 1 } else { 0 };
    let x1 = (w + 1 - kx).div_ceil(s).min(ow);
    (x0.min(x1), x1)
}

/// 3x3 convolution with zero padding 1 and stride 1 or 2.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Conv2d<T> {
    /// He-normal weights, zero bias.
    pub fn new(name: &str, in_ch: usize, out_ch: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_ch * TAPS;
        Self {
            in_ch,
            out_ch,
            stride,
            weight: Param::new(format!("{name}.weight"), normal_vec(rng, out_ch * fan_in, (2.0 / fan_in as f64).sqrt())),
            bias: Param::new(format!("{name}.bias"), vec![T::zero(); out_ch]),
        }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        ((h + 2 - KERNEL) / self.stride + 1, (w + 2 - KERNEL) / self.stride + 1)
    }

    fn im2col(&self, x: &[T], h: usize, w: usize, oh: usize, ow: usize, cols: &mut [T]) {
        let s = self.stride;
        let ohw = oh * ow;
        for ci in 0..self.in_ch {
            let plane = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let row = &mut cols[(ci * TAPS + ky * KERNEL + kx) * ohw..][..ohw];
                    let (x0, x1) = valid_span(kx, s, w, ow);
                    for oy in 0..oh {
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        let Some(iy) = (oy * s + ky).checked_sub(1).filter(|&iy| iy < h) else {
                            dst.fill(T::zero());
                            continue;
                        };
                        let src = &plane[iy * w..(iy + 1) * w];
                        dst[..x0].fill(T::zero());
                        dst[x1..].fill(T::zero());
                        if s == 1 {
                            dst[x0..x1].copy_from_slice(&src[x0 + kx - 1..x1 + kx - 1]);
                        } else {
                            for (ox, d) in dst[x0..x1].iter_mut().enumerate() {
                                *d = src[(x0 + ox) * s + kx - 1];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], h: usize, w: usize, oh: usize, ow: usize, dx: &mut [T]) {
        let s = self.stride;
        let ohw = oh * ow;
        for ci in 0..self.in_ch {
            let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let row = &cols[(ci * TAPS + ky * KERNEL + kx) * ohw..][..ohw];
                    let (x0, x1) = valid_span(kx, s, w, ow);
                    for oy in 0..oh {
                        let Some(iy) = (oy * s + ky).checked_sub(1).filter(|&iy| iy < h) else {
                            continue;
                        };
                        let dst = &mut plane[iy * w..(iy + 1) * w];
                        let src = &row[oy * ow + x0..oy * ow + x1];
                        if s == 1 {
                            for (d, &v) in dst[x0 + kx - 1..x1 + kx - 1].iter_mut().zip(src) {
                                *d += v;
                            }
                        } else {
                            for (ox, &v) in src.iter().enumerate() {
                                dst[(x0 + ox) * s + kx - 1] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.in_ch, "{}: input channels", self.weight.name);
        let (oh, ow) = self.out_dims(x.h, x.w);
        let ohw = oh * ow;
        let k = self.in_ch * TAPS;
        let mut out = Tensor::zeros(x.n, self.out_ch, oh, ow);
        let mut cols = vec![T::zero(); k * ohw];
        for i in 0..x.n {
            self.im2col(x.sample(i), x.h, x.w, oh, ow, &mut cols);
            let y = out.sample_mut(i);
            for (o, chunk) in y.chunks_mut(ohw).enumerate() {
                chunk.iter_mut().for_each(|v| *v = self.bias.value[o]);
            }
            matmul(self.out_ch, k, ohw, &self.weight.value, false, &cols, false, y, true);
        }
        out
    }

    /// Accumulates parameter gradients; returns the input gradient when `need_dx`.
    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let (oh, ow) = (dy.h, dy.w);
        let ohw = oh * ow;
        let k = self.in_ch * TAPS;
        let mut cols = vec![T::zero(); k * ohw];
        let mut dcols = if need_dx { vec![T::zero(); k * ohw] } else { Vec::new() };
        let mut dx = need_dx.then(|| Tensor::zeros(x.n, x.c, x.h, x.w));
        for i in 0..x.n {
            let g = dy.sample(i);
            for (o, chunk) in g.chunks(ohw).enumerate() {
                let mut s = T::zero();
                for &v in chunk {
                    s += v;
                }
                self.bias.grad[o] += s;
            }
            self.im2col(x.sample(i), x.h, x.w, oh, ow, &mut cols);
            matmul(self.out_ch, ohw, k, g, false, &cols, true, &mut self.weight.grad, true);
            if let Some(dx) = dx.as_mut() {
                matmul(k, self.out_ch, ohw, &self.weight.value, true, g, false, &mut dcols, false);
                self.col2im(&dcols, x.h, x.w, oh, ow, dx.sample_mut(i));
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }
}

pub const NORM_EPS: f64 = 1e-5;

/// Per-sample, per-channel normalization cache.
#[derive(Clone, Debug)]
pub struct NormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

/// Instance normalization without affine parameters.
pub fn instance_norm<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, NormCache<T>) {
    let hw = x.hw();
    let count = T::lit(hw as f64);
    let eps = T::lit(NORM_EPS);
    let mut out = x.clone();
    let mut inv_std = Vec::with_capacity(x.n * x.c);
    for plane in out.data.chunks_mut(hw) {
        let mut mean = T::zero();
        for &v in plane.iter() {
            mean += v;
        }
        mean = mean / count;
        let mut var = T::zero();
        for &v in plane.iter() {
            let d = v - mean;
            var += d * d;
        }
        var = var / count;
        let is = T::one() / (var + eps).sqrt();
        for v in plane.iter_mut() {
            *v = (*v - mean) * is;
        }
        inv_std.push(is);
    }
    (out.clone(), NormCache { xhat: out, inv_std })
}

pub fn instance_norm_backward<T: Scalar>(cache: &NormCache<T>, dy: &Tensor<T>) -> Tensor<T> {
    let hw = dy.hw();
    let count = T::lit(hw as f64);
    let mut dx = dy.clone();
    for ((g, xh), &is) in dx.data.chunks_mut(hw).zip(cache.xhat.data.chunks(hw)).zip(&cache.inv_std) {
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for (gv, xv) in g.iter().zip(xh) {
            sum_g += *gv;
            sum_gx += *gv * *xv;
        }
        let mean_g = sum_g / count;
        let mean_gx = sum_gx / count;
        for (gv, xv) in g.iter_mut().zip(xh) {
            *gv = is * (*gv - mean_g - *xv * mean_gx);
        }
    }
    dx
}

pub fn relu<T: Scalar>(mut x: Tensor<T>) -> Tensor<T> {
    x.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
    x
}

/// Gradient through a ReLU given its output.
pub fn relu_backward<T: Scalar>(out: &Tensor<T>, mut dy: Tensor<T>) -> Tensor<T> {
    for (g, y) in dy.data.iter_mut().zip(&out.data) {
        if *y <= T::zero() {
            *g = T::zero();
        }
    }
    dy
}

pub fn sigmoid<T: Scalar>(mut x: Tensor<T>) -> Tensor<T> {
    x.data.iter_mut().for_each(|v| *v = T::one() / (T::one() + (-*v).exp()));
    x
}

pub fn sigmoid_backward<T: Scalar>(out: &Tensor<T>, mut dy: Tensor<T>) -> Tensor<T> {
    for (g, y) in dy.data.iter_mut().zip(&out.data) {
        *g = *g * *y * (T::one() - *y);
    }
    dy
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (h2, w2) = (x.h * 2, x.w * 2);
    let mut out = Tensor::zeros(x.n, x.c, h2, w2);
    for (src, dst) in x.data.chunks(x.hw()).zip(out.data.chunks_mut(h2 * w2)) {
        for y in 0..h2 {
            let srow = &src[(y / 2) * x.w..(y / 2 + 1) * x.w];
            for (xx, d) in dst[y * w2..(y + 1) * w2].iter_mut().enumerate() {
                *d = srow[xx / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward<T: Scalar>(dy: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor::zeros(dy.n, dy.c, h, w);
    for (src, dst) in dy.data.chunks(dy.hw()).zip(dx.data.chunks_mut(h * w)) {
        for y in 0..dy.h {
            for x in 0..dy.w {
                dst[(y / 2) * w + x / 2] += src[y * dy.w + x];
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rand_tensor(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(n, c, h, w, normal_vec(&mut rng, n * c * h * w, 1.0)).unwrap()
    }

    fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
    }

    /// Direct-loop convolution oracle.
    fn conv_naive(conv: &Conv2d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (oh, ow) = conv.out_dims(x.h, x.w);
        let mut out = Tensor::zeros(x.n, conv.out_ch, oh, ow);
        for n in 0..x.n {
            for o in 0..conv.out_ch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = conv.bias.value[o];
                        for ci in 0..conv.in_ch {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = (oy * conv.stride + ky) as isize - 1;
                                    let ix = (ox * conv.stride + kx) as isize - 1;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < x.h && (ix as usize) < x.w {
                                        s += conv.weight.value[(o * conv.in_ch + ci) * 9 + ky * 3 + kx]
                                            * x.data[((n * x.c + ci) * x.h + iy as usize) * x.w + ix as usize];
                                    }
                                }
                            }
                        }
                        out.data[((n * conv.out_ch + o) * oh + oy) * ow + ox] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_both_strides() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for stride in [1, 2] {
            let mut conv = Conv2d::<f64>::new("c", 3, 5, stride, &mut rng);
            conv.bias.value = normal_vec(&mut rng, 5, 1.0);
            let x = rand_tensor(2, 3, 8, 6, 2);
            let a = conv.forward(&x);
            let b = conv_naive(&conv, &x);
            assert_eq!(a.shape(), b.shape());
            for (u, v) in a.data.iter().zip(&b.data) {
                assert!((u - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn conv_backward_finite_difference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for stride in [1, 2] {
            let mut conv = Conv2d::<f64>::new("c", 2, 3, stride, &mut rng);
            let x = rand_tensor(2, 2, 6, 6, 4);
            let y = conv.forward(&x);
            let r = rand_tensor(y.n, y.c, y.h, y.w, 5);
            let dx = conv.backward(&x, &r, true).unwrap();
            let eps = 1e-6;
            for idx in [0, 7, 30, 71] {
                let mut xp = x.clone();
                xp.data[idx] += eps;
                let mut xm = x.clone();
                xm.data[idx] -= eps;
                let fd = (dot(&conv.forward(&xp), &r) - dot(&conv.forward(&xm), &r)) / (2.0 * eps);
                assert!((fd - dx.data[idx]).abs() < 1e-6, "dx[{idx}] {fd} vs {}", dx.data[idx]);
            }
            for idx in [0, 5, 17, 53] {
                let g = conv.weight.grad[idx];
                let orig = conv.weight.value[idx];
                conv.weight.value[idx] = orig + eps;
                let lp = dot(&conv.forward(&x), &r);
                conv.weight.value[idx] = orig - eps;
                let lm = dot(&conv.forward(&x), &r);
                conv.weight.value[idx] = orig;
                assert!(((lp - lm) / (2.0 * eps) - g).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn norm_backward_finite_difference() {
        let x = rand_tensor(2, 2, 4, 4, 9);
        let r = rand_tensor(2, 2, 4, 4, 10);
        let (_, cache) = instance_norm(&x);
        let dx = instance_norm_backward(&cache, &r);
        let eps = 1e-6;
        for idx in [0, 3, 19, 40, 63] {
            let mut xp = x.clone();
            xp.data[idx] += eps;
            let mut xm = x.clone();
            xm.data[idx] -= eps;
            let fd = (dot(&instance_norm(&xp).0, &r) - dot(&instance_norm(&xm).0, &r)) / (2.0 * eps);
            assert!((fd - dx.data[idx]).abs() < 1e-6);
        }
    }

    #[test]
    fn upsample_adjoint() {
        let x = rand_tensor(1, 2, 3, 4, 11);
        let r = rand_tensor(1, 2, 6, 8, 12);
        // <up(x), r> == <x, up^T(r)>
        let lhs = dot(&upsample2(&x), &r);
        let rhs = dot(&x, &upsample2_backward(&r));
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
