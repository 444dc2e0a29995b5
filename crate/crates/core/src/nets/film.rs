//! Feature-wise linear modulation of the bottleneck by a condition vector.

use rand::Rng;

use super::layers::{normal_vec, Param};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Generator `cond -> relu(W1 cond + b1) -> (gamma, beta)` plus the per-channel affine.
#[derive(Clone, Debug, PartialEq)]
pub struct Film<T> {
    pub cond_dim: usize,
    pub hidden: usize,
    pub channels: usize,
    pub w1: Param<T>,
    pub b1: Param<T>,
    pub wg: Param<T>,
    pub bg: Param<T>,
    pub wb: Param<T>,
    pub bb: Param<T>,
}

#[derive(Clone, Debug)]
pub struct FilmCache<T> {
    cond: Vec<T>,
    hidden: Vec<T>,
    gamma: Vec<T>,
    features: Tensor<T>,
}

impl<T: Scalar> Film<T> {
    /// Random hidden layer, output layer initialized to identity modulation (gamma = 1, beta = 0).
    pub fn new(cond_dim: usize, hidden: usize, channels: usize, rng: &mut impl Rng) -> Self {
        Self {
            cond_dim,
            hidden,
            channels,
            w1: Param::new("film.w1", normal_vec(rng, hidden * cond_dim, 1.0)),
            b1: Param::new("film.b1", vec![T::lit(0.1); hidden]),
            wg: Param::new("film.wg", vec![T::zero(); channels * hidden]),
            bg: Param::new("film.bg", vec![T::one(); channels]),
            wb: Param::new("film.wb", vec![T::zero(); channels * hidden]),
            bb: Param::new("film.bb", vec![T::zero(); channels]),
        }
    }

    /// Replaces every generator weight with random values (used to probe condition sensitivity).
    pub fn randomize(&mut self, rng: &mut impl Rng) {
        let std = (1.0 / self.hidden as f64).sqrt();
        self.w1.value = normal_vec(rng, self.w1.len(), 1.0);
        self.wg.value = normal_vec(rng, self.wg.len(), std);
        self.wb.value = normal_vec(rng, self.wb.len(), std);
        self.bg.value = normal_vec(rng, self.bg.len(), 0.5).into_iter().map(|v: T| v + T::one()).collect();
        self.bb.value = normal_vec(rng, self.bb.len(), 0.5);
    }

    /// Per-sample `(gamma, beta, hidden)` for a batch of conditions laid out `[n, K]`.
    fn generate(&self, cond: &[T], n: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
        let (k, hd, c) = (self.cond_dim, self.hidden, self.channels);
        let mut hidden = vec![T::zero(); n * hd];
        let mut gamma = vec![T::zero(); n * c];
        let mut beta = vec![T::zero(); n * c];
        for i in 0..n {
            let ci = &cond[i * k..(i + 1) * k];
            let hi = &mut hidden[i * hd..(i + 1) * hd];
            for (j, h) in hi.iter_mut().enumerate() {
                let mut s = self.b1.value[j];
                for (kk, &cv) in ci.iter().enumerate() {
                    s += self.w1.value[j * k + kk] * cv;
                }
                *h = s.max(T::zero());
            }
            for ch in 0..c {
                let mut g = self.bg.value[ch];
                let mut b = self.bb.value[ch];
                for (j, &h) in hi.iter().enumerate() {
                    g += self.wg.value[ch * hd + j] * h;
                    b += self.wb.value[ch * hd + j] * h;
                }
                gamma[i * c + ch] = g;
                beta[i * c + ch] = b;
            }
        }
        (gamma, beta, hidden)
    }

    pub fn check(&self, features: &Tensor<T>, cond: &[T]) -> Result<()> {
        if features.c != self.channels {
            return Err(Error::Shape(format!(
                "FiLM expects {} channels, features have {}",
                self.channels, features.c
            )));
        }
        if cond.len() != features.n * self.cond_dim {
            return Err(Error::Config(format!(
                "condition of length {} for batch {} but K = {}",
                cond.len(),
                features.n,
                self.cond_dim
            )));
        }
        Ok(())
    }

    /// `out[c] = gamma_c(cond) * features[c] + beta_c(cond)`.
    pub fn forward(&self, features: &Tensor<T>, cond: &[T]) -> Result<(Tensor<T>, FilmCache<T>)> {
        self.check(features, cond)?;
        let (gamma, beta, hidden) = self.generate(cond, features.n);
        let mut out = features.clone();
        let hw = features.hw();
        for (idx, plane) in out.data.chunks_mut(hw).enumerate() {
            let (g, b) = (gamma[idx], beta[idx]);
            plane.iter_mut().for_each(|v| *v = g * *v + b);
        }
        Ok((
            out,
            FilmCache {
                cond: cond.to_vec(),
                hidden,
                gamma,
                features: features.clone(),
            },
        ))
    }

    pub fn backward(&mut self, cache: &FilmCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let (k, hd, c) = (self.cond_dim, self.hidden, self.channels);
        let hw = dy.hw();
        let n = dy.n;
        let mut dx = dy.clone();
        let mut dgamma = vec![T::zero(); n * c];
        let mut dbeta = vec![T::zero(); n * c];
        for (idx, (g, f)) in dx.data.chunks_mut(hw).zip(cache.features.data.chunks(hw)).enumerate() {
            let mut sg = T::zero();
            let mut sb = T::zero();
            for (gv, fv) in g.iter().zip(f) {
                sg += *gv * *fv;
                sb += *gv;
            }
            dgamma[idx] = sg;
            dbeta[idx] = sb;
            let gm = cache.gamma[idx];
            g.iter_mut().for_each(|v| *v = *v * gm);
        }
        for i in 0..n {
            let h = &cache.hidden[i * hd..(i + 1) * hd];
            let mut dh = vec![T::zero(); hd];
            for ch in 0..c {
                let (dg, db) = (dgamma[i * c + ch], dbeta[i * c + ch]);
                self.bg.grad[ch] += dg;
                self.bb.grad[ch] += db;
                for j in 0..hd {
                    self.wg.grad[ch * hd + j] += dg * h[j];
                    self.wb.grad[ch * hd + j] += db * h[j];
                    dh[j] += self.wg.value[ch * hd + j] * dg + self.wb.value[ch * hd + j] * db;
                }
            }
            let cond = &cache.cond[i * k..(i + 1) * k];
            for j in 0..hd {
                if h[j] <= T::zero() {
                    continue;
                }
                self.b1.grad[j] += dh[j];
                for kk in 0..k {
                    self.w1.grad[j * k + kk] += dh[j] * cond[kk];
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 6] {
        [&mut self.w1, &mut self.b1, &mut self.wg, &mut self.bg, &mut self.wb, &mut self.bb]
    }

    pub fn params(&self) -> [&Param<T>; 6] {
        [&self.w1, &self.b1, &self.wg, &self.bg, &self.wb, &self.bb]
    }
}
