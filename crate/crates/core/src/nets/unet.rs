use serde::{Deserialize, Serialize};

use super::film::{Film, FilmCache};
use super::layers::{
    instance_norm, instance_norm_backward, relu, relu_backward, sigmoid, sigmoid_backward, upsample2,
    upsample2_backward, Conv2d, NormCache, Param,
};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::{domain, stream};

/// Architecture of one U-Net.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetSpec {
    /// Number of stride-2 down stages (and matching up stages).
    pub depth: usize,
    pub base_channels: usize,
    /// Channel cap for deep stages.
    pub max_channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub bottleneck_residual_blocks: usize,
    pub use_film: bool,
    /// Condition length K; only meaningful with `use_film`.
    pub cond_dim: usize,
}

impl UNetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.depth == 0 {
            return bad("U-Net depth must be at least 1".into());
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.base_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.max_channels < self.base_channels {
            return bad(format!("max_channels {} < base_channels {}", self.max_channels, self.base_channels));
        }
        if self.use_film && self.cond_dim == 0 {
            return bad("FiLM conditioning needs cond_dim >= 1".into());
        }
        Ok(())
    }

    /// Channel width at level `i` (0 = full resolution).
    pub fn channels_at(&self, level: usize) -> usize {
        (self.base_channels << level.min(16)).min(self.max_channels)
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.channels_at(self.depth)
    }

    /// Required divisor of input height and width.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResBlock<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
}

#[derive(Clone, Debug)]
struct ResCache<T> {
    x: Tensor<T>,
    n1: NormCache<T>,
    a1: Tensor<T>,
    n2: NormCache<T>,
}

impl<T: Scalar> ResBlock<T> {
    fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, ResCache<T>) {
        let (h, n1) = instance_norm(&self.conv1.forward(x));
        let a1 = relu(h);
        let (mut out, n2) = instance_norm(&self.conv2.forward(&a1));
        out.add_assign(x);
        (
            out,
            ResCache {
                x: x.clone(),
                n1,
                a1,
                n2,
            },
        )
    }

    fn backward(&mut self, c: &ResCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let d = instance_norm_backward(&c.n2, dy);
        let d = self.conv2.backward(&c.a1, &d, true).expect("dx requested");
        let d = relu_backward(&c.a1, d);
        let d = instance_norm_backward(&c.n1, &d);
        let mut dx = self.conv1.backward(&c.x, &d, true).expect("dx requested");
        dx.add_assign(dy);
        dx
    }
}

#[derive(Clone, Debug)]
struct StageCache<T> {
    input: Tensor<T>,
    norm: Option<NormCache<T>>,
    out: Tensor<T>,
}

/// Intermediate activations recorded by [`UNet::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct UNetTape<T> {
    x: Tensor<T>,
    a0: Tensor<T>,
    downs: Vec<StageCache<T>>,
    film: Option<FilmCache<T>>,
    res: Vec<ResCache<T>>,
    /// Indexed by level - 1.
    ups: Vec<StageCache<T>>,
    y: Tensor<T>,
}

/// Encoder/decoder with skip connections, optional FiLM at the bottleneck and a sigmoid output.
///
/// Levels: `conv_in` at full resolution, then `depth` stride-2 convs; the bottleneck is
/// FiLM-modulated (if enabled) and passed through residual blocks; each up stage
/// upsamples, concatenates the matching skip and convolves. Instance normalization
/// follows every conv except the full-resolution ones.
#[derive(Clone, Debug, PartialEq)]
pub struct UNet<T> {
    pub spec: UNetSpec,
    pub conv_in: Conv2d<T>,
    pub downs: Vec<Conv2d<T>>,
    pub film: Option<Film<T>>,
    pub res: Vec<ResBlock<T>>,
    pub ups: Vec<Conv2d<T>>,
    pub conv_out: Conv2d<T>,
}

impl<T: Scalar> UNet<T> {
    pub fn new(spec: UNetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = stream(seed, domain::INIT, 0);
        let c0 = spec.channels_at(0);
        let conv_in = Conv2d::new("conv_in", spec.in_channels, c0, 1, &mut rng);
        let downs = (1..=spec.depth)
            .map(|i| Conv2d::new(&format!("down{i}"), spec.channels_at(i - 1), spec.channels_at(i), 2, &mut rng))
            .collect();
        let cb = spec.bottleneck_channels();
        let res = (0..spec.bottleneck_residual_blocks)
            .map(|r| ResBlock {
                conv1: Conv2d::new(&format!("res{r}.conv1"), cb, cb, 1, &mut rng),
                conv2: Conv2d::new(&format!("res{r}.conv2"), cb, cb, 1, &mut rng),
            })
            .collect();
        let ups = (1..=spec.depth)
            .map(|i| {
                let cin = spec.channels_at(i) + spec.channels_at(i - 1);
                Conv2d::new(&format!("up{i}"), cin, spec.channels_at(i - 1), 1, &mut rng)
            })
            .collect();
        let conv_out = Conv2d::new("conv_out", c0, spec.out_channels, 1, &mut rng);
        let film = spec.use_film.then(|| {
            let mut frng = stream(seed, domain::FILM_INIT, 0);
            Film::new(spec.cond_dim, cb, cb, &mut frng)
        });
        Ok(Self {
            spec,
            conv_in,
            downs,
            film,
            res,
            ups,
            conv_out,
        })
    }

    pub fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.c != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "expected {} input channels, got {}",
                self.spec.in_channels, x.c
            )));
        }
        let m = self.spec.size_multiple();
        if x.h == 0 || x.w == 0 || x.h % m != 0 || x.w % m != 0 {
            return Err(Error::Shape(format!(
                "input {}x{} not divisible by {m} (depth {})",
                x.w, x.h, self.spec.depth
            )));
        }
        Ok(())
    }

    /// Forward pass; `cond` is `[n, K]` row-major and required exactly when FiLM is enabled.
    pub fn forward(&self, x: &Tensor<T>, cond: Option<&[T]>) -> Result<(Tensor<T>, UNetTape<T>)> {
        self.check_input(x)?;
        let a0 = relu(self.conv_in.forward(x));
        let mut downs: Vec<StageCache<T>> = Vec::with_capacity(self.spec.depth);
        for conv in &self.downs {
            let input = downs.last().map(|d| d.out.clone()).unwrap_or_else(|| a0.clone());
            let (h, norm) = instance_norm(&conv.forward(&input));
            downs.push(StageCache {
                input,
                norm: Some(norm),
                out: relu(h),
            });
        }
        let mut h = downs.last().expect("depth >= 1").out.clone();
        let film = match (&self.film, cond) {
            (Some(f), Some(c)) => {
                let (out, cache) = f.forward(&h, c)?;
                h = out;
                Some(cache)
            }
            (Some(_), None) => return Err(Error::Config("conditioned net called without a condition".into())),
            (None, _) => None,
        };
        let mut res = Vec::with_capacity(self.res.len());
        for block in &self.res {
            let (out, cache) = block.forward(&h);
            h = out;
            res.push(cache);
        }
        let mut ups: Vec<Option<StageCache<T>>> = vec![None; self.spec.depth];
        for level in (1..=self.spec.depth).rev() {
            let skip = if level == 1 { &a0 } else { &downs[level - 2].out };
            let cat = Tensor::concat_channels(&upsample2(&h), skip)?;
            let z = self.ups[level - 1].forward(&cat);
            let (z, norm) = if level > 1 {
                let (n, c) = instance_norm(&z);
                (n, Some(c))
            } else {
                (z, None)
            };
            h = relu(z);
            ups[level - 1] = Some(StageCache {
                input: cat,
                norm,
                out: h.clone(),
            });
        }
        let y = sigmoid(self.conv_out.forward(&h));
        let tape = UNetTape {
            x: x.clone(),
            a0,
            downs,
            film,
            res,
            ups: ups.into_iter().map(|u| u.expect("every level visited")).collect(),
            y: y.clone(),
        };
        Ok((y, tape))
    }

    /// Inference-only forward.
    pub fn predict(&self, x: &Tensor<T>, cond: Option<&[T]>) -> Result<Tensor<T>> {
        self.forward(x, cond).map(|(y, _)| y)
    }

    /// Accumulates parameter gradients for `dy = dLoss/dOutput`; returns `dLoss/dInput` when asked.
    pub fn backward(&mut self, tape: &UNetTape<T>, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let depth = self.spec.depth;
        let dz = sigmoid_backward(&tape.y, dy.clone());
        let mut dh = self
            .conv_out
            .backward(&tape.ups[0].out, &dz, true)
            .expect("dx requested");
        let mut dskip: Vec<Option<Tensor<T>>> = vec![None; depth];
        for level in 1..=depth {
            let cache = &tape.ups[level - 1];
            let mut d = relu_backward(&cache.out, dh);
            if let Some(norm) = &cache.norm {
                d = instance_norm_backward(norm, &d);
            }
            let dcat = self.ups[level - 1].backward(&cache.input, &d, true).expect("dx requested");
            let (du, ds) = dcat.split_channels(self.spec.channels_at(level));
            dskip[level - 1] = Some(ds);
            dh = upsample2_backward(&du);
        }
        for (block, cache) in self.res.iter_mut().zip(&tape.res).rev() {
            dh = block.backward(cache, &dh);
        }
        if let (Some(film), Some(cache)) = (self.film.as_mut(), tape.film.as_ref()) {
            dh = film.backward(cache, &dh);
        }
        for level in (1..=depth).rev() {
            if level < depth {
                dh.add_assign(dskip[level].as_ref().expect("skip gradient"));
            }
            let cache = &tape.downs[level - 1];
            let d = relu_backward(&cache.out, dh);
            let d = instance_norm_backward(cache.norm.as_ref().expect("down stages are normalized"), &d);
            dh = self.downs[level - 1].backward(&cache.input, &d, true).expect("dx requested");
        }
        dh.add_assign(dskip[0].as_ref().expect("skip gradient"));
        let d = relu_backward(&tape.a0, dh);
        self.conv_in.backward(&tape.x, &d, need_dx)
    }

    /// Parameters in a fixed order (conv_in, downs, film, res, ups, conv_out).
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = self.conv_in.params().into();
        for c in &self.downs {
            out.extend(c.params());
        }
        if let Some(f) = &self.film {
            out.extend(f.params());
        }
        for r in &self.res {
            out.extend(r.conv1.params());
            out.extend(r.conv2.params());
        }
        for c in &self.ups {
            out.extend(c.params());
        }
        out.extend(self.conv_out.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> = self.conv_in.params_mut().into();
        for c in &mut self.downs {
            out.extend(c.params_mut());
        }
        if let Some(f) = &mut self.film {
            out.extend(f.params_mut());
        }
        for r in &mut self.res {
            out.extend(r.conv1.params_mut());
            out.extend(r.conv2.params_mut());
        }
        for c in &mut self.ups {
            out.extend(c.params_mut());
        }
        out.extend(self.conv_out.params_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Same network with every parameter converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> UNet<U> {
        let conv = |c: &Conv2d<T>| Conv2d {
            in_ch: c.in_ch,
            out_ch: c.out_ch,
            stride: c.stride,
            weight: c.weight.cast(),
            bias: c.bias.cast(),
        };
        UNet {
            spec: self.spec.clone(),
            conv_in: conv(&self.conv_in),
            downs: self.downs.iter().map(conv).collect(),
            film: self.film.as_ref().map(|f| Film {
                cond_dim: f.cond_dim,
                hidden: f.hidden,
                channels: f.channels,
                w1: f.w1.cast(),
                b1: f.b1.cast(),
                wg: f.wg.cast(),
                bg: f.bg.cast(),
                wb: f.wb.cast(),
                bb: f.bb.cast(),
            }),
            res: self
                .res
                .iter()
                .map(|r| ResBlock {
                    conv1: conv(&r.conv1),
                    conv2: conv(&r.conv2),
                })
                .collect(),
            ups: self.ups.iter().map(conv).collect(),
            conv_out: conv(&self.conv_out),
        }
    }
}
