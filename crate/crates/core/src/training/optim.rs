use crate::error::{Error, Result};
use crate::nets::layers::Param;

/// Adam with bias correction, one moment pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of updates applied so far.
    pub t: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, shapes: &[usize]) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Applies one update. `params[i]` pairs with moment slot `i`; `None` entries are frozen
    /// and keep both their values and their moments.
    pub fn step(&mut self, params: Vec<Option<&mut Param<f32>>>) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        let (b1, b2) = (b1 as f32, b2 as f32);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            let Some(p) = p else { continue };
            if p.value.len() != m.len() {
                return Err(Error::State(format!("moment size mismatch for {}", p.name)));
            }
            for i in 0..m.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                p.value[i] -= step * m[i] / (v[i].sqrt() + eps);
            }
        }
        Ok(())
    }
}
