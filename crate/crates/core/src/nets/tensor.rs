use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Floating-point element type of the network engine (`f32` for training, `f64` for gradient checks).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + AddAssign + MulAssign + Sum + 'static
{
    /// `C = alpha * A B + beta * C` on strided row/column layouts.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m x k`, `k x n` and `m x n` matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// `C (m x n) [+]= op(A) (m x k) * op(B) (k x n)`, all row-major.
///
/// With `a_t`, `a` holds the `k x m` matrix whose transpose is used; likewise `b_t`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    c: &mut [T],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "lhs size");
    assert_eq!(b.len(), k * n, "rhs size");
    assert_eq!(c.len(), m * n, "out size");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: slice lengths checked above match the declared shapes and strides.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// Dense NCHW tensor.
#[derive(Clone, Debug, PartialEq)]
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

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::Shape(format!(
                "{} values for shape [{n},{c},{h},{w}]",
                data.len()
            )));
        }
        Ok(Self { n, c, h, w, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    #[inline]
    pub fn hw(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let l = self.sample_len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [T] {
        let l = self.sample_len();
        &mut self.data[i * l..(i + 1) * l]
    }

    /// Stacks equally-shaped single samples into a batch.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::Shape("cannot stack zero tensors".into()))?;
        let mut data = Vec::with_capacity(items.len() * first.data.len());
        for t in items {
            if (t.c, t.h, t.w) != (first.c, first.h, first.w) {
                return Err(Error::Shape("stacked tensors differ in shape".into()));
            }
            data.extend_from_slice(&t.data);
        }
        let n = items.iter().map(|t| t.n).sum();
        Ok(Self {
            n,
            c: first.c,
            h: first.h,
            w: first.w,
            data,
        })
    }

    /// Single-sample tensor `i` of the batch.
    pub fn item(&self, i: usize) -> Self {
        Self {
            n: 1,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.sample(i).to_vec(),
        }
    }

    /// Channel-wise concatenation of two batches with equal N, H, W.
    pub fn concat_channels(a: &Tensor<T>, b: &Tensor<T>) -> Result<Self> {
        if (a.n, a.h, a.w) != (b.n, b.h, b.w) {
            return Err(Error::Shape(format!("concat {:?} with {:?}", a.shape(), b.shape())));
        }
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        for i in 0..a.n {
            data.extend_from_slice(a.sample(i));
            data.extend_from_slice(b.sample(i));
        }
        Ok(Self {
            n: a.n,
            c: a.c + b.c,
            h: a.h,
            w: a.w,
            data,
        })
    }

    /// Inverse of [`Tensor::concat_channels`]: splits after the first `c_first` channels.
    pub fn split_channels(&self, c_first: usize) -> (Self, Self) {
        let hw = self.hw();
        let (la, lb) = (c_first * hw, (self.c - c_first) * hw);
        let mut a = Vec::with_capacity(self.n * la);
        let mut b = Vec::with_capacity(self.n * lb);
        for i in 0..self.n {
            let s = self.sample(i);
            a.extend_from_slice(&s[..la]);
            b.extend_from_slice(&s[la..]);
        }
        (
            Self {
                n: self.n,
                c: c_first,
                h: self.h,
                w: self.w,
                data: a,
            },
            Self {
                n: self.n,
                c: self.c - c_first,
                h: self.h,
                w: self.w,
                data: b,
            },
        )
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64().unwrap()).unwrap()).collect(),
        }
    }
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> (f64, Tensor<T>) {
    assert_eq!(pred.shape(), target.shape(), "loss operands differ in shape");
    let n = pred.data.len();
    let scale = T::lit(2.0 / n as f64);
    let mut sum = 0.0f64;
    let mut grad = Vec::with_capacity(n);
    for (p, t) in pred.data.iter().zip(&target.data) {
        let d = *p - *t;
        let df = d.to_f64().unwrap();
        sum += df * df;
        grad.push(d * scale);
    }
    (
        sum / n as f64,
        Tensor {
            n: pred.n,
            c: pred.c,
            h: pred.h,
            w: pred.w,
            data: grad,
        },
    )
}
