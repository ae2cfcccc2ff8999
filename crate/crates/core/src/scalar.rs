//! Scalar abstraction shared by the numeric code.
//!
//! Everything that does arithmetic on signals, spectra or network parameters
//! is generic over [`Real`], which is implemented for `f32` and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + FftNum
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize fits in a float")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Logistic sigmoid.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = W x + b` for a row-major `rows x cols` matrix.
pub fn affine<T: Real>(w: &[T], x: &[T], b: &[T], out: &mut [T]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), b.len() * cols);
    for (r, o) in out.iter_mut().enumerate() {
        *o = b[r] + dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out += W^T g` for a row-major `rows x cols` matrix.
pub fn add_transpose_mul<T: Real>(w: &[T], g: &[T], out: &mut [T]) {
    let cols = out.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr != T::zero() {
            axpy(gr, &w[r * cols..(r + 1) * cols], out);
        }
    }
}

/// `dW += g x^T`
pub fn add_outer<T: Real>(g: &[T], x: &[T], dw: &mut [T]) {
    let cols = x.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr != T::zero() {
            axpy(gr, x, &mut dw[r * cols..(r + 1) * cols]);
        }
    }
}
