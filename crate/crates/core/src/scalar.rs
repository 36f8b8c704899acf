//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the samplers are generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion used by reports and CSV output.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest magnitude treated as a usable (non-underflowed) coefficient.
    ///
    /// `1e-300` for `f64`; the smallest normal value for narrower types.
    #[inline]
    fn degenerate_floor() -> Self {
        Self::lit(1e-300).max(Self::min_positive_value())
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Element-wise helpers on plain slices.
pub(crate) mod vecops {
    use super::Scalar;

    pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
        a.iter().zip(b).map(|(&x, &y)| x * y).sum()
    }

    pub fn norm<T: Scalar>(a: &[T]) -> T {
        dot(a, a).sqrt()
    }

    /// `alpha * x + beta * y`
    pub fn lincomb<T: Scalar>(alpha: T, x: &[T], beta: T, y: &[T]) -> Vec<T> {
        x.iter().zip(y).map(|(&u, &v)| alpha * u + beta * v).collect()
    }

    /// `alpha * x + beta * y + gamma * z`
    pub fn lincomb3<T: Scalar>(alpha: T, x: &[T], beta: T, y: &[T], gamma: T, z: &[T]) -> Vec<T> {
        x.iter()
            .zip(y)
            .zip(z)
            .map(|((&u, &v), &w)| alpha * u + beta * v + gamma * w)
            .collect()
    }

    pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
        a.iter().zip(b).map(|(&x, &y)| x - y).collect()
    }

    pub fn scale<T: Scalar>(alpha: T, a: &[T]) -> Vec<T> {
        a.iter().map(|&x| alpha * x).collect()
    }

    pub fn axpy_in_place<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
        for (yi, &xi) in y.iter_mut().zip(x) {
            *yi = *yi + alpha * xi;
        }
    }
}
