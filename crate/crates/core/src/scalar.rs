//! Scalar abstraction shared by every solver.

use nalgebra::{Complex, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point type the physics is generic over (`f32` or `f64`).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Debug + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("integer representable as float")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite float")
    }

    fn machine_epsilon() -> Self {
        Self::default_epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type C<R> = Complex<R>;

#[inline]
pub fn c<R: Real>(re: R, im: R) -> C<R> {
    Complex::new(re, im)
}

#[inline]
pub fn c_re<R: Real>(re: R) -> C<R> {
    Complex::new(re, R::zero())
}

#[inline]
pub fn i_unit<R: Real>() -> C<R> {
    Complex::new(R::zero(), R::one())
}

/// Squared modulus without the square root.
#[inline]
pub fn norm_sqr<R: Real>(z: C<R>) -> R {
    z.re * z.re + z.im * z.im
}

/// Magnitude of a scalar or complex entry, used by error norms.
pub trait Magnitude<R: Real>: Copy + Send + Sync {
    fn magnitude(&self) -> R;
}

impl<R: Real> Magnitude<R> for R {
    #[inline]
    fn magnitude(&self) -> R {
        self.abs()
    }
}

impl<R: Real> Magnitude<R> for C<R> {
    #[inline]
    fn magnitude(&self) -> R {
        norm_sqr(*self).sqrt()
    }
}

/// Pairwise (cascade) summation in slice order. The reduction tree depends
/// only on the slice length, so results are bit-reproducible.
pub fn pairwise_sum<R: Real>(values: &[R]) -> R {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        return values.iter().fold(R::zero(), |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
