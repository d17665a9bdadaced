//! Scalar abstraction: the whole library is generic over the real field,
//! with `f64` as the working precision for all shipped tools.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type the library is generic over.
///
/// `f64` is the intended precision; `f32` also satisfies the bounds but will
/// not meet the tight residual tolerances of the solvers.
pub trait Real:
    RealField + NumAssign + FromPrimitive + ToPrimitive + Copy + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("scalar conversion from f64")
    }

    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar conversion to f64")
    }
}

impl<T> Real for T where
    T: RealField + NumAssign + FromPrimitive + ToPrimitive + Copy + Send + Sync + 'static
{
}

/// `e^{i theta}` for a real phase.
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Complex number from real and imaginary parts.
pub fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

/// Purely real complex number.
pub fn cr<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}
