use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the density, distance and clustering code is written against.
///
/// Implemented for `f32` and `f64`. Stochastic fitting (Gibbs sampling, optimisation,
/// Monte Carlo forecasting) is carried out in `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn c(x: f64) -> Self;

    /// Tolerance below which the GEV shape is treated as the Gumbel limit.
    fn gumbel_eps() -> Self {
        Self::c(1e-8)
    }
}

impl Scalar for f32 {
    #[inline]
    fn c(x: f64) -> Self {
        x as f32
    }

    fn gumbel_eps() -> Self {
        1e-6
    }
}

impl Scalar for f64 {
    #[inline]
    fn c(x: f64) -> Self {
        x
    }
}
