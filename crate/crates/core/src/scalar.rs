//! Scalar abstractions shared by the numeric modules.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive, Num, ToPrimitive};

/// Field-like scalar used by closed-form accounting. Implemented by `f32`,
/// `f64` and exact rationals such as `Ratio<i64>`.
pub trait Scalar: Num + Clone + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static {
    fn from_u64_exact(v: u64) -> Self {
        Self::from_u64(v).expect("integer not representable in scalar type")
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("value not representable in scalar type")
    }
}

impl<T> Scalar for T where T: Num + Clone + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static {}

/// Floating-point scalar used by signal-space and optimization code.
pub trait Real: Float + FloatConst + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + 'static {
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal not representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Gaussian tail probability `Q(x) = P(Z > x)` for a standard normal `Z`.
pub fn q_function<F: Real>(x: F) -> F {
    let x = x.to_f64_lossy();
    F::lit(0.5 * libm::erfc(x / std::f64::consts::SQRT_2))
}

/// Converts a decibel ratio to linear scale.
pub fn db_to_linear<F: Real>(db: F) -> F {
    F::lit(10.0).powf(db / F::lit(10.0))
}
