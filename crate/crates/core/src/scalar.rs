//! Floating-point scalar abstraction: all numerics are generic over [`Real`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating point scalar: f32 or f64.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static
{
    /// Cast an f64 constant into this scalar type.
    fn cast(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("constant representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    fn as_usize_lossy(self) -> usize {
        self.to_usize().expect("scalar convertible to usize")
    }
}

impl Real for f32 {}
impl Real for f64 {}
