//! Element type abstraction over the two supported precisions.
//!
//! Single precision (`f32`) is the default compute type for the whole engine;
//! `f64` exists so gradient checks can run with tight finite-difference
//! tolerances.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Real element type a tensor can hold.
pub trait Scalar:
    Float + FromPrimitive + Sum<Self> + Copy + Debug + Display + Default + Send + Sync + 'static
{
    fn from_double(v: f64) -> Self;
    fn to_double(self) -> f64;
}

impl Scalar for f32 {
    fn from_double(v: f64) -> Self {
        v as f32
    }
    fn to_double(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_double(v: f64) -> Self {
        v
    }
    fn to_double(self) -> f64 {
        self
    }
}
