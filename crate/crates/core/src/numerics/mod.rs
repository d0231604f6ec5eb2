//! Dense tensors, the kernels the encoder needs, and a reverse-mode tape.
//!
//! Everything here is generic over [`Scalar`]; training and inference run in
//! `f32`, gradient verification in `f64`.

mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use kernels::{dropout, gelu, layer_norm, matmul, softmax, LAYER_NORM_EPS};
pub(crate) use tape::smoothed_cross_entropy;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Floating-point element type of a [`Tensor`].
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    const DTYPE: &'static str;

    fn erf(self) -> Self;

    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";

    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";

    fn erf(self) -> Self {
        libm::erf(self)
    }
}
