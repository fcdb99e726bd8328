//! Differentiable numeric substrate: feature grids, linear maps, a tiny MLP
//! and Adam. Gradients are written out by hand for the fixed compute graph;
//! there is no general tape.

mod adam;
mod grid;
mod linear;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use grid::{bilinear_sample, Grid2D, Stencil};
pub use linear::LinearMap;
pub use mlp::{MlpOutput, TinyMlp};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Scalar type for model parameters. Training runs in `f32`; gradient
/// checks run in `f64`.
pub trait Real: Float + Debug + Default + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static {
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline(always)]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline(always)]
    fn of(x: f64) -> Self {
        x
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}

#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    // log(1 + e^x) without overflow for large x
    if x > T::of(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
