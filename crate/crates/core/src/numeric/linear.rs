use rand::Rng;

use super::Real;
use crate::error::{Error, Result};

/// Affine map `y = W x + b` with `W` stored row-major as `[out_dim][in_dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap<T> {
    in_dim: usize,
    out_dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> LinearMap<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "linear map dimensions must be positive, got {in_dim} -> {out_dim}"
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut map = Self::zeros(dim, dim)?;
        for i in 0..dim {
            map.weights[i * dim + i] = T::one();
        }
        Ok(map)
    }

    /// Uniform fan-in initialization with `bound = sqrt(gain / in_dim)`; zero bias.
    pub fn fan_in_uniform<R: Rng>(in_dim: usize, out_dim: usize, gain: f64, rng: &mut R) -> Result<Self> {
        let mut map = Self::zeros(in_dim, out_dim)?;
        let bound = (gain / in_dim as f64).sqrt();
        for w in &mut map.weights {
            *w = T::of(rng.gen_range(-bound..bound));
        }
        Ok(map)
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::DimMismatch(format!(
                "linear map {in_dim}->{out_dim}: got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weights: vec![T::zero(); self.weights.len()],
            bias: vec![T::zero(); self.bias.len()],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    #[inline]
    pub fn forward_into(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(y.len(), self.out_dim);
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, &xi) in row.iter().zip(x) {
                acc += *w * xi;
            }
            *yo = acc;
        }
    }

    /// Adds `W x` (no bias) into `y`.
    #[inline]
    pub fn accumulate_forward(&self, x: &[T], y: &mut [T]) {
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = T::zero();
            for (w, &xi) in row.iter().zip(x) {
                acc += *w * xi;
            }
            *yo += acc;
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.in_dim {
            return Err(Error::Config(format!("linear map expects input width {}, got {}", self.in_dim, x.len())));
        }
        let mut y = vec![T::zero(); self.out_dim];
        self.forward_into(x, &mut y);
        Ok(y)
    }

    /// Given `dy`, accumulates parameter gradients into `grad` and, when
    /// `dx` is provided, writes the input gradient `Wᵀ dy` into it.
    #[inline]
    pub fn backward(&self, x: &[T], dy: &[T], grad: &mut Self, dx: Option<&mut [T]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            grad.bias[o] += g;
            let row = &mut grad.weights[o * self.in_dim..(o + 1) * self.in_dim];
            for (w, &xi) in row.iter_mut().zip(x) {
                *w += g * xi;
            }
        }
        if let Some(dx) = dx {
            for d in dx.iter_mut() {
                *d = T::zero();
            }
            for (o, &g) in dy.iter().enumerate() {
                if g == T::zero() {
                    continue;
                }
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                for (d, &w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}
