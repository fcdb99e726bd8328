use rand::Rng;

use super::Real;
use crate::error::{Error, Result};

/// Dense 2D feature grid sampled by bilinear interpolation.
///
/// Values are laid out `[u][v][channel]`, so the four nodes of a cell are
/// each a contiguous run of `channels` values. An axis with resolution 1 is
/// constant along that axis (used for time-invariant planes).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D<T> {
    res_u: usize,
    res_v: usize,
    channels: usize,
    values: Vec<T>,
}

/// Precomputed interpolation footprint of one lookup.
#[derive(Clone, Copy, Debug, Default)]
pub struct Stencil<T> {
    /// Offsets of nodes (u0,v0), (u1,v0), (u0,v1), (u1,v1) into `values`.
    pub offsets: [usize; 4],
    /// Fractional position inside the cell along u and v.
    pub frac: [T; 2],
}

impl<T: Real> Stencil<T> {
    /// Bilinear weights in node order; they sum to one up to rounding.
    #[inline]
    pub fn weights(&self) -> [T; 4] {
        let [a, b] = self.frac;
        let one = T::one();
        [(one - a) * (one - b), a * (one - b), (one - a) * b, a * b]
    }
}

impl<T: Real> Grid2D<T> {
    pub fn filled(res_u: usize, res_v: usize, channels: usize, value: T) -> Result<Self> {
        if res_u == 0 || res_v == 0 || channels == 0 {
            return Err(Error::Config(format!("grid dimensions must be positive, got {res_u}x{res_v}x{channels}")));
        }
        Ok(Self {
            res_u,
            res_v,
            channels,
            values: vec![value; res_u * res_v * channels],
        })
    }

    pub fn zeros(res_u: usize, res_v: usize, channels: usize) -> Result<Self> {
        Self::filled(res_u, res_v, channels, T::zero())
    }

    pub fn uniform<R: Rng>(res_u: usize, res_v: usize, channels: usize, lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        let mut grid = Self::zeros(res_u, res_v, channels)?;
        for v in &mut grid.values {
            *v = T::of(rng.gen_range(lo..hi));
        }
        Ok(grid)
    }

    pub fn from_values(res_u: usize, res_v: usize, channels: usize, values: Vec<T>) -> Result<Self> {
        let mut grid = Self::zeros(res_u, res_v, channels)?;
        if values.len() != grid.values.len() {
            return Err(Error::DimMismatch(format!(
                "grid {res_u}x{res_v}x{channels} needs {} values, got {}",
                grid.values.len(),
                values.len()
            )));
        }
        grid.values = values;
        Ok(grid)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            res_u: self.res_u,
            res_v: self.res_v,
            channels: self.channels,
            values: vec![T::zero(); self.values.len()],
        }
    }

    pub fn res_u(&self) -> usize {
        self.res_u
    }

    pub fn res_v(&self) -> usize {
        self.res_v
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn node(&self, iu: usize, iv: usize) -> &[T] {
        let start = (iu * self.res_v + iv) * self.channels;
        &self.values[start..start + self.channels]
    }

    pub fn node_mut(&mut self, iu: usize, iv: usize) -> &mut [T] {
        let start = (iu * self.res_v + iv) * self.channels;
        &mut self.values[start..start + self.channels]
    }

    /// Interpolation footprint for normalized coordinates. Callers must have
    /// clamped `u` and `v` into `[0, 1]`.
    #[inline]
    pub fn stencil(&self, u: T, v: T) -> Stencil<T> {
        debug_assert!(u >= T::zero() && u <= T::one() && v >= T::zero() && v <= T::one());
        let (i0, i1, a) = axis_cell(u, self.res_u);
        let (j0, j1, b) = axis_cell(v, self.res_v);
        let c = self.channels;
        let rv = self.res_v;
        Stencil {
            offsets: [(i0 * rv + j0) * c, (i1 * rv + j0) * c, (i0 * rv + j1) * c, (i1 * rv + j1) * c],
            frac: [a, b],
        }
    }

    /// Writes the interpolated feature into `out`.
    ///
    /// Uses nested lerps so that a locally constant grid reproduces its value
    /// exactly.
    #[inline]
    pub fn sample_into(&self, st: &Stencil<T>, out: &mut [T]) {
        let [a, b] = st.frac;
        let vals = &self.values;
        let [o00, o10, o01, o11] = st.offsets;
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let p00 = vals[o00 + c];
            let p10 = vals[o10 + c];
            let p01 = vals[o01 + c];
            let p11 = vals[o11 + c];
            let lo = p00 + (p10 - p00) * a;
            let hi = p01 + (p11 - p01) * a;
            *o = lo + (hi - lo) * b;
        }
    }

    /// Scatters `dout` (gradient w.r.t. the sampled feature) onto this grid,
    /// which plays the role of a gradient buffer.
    #[inline]
    pub fn accumulate(&mut self, st: &Stencil<T>, dout: &[T]) {
        let w = st.weights();
        for (k, &off) in st.offsets.iter().enumerate() {
            let wk = w[k];
            if wk == T::zero() {
                continue;
            }
            let dst = &mut self.values[off..off + self.channels];
            for (d, &g) in dst.iter_mut().zip(dout) {
                *d += wk * g;
            }
        }
    }

    /// Checked lookup returning the feature vector.
    pub fn sample(&self, u: T, v: T) -> Result<Vec<T>> {
        check_unit("u", u)?;
        check_unit("v", v)?;
        let st = self.stencil(u, v);
        let mut out = vec![T::zero(); self.channels];
        self.sample_into(&st, &mut out);
        Ok(out)
    }

    /// Value together with its partial derivatives along `u` and `v`.
    pub fn sample_with_coord_grad(&self, u: T, v: T) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
        check_unit("u", u)?;
        check_unit("v", v)?;
        let st = self.stencil(u, v);
        let mut value = vec![T::zero(); self.channels];
        self.sample_into(&st, &mut value);
        let [a, b] = st.frac;
        let one = T::one();
        let su = if self.res_u > 1 { T::of((self.res_u - 1) as f64) } else { T::zero() };
        let sv = if self.res_v > 1 { T::of((self.res_v - 1) as f64) } else { T::zero() };
        let [o00, o10, o01, o11] = st.offsets;
        let mut du = vec![T::zero(); self.channels];
        let mut dv = vec![T::zero(); self.channels];
        for c in 0..self.channels {
            let p00 = self.values[o00 + c];
            let p10 = self.values[o10 + c];
            let p01 = self.values[o01 + c];
            let p11 = self.values[o11 + c];
            du[c] = su * ((p10 - p00) * (one - b) + (p11 - p01) * b);
            dv[c] = sv * ((p01 - p00) * (one - a) + (p11 - p10) * a);
        }
        Ok((value, du, dv))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[inline]
fn axis_cell<T: Real>(x: T, res: usize) -> (usize, usize, T) {
    if res == 1 {
        return (0, 0, T::zero());
    }
    let scaled = x * T::of((res - 1) as f64);
    let mut i0 = scaled.floor().to_usize().unwrap_or(0);
    if i0 > res - 2 {
        i0 = res - 2;
    }
    (i0, i0 + 1, scaled - T::of(i0 as f64))
}

fn check_unit<T: Real>(name: &str, x: T) -> Result<()> {
    if x >= T::zero() && x <= T::one() {
        Ok(())
    } else {
        Err(Error::Contract(format!("bilinear coordinate {name} = {x:?} outside [0, 1]")))
    }
}

/// Checked bilinear lookup.
pub fn bilinear_sample<T: Real>(grid: &Grid2D<T>, u: T, v: T) -> Result<Vec<T>> {
    grid.sample(u, v)
}
