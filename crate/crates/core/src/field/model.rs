use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::numeric::{sigmoid, softplus, Grid2D, LinearMap, Real, Stencil, TinyMlp};

/// Axis pairing of the three branches: `(spatial u, spatial v, time-paired axis)`.
/// Branch 0 is `h(x,y) ⊙ k(z,t)`, branch 1 `h(x,z) ⊙ k(y,t)`, branch 2 `h(y,z) ⊙ k(x,t)`.
pub const BRANCH_AXES: [(usize, usize, usize); 3] = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];

/// Share of the initial gear value carried by each branch.
const GEAR_BRANCH_SHARE: [f64; 3] = [1.0 / 3.0; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceTimePoint {
    pub pos: Vec3,
    /// Frame time in `[0, T-1]`.
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(pos: Vec3, t: f64) -> Self {
        Self { pos, t }
    }
}

/// Parameter tensors grouped the way the optimizers see them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    SpatialPlanes,
    TemporalPlanes,
    GearPlanes,
    LinearMaps,
    Mlp,
}

impl ParamGroup {
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::SpatialPlanes => "spatial planes",
            ParamGroup::TemporalPlanes => "spatio-temporal planes",
            ParamGroup::GearPlanes => "gear planes",
            ParamGroup::LinearMaps => "linear maps",
            ParamGroup::Mlp => "mlp",
        }
    }

    pub fn is_gear(self) -> bool {
        self == ParamGroup::GearPlanes
    }
}

/// Density, color and semantic embedding at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample<T> {
    pub sigma: T,
    pub color: [T; 3],
    pub semantic: Vec<T>,
    pub gear: usize,
}

/// All learnable state of the scene representation.
///
/// The spatial planes and the linear maps exist once and are read by every
/// gear; each gear owns only its three spatio-temporal planes.
#[derive(Clone, Debug, PartialEq)]
pub struct GearedModel<T> {
    config: ModelConfig,
    pub spatial: [Grid2D<T>; 3],
    /// `st[G - 1]` holds gear `G`'s planes.
    pub st: Vec<[Grid2D<T>; 3]>,
    pub gear_spatial: [Grid2D<T>; 3],
    pub gear_st: [Grid2D<T>; 3],
    pub maps: [LinearMap<T>; 3],
    pub mlp: TinyMlp<T>,
}

/// Buffers for one feature evaluation, reused across points.
#[derive(Clone, Debug)]
pub struct FeatureScratch<T> {
    pub h: Vec<T>,
    pub k: Vec<T>,
    pub prod: Vec<T>,
    pub tmp: Vec<T>,
    pub work: Vec<T>,
}

impl<T: Real> FeatureScratch<T> {
    pub fn new(m: usize) -> Self {
        Self {
            h: vec![T::zero(); 3 * m],
            k: vec![T::zero(); 3 * m],
            prod: vec![T::zero(); 3 * m],
            tmp: vec![T::zero(); m],
            work: vec![T::zero(); 3 * m],
        }
    }
}

fn pair_stencils<T: Real>(spatial: &[Grid2D<T>; 3], st: &[Grid2D<T>; 3], q: &[T; 4]) -> [Stencil<T>; 6] {
    let mut out = [Stencil::default(); 6];
    for (j, &(a, b, c)) in BRANCH_AXES.iter().enumerate() {
        out[j] = spatial[j].stencil(q[a], q[b]);
        out[3 + j] = st[j].stencil(q[c], q[3]);
    }
    out
}

impl<T: Real> GearedModel<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let m = config.feature_dim;
        let r = config.spatial_res;
        let plane = |ru: usize, rv: usize, rng: &mut ChaCha8Rng| Grid2D::uniform(ru, rv, m, -0.1, 0.1, rng);
        let spatial = [plane(r, r, &mut rng)?, plane(r, r, &mut rng)?, plane(r, r, &mut rng)?];
        let mut st = Vec::with_capacity(config.n_gear);
        for g in 1..=config.n_gear {
            let tr = config.st_time_res(g);
            st.push([plane(r, tr, &mut rng)?, plane(r, tr, &mut rng)?, plane(r, tr, &mut rng)?]);
        }
        let maps = [
            LinearMap::fan_in_uniform(m, m, 3.0, &mut rng)?,
            LinearMap::fan_in_uniform(m, m, 3.0, &mut rng)?,
            LinearMap::fan_in_uniform(m, m, 3.0, &mut rng)?,
        ];
        let mlp = TinyMlp::new(m, config.dir_encoding_dim(), &config.hidden, config.semantic_dim, &mut rng)?;
        let (gear_spatial, gear_st) = constant_gear_planes(&config)?;
        Ok(Self {
            config,
            spatial,
            st,
            gear_spatial,
            gear_st,
            maps,
            mlp,
        })
    }

    /// Assembles a model from explicit tensors, checking every shape.
    pub fn from_parts(
        config: ModelConfig,
        spatial: [Grid2D<T>; 3],
        st: Vec<[Grid2D<T>; 3]>,
        gear_spatial: [Grid2D<T>; 3],
        gear_st: [Grid2D<T>; 3],
        maps: [LinearMap<T>; 3],
        mlp: TinyMlp<T>,
    ) -> Result<Self> {
        config.validate()?;
        let model = Self {
            config,
            spatial,
            st,
            gear_spatial,
            gear_st,
            maps,
            mlp,
        };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let m = c.feature_dim;
        let r = c.spatial_res;
        let bad = |what: String| Err(Error::DimMismatch(what));
        for (j, p) in self.spatial.iter().enumerate() {
            if (p.res_u(), p.res_v(), p.channels()) != (r, r, m) {
                return bad(format!("spatial plane {j} has shape {}x{}x{}", p.res_u(), p.res_v(), p.channels()));
            }
        }
        if self.st.len() != c.n_gear {
            return bad(format!("{} gear plane sets for {} gears", self.st.len(), c.n_gear));
        }
        for (g, planes) in self.st.iter().enumerate() {
            let tr = c.st_time_res(g + 1);
            for (j, p) in planes.iter().enumerate() {
                if (p.res_u(), p.res_v(), p.channels()) != (r, tr, m) {
                    return bad(format!("gear {} plane {j} has wrong shape", g + 1));
                }
            }
        }
        let gt = c.gear_plane_time_res();
        for j in 0..3 {
            let (hs, ks) = (&self.gear_spatial[j], &self.gear_st[j]);
            if (hs.res_u(), hs.res_v(), hs.channels()) != (r, r, m) || (ks.res_u(), ks.res_v(), ks.channels()) != (r, gt, m) {
                return bad(format!("gear-field plane {j} has wrong shape"));
            }
            if self.maps[j].in_dim() != m || self.maps[j].out_dim() != m {
                return bad(format!("linear map {j} is not {m}x{m}"));
            }
        }
        if self.mlp.feature_dim() != m || self.mlp.dir_dim() != c.dir_encoding_dim() || self.mlp.semantic_dim() != c.semantic_dim {
            return bad("mlp widths do not match the config".into());
        }
        Ok(())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn n_gear(&self) -> usize {
        self.config.n_gear
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    pub fn semantic_dim(&self) -> usize {
        self.config.semantic_dim
    }

    /// A structurally identical model with every tensor zeroed; used as a
    /// gradient buffer.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            spatial: self.spatial.clone().map(|g| g.zeros_like()),
            st: self.st.iter().map(|p| p.clone().map(|g| g.zeros_like())).collect(),
            gear_spatial: self.gear_spatial.clone().map(|g| g.zeros_like()),
            gear_st: self.gear_st.clone().map(|g| g.zeros_like()),
            maps: self.maps.clone().map(|m| m.zeros_like()),
            mlp: self.mlp.zeros_like(),
        }
    }

    /// Resets the gear field to its constant initialization.
    pub fn reset_gear_field(&mut self) -> Result<()> {
        let (h, k) = constant_gear_planes(&self.config)?;
        self.gear_spatial = h;
        self.gear_st = k;
        Ok(())
    }

    /// Clamps into the scene box and maps `(x, t)` to `[0, 1]⁴`.
    #[inline]
    pub fn normalize(&self, p: &SpaceTimePoint) -> [T; 4] {
        let [x, y, z] = self.config.bounds.normalize(p.pos);
        let frames = self.config.frame_count;
        let t = if frames > 1 { (p.t / (frames - 1) as f64).clamp(0.0, 1.0) } else { 0.0 };
        [T::of(x), T::of(y), T::of(z), T::of(t)]
    }

    /// Stencils into `(gear_spatial, gear_st)` for the three branches.
    #[inline]
    pub fn gear_stencils(&self, q: &[T; 4]) -> [Stencil<T>; 6] {
        pair_stencils(&self.gear_spatial, &self.gear_st, q)
    }

    /// `g(x, t) = Σ_j 1ᵀ(h'_j ⊙ k'_j)` at normalized coordinates.
    #[inline]
    pub fn gear_value_normalized(&self, q: &[T; 4], scratch: &mut FeatureScratch<T>) -> T {
        let st = self.gear_stencils(q);
        self.gear_value_with(&st, scratch)
    }

    #[inline]
    pub fn gear_value_with(&self, st: &[Stencil<T>; 6], scratch: &mut FeatureScratch<T>) -> T {
        let m = self.config.feature_dim;
        let mut g = T::zero();
        for j in 0..3 {
            let h = &mut scratch.h[j * m..(j + 1) * m];
            let k = &mut scratch.k[j * m..(j + 1) * m];
            self.gear_spatial[j].sample_into(&st[j], h);
            self.gear_st[j].sample_into(&st[3 + j], k);
            for c in 0..m {
                g += h[c] * k[c];
            }
        }
        g
    }

    /// Adds `dg · ∂g/∂Θ` into the gear planes of `grad`.
    pub fn gear_value_backward(&self, st: &[Stencil<T>; 6], dg: T, grad: &mut Self, scratch: &mut FeatureScratch<T>) {
        let m = self.config.feature_dim;
        for j in 0..3 {
            let h = &mut scratch.h[j * m..(j + 1) * m];
            let k = &mut scratch.k[j * m..(j + 1) * m];
            self.gear_spatial[j].sample_into(&st[j], h);
            self.gear_st[j].sample_into(&st[3 + j], k);
            for c in 0..m {
                scratch.tmp[c] = dg * k[c];
            }
            grad.gear_spatial[j].accumulate(&st[j], &scratch.tmp);
            for c in 0..m {
                scratch.tmp[c] = dg * h[c];
            }
            grad.gear_st[j].accumulate(&st[3 + j], &scratch.tmp);
        }
    }

    pub fn gear_value(&self, p: &SpaceTimePoint) -> T {
        let q = self.normalize(p);
        let mut s = FeatureScratch::new(self.config.feature_dim);
        self.gear_value_normalized(&q, &mut s)
    }

    pub fn gear_level(&self, p: &SpaceTimePoint) -> usize {
        project_gear(self.gear_value(p).as_f64(), self.config.n_gear)
    }

    #[inline]
    pub fn gear_level_normalized(&self, q: &[T; 4], scratch: &mut FeatureScratch<T>) -> usize {
        project_gear(self.gear_value_normalized(q, scratch).as_f64(), self.config.n_gear)
    }

    /// Gear-`gear` feature at normalized coordinates, written into `out`.
    /// `h`, `k` and `prod = h ⊙ k` (each `3M`) are kept for the backward pass.
    #[inline]
    pub fn feature_forward(&self, gear: usize, q: &[T; 4], h: &mut [T], k: &mut [T], prod: &mut [T], out: &mut [T]) -> [Stencil<T>; 6] {
        let m = self.config.feature_dim;
        let planes = &self.st[gear - 1];
        let st = pair_stencils(&self.spatial, planes, q);
        for j in 0..3 {
            let r = j * m..(j + 1) * m;
            self.spatial[j].sample_into(&st[j], &mut h[r.clone()]);
            planes[j].sample_into(&st[3 + j], &mut k[r.clone()]);
            for c in r {
                prod[c] = h[c] * k[c];
            }
        }
        out.copy_from_slice(&self.maps[0].bias);
        for (o, &b) in out.iter_mut().zip(&self.maps[1].bias) {
            *o += b;
        }
        for (o, &b) in out.iter_mut().zip(&self.maps[2].bias) {
            *o += b;
        }
        for j in 0..3 {
            self.maps[j].accumulate_forward(&prod[j * m..(j + 1) * m], out);
        }
        st
    }

    /// Backpropagates `dfeat` through the gear-`gear` feature using the
    /// values saved by [`Self::feature_forward`]. `work` needs `3M` entries.
    #[allow(clippy::too_many_arguments)]
    pub fn feature_backward(&self, gear: usize, st: &[Stencil<T>; 6], h: &[T], k: &[T], prod: &[T], dfeat: &[T], grad: &mut Self, work: &mut [T]) {
        let m = self.config.feature_dim;
        let (dprod, rest) = work.split_at_mut(m);
        let (dh, dk) = rest.split_at_mut(m);
        for j in 0..3 {
            let r = j * m..(j + 1) * m;
            self.maps[j].backward(&prod[r.clone()], dfeat, &mut grad.maps[j], Some(dprod));
            for c in 0..m {
                dh[c] = dprod[c] * k[j * m + c];
                dk[c] = dprod[c] * h[j * m + c];
            }
            grad.spatial[j].accumulate(&st[j], dh);
            grad.st[gear - 1][j].accumulate(&st[3 + j], dk);
        }
    }

    /// Geared feature `f^G(x, t)`: per plane pair, the shared linear map of the spatial sample times the gear-G space-time sample, summed. `gear` is clamped to `[1, N]`.
    pub fn gear_feature(&self, gear: usize, p: &SpaceTimePoint) -> Vec<T> {
        let gear = gear.clamp(1, self.config.n_gear);
        let q = self.normalize(p);
        let mut s = FeatureScratch::new(self.config.feature_dim);
        let mut out = vec![T::zero(); self.config.feature_dim];
        self.feature_forward(gear, &q, &mut s.h, &mut s.k, &mut s.prod, &mut out);
        out
    }

    /// Feature of the gear selected by the projected gear field.
    pub fn mixed_feature(&self, p: &SpaceTimePoint) -> Vec<T> {
        self.gear_feature(self.gear_level(p), p)
    }

    /// Density, color and semantics at `p` seen from unit direction `d`.
    pub fn field_eval(&self, p: &SpaceTimePoint, d: Vec3) -> FieldSample<T> {
        let gear = self.gear_level(p);
        self.field_eval_at_gear(gear, p, d)
    }

    pub fn field_eval_at_gear(&self, gear: usize, p: &SpaceTimePoint, d: Vec3) -> FieldSample<T> {
        let gear = gear.clamp(1, self.config.n_gear);
        let mut acts = vec![T::zero(); self.mlp.activation_len()];
        let m = self.config.feature_dim;
        let q = self.normalize(p);
        let mut s = FeatureScratch::new(m);
        self.feature_forward(gear, &q, &mut s.h, &mut s.k, &mut s.prod, &mut acts[..m]);
        encode_direction_into(d, self.config.dir_freqs, &mut acts[m..m + self.config.dir_encoding_dim()]);
        self.mlp.forward_in_place(&mut acts);
        let out = self.mlp.output(&acts);
        FieldSample {
            sigma: softplus(out[0]),
            color: [sigmoid(out[1]), sigmoid(out[2]), sigmoid(out[3])],
            semantic: out[4..].to_vec(),
            gear,
        }
    }

    /// Every parameter tensor with a stable name and its group.
    pub fn tensors(&self) -> Vec<(String, ParamGroup, &[T])> {
        let mut out: Vec<(String, ParamGroup, &[T])> = Vec::new();
        for (j, p) in self.spatial.iter().enumerate() {
            out.push((format!("spatial.{j}"), ParamGroup::SpatialPlanes, p.values()));
        }
        for (g, planes) in self.st.iter().enumerate() {
            for (j, p) in planes.iter().enumerate() {
                out.push((format!("st.{}.{j}", g + 1), ParamGroup::TemporalPlanes, p.values()));
            }
        }
        for (j, p) in self.gear_spatial.iter().enumerate() {
            out.push((format!("gear_spatial.{j}"), ParamGroup::GearPlanes, p.values()));
        }
        for (j, p) in self.gear_st.iter().enumerate() {
            out.push((format!("gear_st.{j}"), ParamGroup::GearPlanes, p.values()));
        }
        for (j, m) in self.maps.iter().enumerate() {
            out.push((format!("map.{j}.weight"), ParamGroup::LinearMaps, &m.weights));
            out.push((format!("map.{j}.bias"), ParamGroup::LinearMaps, &m.bias));
        }
        for (i, l) in self.mlp.layers().iter().enumerate() {
            out.push((format!("mlp.{i}.weight"), ParamGroup::Mlp, &l.weights));
            out.push((format!("mlp.{i}.bias"), ParamGroup::Mlp, &l.bias));
        }
        out
    }

    /// Mutable counterpart of [`Self::tensors`], in the same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, ParamGroup, &mut [T])> {
        let mut out: Vec<(String, ParamGroup, &mut [T])> = Vec::new();
        for (j, p) in self.spatial.iter_mut().enumerate() {
            out.push((format!("spatial.{j}"), ParamGroup::SpatialPlanes, p.values_mut()));
        }
        for (g, planes) in self.st.iter_mut().enumerate() {
            for (j, p) in planes.iter_mut().enumerate() {
                out.push((format!("st.{}.{j}", g + 1), ParamGroup::TemporalPlanes, p.values_mut()));
            }
        }
        for (j, p) in self.gear_spatial.iter_mut().enumerate() {
            out.push((format!("gear_spatial.{j}"), ParamGroup::GearPlanes, p.values_mut()));
        }
        for (j, p) in self.gear_st.iter_mut().enumerate() {
            out.push((format!("gear_st.{j}"), ParamGroup::GearPlanes, p.values_mut()));
        }
        for (j, m) in self.maps.iter_mut().enumerate() {
            out.push((format!("map.{j}.weight"), ParamGroup::LinearMaps, &mut m.weights));
            out.push((format!("map.{j}.bias"), ParamGroup::LinearMaps, &mut m.bias));
        }
        for (i, l) in self.mlp.layers_mut().iter_mut().enumerate() {
            out.push((format!("mlp.{i}.weight"), ParamGroup::Mlp, &mut l.weights));
            out.push((format!("mlp.{i}.bias"), ParamGroup::Mlp, &mut l.bias));
        }
        out
    }

    /// Adds `other` into `self` tensor by tensor (gradient reduction).
    pub fn add_assign(&mut self, other: &Self) {
        for ((_, _, a), (_, _, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for (_, _, t) in self.tensors_mut() {
            t.fill(T::zero());
        }
    }

    /// First parameter group holding a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<ParamGroup> {
        self.tensors()
            .into_iter()
            .find(|(_, _, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(_, g, _)| g)
    }

    /// Converts every tensor to another scalar type.
    pub fn cast<U: Real>(&self) -> GearedModel<U> {
        let grid = |g: &Grid2D<T>| {
            Grid2D::from_values(g.res_u(), g.res_v(), g.channels(), g.values().iter().map(|v| U::of(v.as_f64())).collect()).expect("shape preserved")
        };
        let lin = |l: &LinearMap<T>| {
            LinearMap::from_parts(
                l.in_dim(),
                l.out_dim(),
                l.weights.iter().map(|v| U::of(v.as_f64())).collect(),
                l.bias.iter().map(|v| U::of(v.as_f64())).collect(),
            )
            .expect("shape preserved")
        };
        let mlp = TinyMlp::from_layers(
            self.mlp.feature_dim(),
            self.mlp.dir_dim(),
            self.mlp.semantic_dim(),
            self.mlp.layers().iter().map(lin).collect(),
        )
        .expect("shape preserved");
        GearedModel {
            config: self.config.clone(),
            spatial: [grid(&self.spatial[0]), grid(&self.spatial[1]), grid(&self.spatial[2])],
            st: self.st.iter().map(|p| [grid(&p[0]), grid(&p[1]), grid(&p[2])]).collect(),
            gear_spatial: [grid(&self.gear_spatial[0]), grid(&self.gear_spatial[1]), grid(&self.gear_spatial[2])],
            gear_st: [grid(&self.gear_st[0]), grid(&self.gear_st[1]), grid(&self.gear_st[2])],
            maps: [lin(&self.maps[0]), lin(&self.maps[1]), lin(&self.maps[2])],
            mlp,
        }
    }
}

/// Constant gear planes with `h' ≡ A` and `k'_j ≡ w_j g0 / (A M)`, lowered by
/// a few ulps if rounding would put the field above `g0`.
fn constant_gear_planes<T: Real>(config: &ModelConfig) -> Result<([Grid2D<T>; 3], [Grid2D<T>; 3])> {
    let m = config.feature_dim;
    let r = config.spatial_res;
    let gt = config.gear_plane_time_res();
    let a = T::of(config.gear_plane_scale);
    let g0 = T::of(config.gear_init);
    let mut kv = GEAR_BRANCH_SHARE.map(|w| T::of(w * config.gear_init / (config.gear_plane_scale * m as f64)));
    let sum = |kv: &[T; 3]| {
        let mut g = T::zero();
        for k in kv {
            for _ in 0..m {
                g += a * *k;
            }
        }
        g
    };
    let mut guard = 0;
    while sum(&kv) > g0 && guard < 64 {
        kv = kv.map(|k| k - k * T::epsilon());
        guard += 1;
    }
    let h = [Grid2D::filled(r, r, m, a)?, Grid2D::filled(r, r, m, a)?, Grid2D::filled(r, r, m, a)?];
    let k = [
        Grid2D::filled(r, gt, m, kv[0])?,
        Grid2D::filled(r, gt, m, kv[1])?,
        Grid2D::filled(r, gt, m, kv[2])?,
    ];
    Ok((h, k))
}

/// Projection of a continuous gear value onto `[1, n_gear]`:
/// 1 below 1, `n_gear` at or above `n_gear`, the ceiling in between.
pub fn project_gear(g: f64, n_gear: usize) -> usize {
    let n = n_gear.max(1);
    if g.is_nan() || g < 1.0 {
        1
    } else if g >= n as f64 {
        n
    } else {
        (g.ceil() as usize).clamp(1, n)
    }
}

/// `sin`/`cos` of `2^k π d_i` for `k < freqs`, ordered by frequency, then
/// component, then sin before cos.
#[inline]
pub fn encode_direction_into<T: Real>(d: Vec3, freqs: usize, out: &mut [T]) {
    let mut i = 0;
    for k in 0..freqs {
        let w = std::f64::consts::PI * (1u64 << k) as f64;
        for c in 0..3 {
            let a = w * d[c];
            out[i] = T::of(a.sin());
            out[i + 1] = T::of(a.cos());
            i += 2;
        }
    }
}

pub fn encode_direction<T: Real>(d: Vec3, freqs: usize) -> Vec<T> {
    let mut out = vec![T::zero(); 6 * freqs];
    encode_direction_into(d, freqs, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::config::SplitStrategy;
    use crate::geometry::Aabb;
    use crate::numeric::LinearMap;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            n_gear: 3,
            feature_dim: 2,
            semantic_dim: 2,
            spatial_res: 2,
            frame_count: 5,
            bounds: Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0)),
            hidden: vec![3],
            dir_freqs: 1,
            split: SplitStrategy::Exp2,
            seed: 7,
            ..ModelConfig::default()
        }
    }

    fn randomize_gear(model: &mut GearedModel<f64>, seed: u64) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, g, t) in model.tensors_mut() {
            if g.is_gear() {
                for v in t.iter_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
        }
    }

    /// Straight-line bilinear lookup of channel `c`, independent of `Grid2D::stencil`.
    fn lookup(g: &Grid2D<f64>, u: f64, v: f64, c: usize) -> f64 {
        let cell = |x: f64, res: usize| {
            if res == 1 {
                return (0, 0, 0.0);
            }
            let s = x * (res - 1) as f64;
            let i = (s.floor() as usize).min(res - 2);
            (i, i + 1, s - i as f64)
        };
        let (i0, i1, a) = cell(u, g.res_u());
        let (j0, j1, b) = cell(v, g.res_v());
        let n = |i, j| g.node(i, j)[c];
        n(i0, j0) * (1.0 - a) * (1.0 - b) + n(i1, j0) * a * (1.0 - b) + n(i0, j1) * (1.0 - a) * b + n(i1, j1) * a * b
    }

    fn oracle_feature(model: &GearedModel<f64>, gear: usize, q: [f64; 4]) -> Vec<f64> {
        let m = model.feature_dim();
        let mut f = vec![0.0; m];
        for (j, &(a, b, c)) in BRANCH_AXES.iter().enumerate() {
            let x: Vec<f64> = (0..m)
                .map(|ch| lookup(&model.spatial[j], q[a], q[b], ch) * lookup(&model.st[gear - 1][j], q[c], q[3], ch))
                .collect();
            let map = &model.maps[j];
            for o in 0..m {
                let mut acc = map.bias[o];
                for i in 0..m {
                    acc += map.weights[o * m + i] * x[i];
                }
                f[o] += acc;
            }
        }
        f
    }

    fn oracle_gear(model: &GearedModel<f64>, q: [f64; 4]) -> f64 {
        let m = model.feature_dim();
        let mut g = 0.0;
        for (j, &(a, b, c)) in BRANCH_AXES.iter().enumerate() {
            for ch in 0..m {
                g += lookup(&model.gear_spatial[j], q[a], q[b], ch) * lookup(&model.gear_st[j], q[c], q[3], ch);
            }
        }
        g
    }

    #[test]
    fn temporal_axes_follow_gear_schedule() {
        let cfg = ModelConfig {
            frame_count: 24,
            spatial_res: 4,
            feature_dim: 2,
            ..ModelConfig::default()
        };
        let model = GearedModel::<f32>::new(cfg).unwrap();
        let res: Vec<_> = model.st.iter().map(|p| p[0].res_v()).collect();
        assert_eq!(res, vec![1, 9, 16, 24]);
    }

    #[test]
    fn gear_field_starts_at_init_value() {
        for (m, init, scale) in [(32, 1.0, 1.0), (16, 0.5, 4.0), (3, 1.0, 1.0 / 3.0), (5, 0.7, 2.5)] {
            let cfg = ModelConfig {
                feature_dim: m,
                spatial_res: 4,
                gear_init: init,
                gear_plane_scale: scale,
                ..ModelConfig::default()
            };
            let model = GearedModel::<f32>::new(cfg).unwrap();
            let p = SpaceTimePoint::new(Vec3::new(0.3, -0.2, 0.9), 7.5);
            let g = model.gear_value(&p) as f64;
            assert!(g <= init + 1e-12 && g > init - 1e-5, "m={m}: g={g}");
            assert_eq!(model.gear_level(&p), 1);
        }
    }

    #[test]
    fn zero_gear_planes_give_zero_gear() {
        let mut model = GearedModel::<f64>::new(tiny_config()).unwrap();
        for p in model.gear_spatial.iter_mut().chain(model.gear_st.iter_mut()) {
            p.values_mut().fill(0.0);
        }
        let p = SpaceTimePoint::new(Vec3::new(0.1, 0.2, 0.3), 1.0);
        assert_eq!(model.gear_value(&p), 0.0);
    }

    #[test]
    fn constant_gear_construction() {
        let mut model = GearedModel::<f64>::new(tiny_config()).unwrap();
        let c = 2.7;
        let m = model.feature_dim() as f64;
        for j in 0..3 {
            model.gear_spatial[j].values_mut().fill(1.0);
            model.gear_st[j].values_mut().fill(c / (3.0 * m));
        }
        let p = SpaceTimePoint::new(Vec3::new(-0.4, 0.8, 0.0), 3.0);
        assert!((model.gear_value(&p) - c).abs() < 1e-12);
    }

    #[test]
    fn gear_value_matches_oracle() {
        let mut model = GearedModel::<f64>::new(tiny_config()).unwrap();
        randomize_gear(&mut model, 3);
        let p = SpaceTimePoint::new(Vec3::new(0.2, -0.5, 0.7), 1.3);
        let q = model.normalize(&p);
        assert!((model.gear_value(&p) - oracle_gear(&model, q)).abs() < 1e-12);
    }

    #[test]
    fn projection_cases() {
        let gs = [-5.0, 0.0, 0.5, 1.0, 1.2, 2.0, 2.3, 3.7, 4.0, 9.0];
        let got: Vec<_> = gs.iter().map(|&g| project_gear(g, 4)).collect();
        assert_eq!(got, vec![1, 1, 1, 1, 2, 2, 3, 4, 4, 4]);
        assert_eq!(project_gear(1e9, 4), 4);
        assert_eq!(project_gear(-1e9, 4), 1);
        assert_eq!(project_gear(3.5, 1), 1);
    }

    #[test]
    fn zero_temporal_plane_gives_bias_sum() {
        let mut model = GearedModel::<f64>::new(tiny_config()).unwrap();
        for p in model.st[1].iter_mut() {
            p.values_mut().fill(0.0);
        }
        let f = model.gear_feature(2, &SpaceTimePoint::new(Vec3::new(0.3, 0.1, -0.2), 2.0));
        for o in 0..model.feature_dim() {
            let b: f64 = model.maps.iter().map(|m| m.bias[o]).sum();
            assert_eq!(f[o], b);
        }
    }

    #[test]
    fn identity_maps_and_unit_spatial_sum_temporal() {
        let mut model = GearedModel::<f64>::new(tiny_config()).unwrap();
        for j in 0..3 {
            model.maps[j] = LinearMap::identity(2).unwrap();
            model.spatial[j].values_mut().fill(1.0);
        }
        let p = SpaceTimePoint::new(Vec3::new(0.3, 0.1, -0.2), 2.0);
        let q = model.normalize(&p);
        let f = model.gear_feature(3, &p);
        for ch in 0..2 {
            let expect: f64 = BRANCH_AXES
                .iter()
                .enumerate()
                .map(|(j, &(_, _, c))| lookup(&model.st[2][j], q[c], q[3], ch))
                .sum();
            assert!((f[ch] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn gear_feature_matches_oracle_at_center() {
        let model = GearedModel::<f64>::new(tiny_config()).unwrap();
        let p = SpaceTimePoint::new(Vec3::ZERO, 2.0);
        let q = model.normalize(&p);
        assert_eq!(q, [0.5; 4]);
        for g in 1..=3 {
            let f = model.gear_feature(g, &p);
            let o = oracle_feature(&model, g, q);
            for (a, b) in f.iter().zip(&o) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixed_feature_is_masked_sum() {
        let mut model = GearedModel::<f64>::new(tiny_config()).unwrap();
        randomize_gear(&mut model, 11);
        for j in 0..3 {
            for v in model.gear_spatial[j].values_mut() {
                *v = v.abs() * 1.5;
            }
            for v in model.gear_st[j].values_mut() {
                *v = v.abs();
            }
        }
        let mut levels = std::collections::HashSet::new();
        for i in 0..50 {
            let s = i as f64 / 49.0;
            let p = SpaceTimePoint::new(Vec3::new(2.0 * s - 1.0, 0.9 - s, (3.0 * s).sin()), 4.0 * s);
            let level = model.gear_level(&p);
            levels.insert(level);
            let mut sum = vec![0.0; 2];
            let mut ones = 0;
            for g in 1..=3 {
                let mask = if g == level { 1.0 } else { 0.0 };
                ones += (mask == 1.0) as usize;
                for (s, f) in sum.iter_mut().zip(model.gear_feature(g, &p)) {
                    *s += mask * f;
                }
            }
            assert_eq!(ones, 1);
            assert_eq!(model.mixed_feature(&p), sum);
            assert_eq!(model.mixed_feature(&p), model.gear_feature(level, &p));
        }
        assert!(levels.len() > 1);
    }

    #[test]
    fn single_gear_mixing_is_gear_one() {
        let cfg = ModelConfig { n_gear: 1, ..tiny_config() };
        let model = GearedModel::<f64>::new(cfg).unwrap();
        let p = SpaceTimePoint::new(Vec3::new(0.5, 0.5, -0.5), 1.0);
        assert_eq!(model.mixed_feature(&p), model.gear_feature(1, &p));
    }

    #[test]
    fn temporal_planes_are_private_spatial_planes_shared() {
        let base = GearedModel::<f64>::new(tiny_config()).unwrap();
        let p = SpaceTimePoint::new(Vec3::new(0.1, -0.3, 0.6), 2.5);
        let mut m2 = base.clone();
        for v in m2.st[1][0].values_mut() {
            *v += 0.5;
        }
        assert_eq!(m2.gear_feature(1, &p), base.gear_feature(1, &p));
        assert_eq!(m2.gear_feature(3, &p), base.gear_feature(3, &p));
        assert_ne!(m2.gear_feature(2, &p), base.gear_feature(2, &p));
        let mut m3 = base.clone();
        for v in m3.spatial[0].values_mut() {
            *v += 0.5;
        }
        for g in 1..=3 {
            assert_ne!(m3.gear_feature(g, &p), base.gear_feature(g, &p));
        }
    }

    #[test]
    fn activations_at_zero_heads() {
        let mut model = GearedModel::<f64>::new(tiny_config()).unwrap();
        let last = model.mlp.layers().len() - 1;
        let l = &mut model.mlp.layers_mut()[last];
        l.weights.fill(0.0);
        l.bias.fill(0.0);
        let s = model.field_eval(&SpaceTimePoint::new(Vec3::ZERO, 0.0), Vec3::new(0.0, 0.0, 1.0));
        assert!((s.sigma - 2f64.ln()).abs() < 1e-15);
        assert_eq!(s.color, [0.5; 3]);
        assert_eq!(s.semantic, vec![0.0; 2]);
    }

    #[test]
    fn field_eval_matches_oracle_composition() {
        let model = GearedModel::<f64>::new(tiny_config()).unwrap();
        let p = SpaceTimePoint::new(Vec3::new(0.25, -0.6, 0.4), 3.2);
        let d = Vec3::new(1.0, 2.0, -2.0).normalized();
        let gear = model.gear_level(&p);
        let f = oracle_feature(&model, gear, model.normalize(&p));
        let enc: Vec<f64> = (0..3)
            .flat_map(|c| [(std::f64::consts::PI * d[c]).sin(), (std::f64::consts::PI * d[c]).cos()])
            .collect();
        let out = model.mlp.forward(&f, &enc).unwrap();
        let s = model.field_eval(&p, d);
        assert!((s.sigma - (1.0 + out.sigma_raw.exp()).ln()).abs() < 1e-12);
        for c in 0..3 {
            assert!((s.color[c] - 1.0 / (1.0 + (-out.color_raw[c]).exp())).abs() < 1e-12);
        }
        for (a, b) in s.semantic.iter().zip(&out.semantic) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_box_points_are_clamped() {
        let model = GearedModel::<f64>::new(tiny_config()).unwrap();
        let inside = SpaceTimePoint::new(Vec3::new(1.0, 1.0, 1.0), 4.0);
        let outside = SpaceTimePoint::new(Vec3::new(5.0, 3.0, 9.0), 40.0);
        assert_eq!(model.gear_feature(2, &inside), model.gear_feature(2, &outside));
    }

    #[test]
    fn tensor_visitation_is_consistent() {
        let mut model = GearedModel::<f64>::new(tiny_config()).unwrap();
        let names: Vec<String> = model.tensors().into_iter().map(|(n, _, _)| n).collect();
        let names_mut: Vec<String> = model.tensors_mut().into_iter().map(|(n, _, _)| n).collect();
        assert_eq!(names, names_mut);
        let gear_tensors = model.tensors().iter().filter(|(_, g, _)| g.is_gear()).count();
        assert_eq!(gear_tensors, 6);
        let cast: GearedModel<f32> = model.cast();
        let back: GearedModel<f64> = cast.cast();
        assert_eq!(back.tensors().len(), names.len());
    }
}
