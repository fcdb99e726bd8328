use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::camera::Ray;
use super::composite::{composite_sigma_grad, estimate_depth};
use super::sampling::{gear_split_into, sample_uniform_into, SampleSet};
use crate::field::{encode_direction_into, FeatureScratch, GearedModel, SpaceTimePoint};
use crate::numeric::{sigmoid, softplus, Real, Stencil};

/// Per-ray sampling and compositing settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarchSettings {
    pub samples_per_ray: usize,
    /// Seed for stratified jitter; midpoints when `None`.
    pub jitter_seed: Option<u64>,
    /// Samples past the point where transmittance drops below this value are
    /// not evaluated. Zero disables the cut-off.
    pub early_stop: f64,
    pub background: [f64; 3],
}

impl MarchSettings {
    pub fn new(samples_per_ray: usize) -> Self {
        Self {
            samples_per_ray,
            jitter_seed: None,
            early_stop: 1e-4,
            background: [0.0; 3],
        }
    }
}

/// Result of marching one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RayOutput<T> {
    pub color: [T; 3],
    pub semantic: Vec<T>,
    pub depth: Option<f64>,
    pub weight_sum: T,
    pub samples: usize,
}

/// Reusable buffers for marching rays, holding everything the backward pass
/// needs from the last forward pass.
#[derive(Clone, Debug)]
pub struct RayWorkspace<T> {
    base: SampleSet,
    pub samples: SampleSet,
    stencils: Vec<[Stencil<T>; 6]>,
    h: Vec<T>,
    k: Vec<T>,
    prod: Vec<T>,
    acts: Vec<T>,
    pub sigma: Vec<T>,
    sigma_raw: Vec<T>,
    delta: Vec<T>,
    pub color: Vec<[T; 3]>,
    pub semantic: Vec<T>,
    pub weights: Vec<T>,
    pub transmittance: Vec<T>,
    pub t_final: T,
    evaluated: usize,
    out_color: [T; 3],
    out_semantic: Vec<T>,
    dir_enc: Vec<T>,
    scratch: FeatureScratch<T>,
    e: Vec<T>,
    d_sigma: Vec<T>,
    d_out: Vec<T>,
    d_input: Vec<T>,
    mlp_scratch: Vec<T>,
    background: [T; 3],
}

impl<T: Real> RayWorkspace<T> {
    pub fn new(model: &GearedModel<T>) -> Self {
        let m = model.feature_dim();
        let d = model.semantic_dim();
        Self {
            base: SampleSet::default(),
            samples: SampleSet::default(),
            stencils: Vec::new(),
            h: Vec::new(),
            k: Vec::new(),
            prod: Vec::new(),
            acts: Vec::new(),
            sigma: Vec::new(),
            sigma_raw: Vec::new(),
            delta: Vec::new(),
            color: Vec::new(),
            semantic: Vec::new(),
            weights: Vec::new(),
            transmittance: Vec::new(),
            t_final: T::one(),
            evaluated: 0,
            out_color: [T::zero(); 3],
            out_semantic: vec![T::zero(); d],
            dir_enc: vec![T::zero(); model.config().dir_encoding_dim()],
            scratch: FeatureScratch::new(m),
            e: Vec::new(),
            d_sigma: Vec::new(),
            d_out: vec![T::zero(); 4 + d],
            d_input: vec![T::zero(); model.mlp.input_dim()],
            mlp_scratch: vec![T::zero(); 2 * model.mlp.max_width()],
            background: [T::zero(); 3],
        }
    }

    /// Number of samples evaluated in the last forward pass.
    pub fn evaluated(&self) -> usize {
        self.evaluated
    }

    /// Builds the sample set for `ray`: uniform samples, gear lookup at each
    /// sample, and (with motion-aware sampling on) gear splitting.
    pub fn build_samples(&mut self, model: &GearedModel<T>, ray: &Ray, settings: &MarchSettings) {
        match settings.jitter_seed {
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                sample_uniform_into(ray, settings.samples_per_ray, Some(&mut rng), &mut self.base);
            }
            None => sample_uniform_into::<ChaCha8Rng>(ray, settings.samples_per_ray, None, &mut self.base),
        }
        for i in 0..self.base.len() {
            let q = model.normalize(&SpaceTimePoint::new(ray.at(self.base.t[i]), ray.time));
            self.base.gear[i] = model.gear_level_normalized(&q, &mut self.scratch);
        }
        if model.config().motion_aware_sampling {
            gear_split_into(&self.base, model.config().split, &mut self.samples);
        } else {
            std::mem::swap(&mut self.base, &mut self.samples);
        }
    }

    /// Forward pass over `ray`; buffers stay valid for [`Self::backward`].
    pub fn forward(&mut self, model: &GearedModel<T>, ray: &Ray, settings: &MarchSettings) -> RayOutput<T> {
        self.build_samples(model, ray, settings);
        self.forward_built(model, ray, settings)
    }

    /// Forward pass over the samples already in `self.samples`.
    pub fn forward_built(&mut self, model: &GearedModel<T>, ray: &Ray, settings: &MarchSettings) -> RayOutput<T> {
        let n = self.samples.len();
        let m = model.feature_dim();
        let d = model.semantic_dim();
        let act_len = model.mlp.activation_len();
        let dir_dim = self.dir_enc.len();
        self.reserve(n, m, d, act_len);
        encode_direction_into(ray.dir, model.config().dir_freqs, &mut self.dir_enc);
        self.background = settings.background.map(T::of);

        let stop = T::of(settings.early_stop);
        let mut optical = T::zero();
        let mut evaluated = 0;
        for i in 0..n {
            let t = self.samples.t[i];
            let q = model.normalize(&SpaceTimePoint::new(ray.at(t), ray.time));
            let gear = self.samples.gear[i];
            let acts = &mut self.acts[i * act_len..(i + 1) * act_len];
            let r = i * 3 * m..(i + 1) * 3 * m;
            self.stencils[i] = model.feature_forward(
                gear,
                &q,
                &mut self.h[r.clone()],
                &mut self.k[r.clone()],
                &mut self.prod[r],
                &mut acts[..m],
            );
            acts[m..m + dir_dim].copy_from_slice(&self.dir_enc);
            model.mlp.forward_in_place(acts);
            let out = &acts[act_len - 4 - d..];
            self.sigma_raw[i] = out[0];
            self.sigma[i] = softplus(out[0]);
            self.color[i] = [sigmoid(out[1]), sigmoid(out[2]), sigmoid(out[3])];
            self.semantic[i * d..(i + 1) * d].copy_from_slice(&out[4..]);
            self.delta[i] = T::of(self.samples.delta[i]);
            evaluated = i + 1;
            optical += self.sigma[i] * self.delta[i];
            if stop > T::zero() && (-optical).exp() < stop {
                break;
            }
        }
        self.evaluated = evaluated;
        self.composite(d);
        let depth = estimate_depth(&self.samples.t[..evaluated], &self.weights, &self.transmittance, self.t_final);
        RayOutput {
            color: self.out_color,
            semantic: self.out_semantic.clone(),
            depth,
            weight_sum: self.weights.iter().copied().sum(),
            samples: evaluated,
        }
    }

    fn reserve(&mut self, n: usize, m: usize, d: usize, act_len: usize) {
        let grow = |v: &mut Vec<T>, len: usize| {
            if v.len() < len {
                v.resize(len, T::zero());
            }
        };
        grow(&mut self.h, 3 * m * n);
        grow(&mut self.k, 3 * m * n);
        grow(&mut self.prod, 3 * m * n);
        grow(&mut self.acts, act_len * n);
        grow(&mut self.sigma, n);
        grow(&mut self.sigma_raw, n);
        grow(&mut self.delta, n);
        grow(&mut self.semantic, d * n);
        grow(&mut self.e, n);
        grow(&mut self.d_sigma, n);
        if self.color.len() < n {
            self.color.resize(n, [T::zero(); 3]);
        }
        if self.stencils.len() < n {
            self.stencils.resize(n, [Stencil::default(); 6]);
        }
    }

    fn composite(&mut self, d: usize) {
        let n = self.evaluated;
        self.weights.clear();
        self.transmittance.clear();
        self.out_color = [T::zero(); 3];
        self.out_semantic.iter_mut().for_each(|v| *v = T::zero());
        let mut optical = T::zero();
        let mut trans = T::one();
        for i in 0..n {
            optical += self.sigma[i] * self.delta[i];
            let next = (-optical).exp();
            let w = trans - next;
            self.transmittance.push(trans);
            self.weights.push(w);
            for c in 0..3 {
                self.out_color[c] += w * self.color[i][c];
            }
            for (s, &v) in self.out_semantic.iter_mut().zip(&self.semantic[i * d..(i + 1) * d]) {
                *s += w * v;
            }
            trans = next;
        }
        self.t_final = trans;
        for c in 0..3 {
            self.out_color[c] += trans * self.background[c];
        }
    }

    /// Accumulates into `grad` the gradient of `⟨dc, Ĉ⟩ + ⟨ds, Ŝ⟩` with
    /// respect to every parameter used by the last forward pass.
    pub fn backward(&mut self, model: &GearedModel<T>, dc: [T; 3], ds: &[T], grad: &mut GearedModel<T>) {
        let n = self.evaluated;
        let m = model.feature_dim();
        let d = model.semantic_dim();
        let act_len = model.mlp.activation_len();
        for i in 0..n {
            let mut e = T::zero();
            for c in 0..3 {
                e += dc[c] * self.color[i][c];
            }
            for (a, &b) in ds.iter().zip(&self.semantic[i * d..(i + 1) * d]) {
                e += *a * b;
            }
            self.e[i] = e;
        }
        let e_bg = (0..3).map(|c| dc[c] * self.background[c]).sum::<T>();
        composite_sigma_grad(
            &self.delta[..n],
            &self.weights,
            &self.transmittance,
            self.t_final,
            &self.e[..n],
            e_bg,
            &mut self.d_sigma[..n],
        );
        for i in 0..n {
            let w = self.weights[i];
            // softplus' = sigmoid
            self.d_out[0] = self.d_sigma[i] * sigmoid(self.sigma_raw[i]);
            for c in 0..3 {
                let col = self.color[i][c];
                self.d_out[1 + c] = w * dc[c] * col * (T::one() - col);
            }
            for k in 0..d {
                self.d_out[4 + k] = w * ds[k];
            }
            let acts = &self.acts[i * act_len..(i + 1) * act_len];
            model
                .mlp
                .backward(acts, &self.d_out, &mut grad.mlp, &mut self.d_input, &mut self.mlp_scratch);
            let r = i * 3 * m..(i + 1) * 3 * m;
            model.feature_backward(
                self.samples.gear[i],
                &self.stencils[i],
                &self.h[r.clone()],
                &self.k[r.clone()],
                &self.prod[r],
                &self.d_input[..m],
                grad,
                &mut self.scratch.work,
            );
        }
    }
}
