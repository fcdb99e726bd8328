use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::field::{FeatureScratch, GearedModel, SpaceTimePoint};
use crate::numeric::Real;
use crate::render::{sample_uniform, Camera};
use crate::semantic::{decode_mask, FeatureMap, Mask, Prompt};

/// A sample point tagged with its gear level at collection time and the
/// pixel whose ray produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GearPoint {
    pub point: SpaceTimePoint,
    pub gear: usize,
    pub pixel: (usize, usize),
    /// Index of the mask the ray came from.
    pub source: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpshiftBatch {
    pub upshift: Vec<GearPoint>,
    pub stay: Vec<GearPoint>,
}

impl UpshiftBatch {
    pub fn is_empty(&self) -> bool {
        self.upshift.is_empty()
    }
}

/// A decoded upshift mask with the view it belongs to.
#[derive(Clone, Debug)]
pub struct ProbeMask {
    pub camera: Camera,
    pub time: f64,
    pub mask: Mask,
}

/// Decodes the ground-truth feature map with loss-map prompts. `None` when the
/// decoder returns an empty mask.
pub fn upshift_mask(truth: &FeatureMap, positives: &[(f64, f64)], negatives: &[(f64, f64)], tau: f64) -> Result<Option<Mask>> {
    let prompts: Vec<Prompt> = positives
        .iter()
        .map(|&(u, v)| Prompt::positive(u, v))
        .chain(negatives.iter().map(|&(u, v)| Prompt::negative(u, v)))
        .collect();
    let m = decode_mask(truth, &prompts, tau)?;
    Ok((!m.is_empty()).then_some(m))
}

fn ray_points<T: Real>(
    model: &GearedModel<T>,
    camera: &Camera,
    time: f64,
    pixel: (usize, usize),
    n: usize,
    source: usize,
    scratch: &mut FeatureScratch<T>,
    out: &mut Vec<GearPoint>,
) {
    let cfg = model.config();
    let Some(ray) = camera.generate_ray(pixel.0 as f64, pixel.1 as f64, time, &cfg.bounds, cfg.near, cfg.far) else {
        return;
    };
    let s = sample_uniform::<ChaCha8Rng>(&ray, n, None);
    for &t in &s.t {
        let point = SpaceTimePoint::new(ray.at(t), time);
        let gear = model.gear_level_normalized(&model.normalize(&point), scratch);
        out.push(GearPoint { point, gear, pixel, source });
    }
}

/// Upshift points from masked pixels on the `stride` lattice and stay points
/// from as many randomly chosen unmasked pixels, `n` uniform samples per ray.
pub fn collect_point_sets<T: Real>(masks: &[ProbeMask], model: &GearedModel<T>, n: usize, stride: usize, rng: &mut ChaCha8Rng) -> UpshiftBatch {
    let stride = stride.max(1);
    let mut batch = UpshiftBatch::default();
    let mut scratch = FeatureScratch::new(model.feature_dim());
    for (k, pm) in masks.iter().enumerate() {
        let m = &pm.mask;
        let mut inside = Vec::new();
        let mut outside = Vec::new();
        for y in 0..m.height {
            for x in 0..m.width {
                if m.get(x, y) {
                    if x % stride == 0 && y % stride == 0 {
                        inside.push((x, y));
                    }
                } else {
                    outside.push((x, y));
                }
            }
        }
        for &px in &inside {
            ray_points(model, &pm.camera, pm.time, px, n, k, &mut scratch, &mut batch.upshift);
        }
        let count = inside.len().min(outside.len());
        if count > 0 {
            let mut picks = sample(rng, outside.len(), count).into_vec();
            picks.sort_unstable();
            for i in picks {
                ray_points(model, &pm.camera, pm.time, outside[i], n, k, &mut scratch, &mut batch.stay);
            }
        }
    }
    batch
}

fn upshift_target(p: usize, n_gear: usize) -> f64 {
    (p + 1).min(n_gear) as f64
}

/// `(1/N_up) Σ (g − min(p+1, N))² + (λ_stay / N_stay) Σ (g − p)²`.
pub fn upshift_loss<T: Real>(model: &GearedModel<T>, batch: &UpshiftBatch, lambda_stay: f64) -> f64 {
    let n_gear = model.n_gear();
    let mut scratch = FeatureScratch::new(model.feature_dim());
    let mut g = |p: &GearPoint| model.gear_value_normalized(&model.normalize(&p.point), &mut scratch).as_f64();
    let mut loss = 0.0;
    if !batch.upshift.is_empty() {
        let s: f64 = batch.upshift.iter().map(|p| (g(p) - upshift_target(p.gear, n_gear)).powi(2)).sum();
        loss += s / batch.upshift.len() as f64;
    }
    if !batch.stay.is_empty() {
        let s: f64 = batch.stay.iter().map(|p| (g(p) - p.gear as f64).powi(2)).sum();
        loss += lambda_stay * s / batch.stay.len() as f64;
    }
    loss
}

/// Adds the gradient of [`upshift_loss`] to `grad`; only gear planes receive
/// non-zero entries.
pub fn upshift_loss_grad<T: Real>(model: &GearedModel<T>, batch: &UpshiftBatch, lambda_stay: f64, grad: &mut GearedModel<T>) {
    let n_gear = model.n_gear();
    let mut scratch = FeatureScratch::new(model.feature_dim());
    let sets = [(&batch.upshift, 1.0, true), (&batch.stay, lambda_stay, false)];
    for (set, weight, up) in sets {
        if set.is_empty() {
            continue;
        }
        let scale = 2.0 * weight / set.len() as f64;
        for p in set.iter() {
            let q = model.normalize(&p.point);
            let st = model.gear_stencils(&q);
            let g = model.gear_value_with(&st, &mut scratch).as_f64();
            let target = if up { upshift_target(p.gear, n_gear) } else { p.gear as f64 };
            model.gear_value_backward(&st, T::of(scale * (g - target)), grad, &mut scratch);
        }
    }
}

/// One plain gradient-descent step `Θ ← Θ − α ∇Θ L_upshift` on the gear
/// planes. Returns the loss before the step.
pub fn gear_update<T: Real>(model: &mut GearedModel<T>, batch: &UpshiftBatch, alpha: f64, lambda_stay: f64) -> f64 {
    let before = upshift_loss(model, batch, lambda_stay);
    let mut grad = model.zeros_like();
    upshift_loss_grad(model, batch, lambda_stay, &mut grad);
    let a = T::of(alpha);
    let grads = grad.tensors();
    for ((_, group, p), (_, _, g)) in model.tensors_mut().into_iter().zip(grads) {
        if group.is_gear() {
            for (x, d) in p.iter_mut().zip(g) {
                *x -= a * *d;
            }
        }
    }
    before
}
