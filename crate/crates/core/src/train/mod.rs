//! Alternating radiance-field / gear-assignment optimization.

mod gear;
mod loss;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gear::{collect_point_sets, gear_update, upshift_loss, upshift_loss_grad, upshift_mask, GearPoint, ProbeMask, UpshiftBatch};
pub use loss::{loss_map, patch_means, photometric_loss, semantic_loss, topk_patch_prompts, upsample, LossMap};

use crate::error::{Error, Result};
use crate::field::{FeatureScratch, GearedModel, SpaceTimePoint};
use crate::geometry::Vec3;
use crate::io::{Image, SceneDataset};
use crate::numeric::{AdamConfig, AdamState};
use crate::render::{Camera, MarchSettings, RayWorkspace};
use crate::semantic::FeatureMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Semantic loss weight λ.
    pub lambda_sem: f64,
    /// Radiance epochs between gear updates (L).
    pub epochs_per_cycle: usize,
    /// Epochs after the last gear update (L′).
    pub final_epochs: usize,
    pub topk: usize,
    pub patch_size: usize,
    pub lr: f64,
    /// Gear-update step α.
    pub gear_lr: f64,
    pub lambda_stay: f64,
    pub v_stop: f64,
    pub probe_views: usize,
    pub probe_times: usize,
    pub probe_stride: usize,
    pub mask_stride: usize,
    pub batch_rays: usize,
    /// Rays drawn per epoch; `None` visits every training ray once.
    pub rays_per_epoch: Option<usize>,
    pub max_cycles: usize,
    /// Fixed number of gradient partitions per batch. Reduction happens in
    /// partition order, so results do not depend on the worker count.
    pub grad_chunks: usize,
    pub tau_sim: f64,
    pub early_stop: f64,
    pub jitter: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_sem: 0.01,
            epochs_per_cycle: 3,
            final_epochs: 10,
            topk: 3,
            patch_size: 16,
            lr: 0.02,
            gear_lr: 0.02,
            lambda_stay: 1.0,
            v_stop: 2e-4,
            probe_views: 4,
            probe_times: 4,
            probe_stride: 2,
            mask_stride: 4,
            batch_rays: 1024,
            rays_per_epoch: None,
            max_cycles: 50,
            grad_chunks: 8,
            tau_sim: 0.85,
            early_stop: 1e-4,
            jitter: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("topk", self.topk),
            ("patch_size", self.patch_size),
            ("probe_views", self.probe_views),
            ("probe_times", self.probe_times),
            ("probe_stride", self.probe_stride),
            ("mask_stride", self.mask_stride),
            ("batch_rays", self.batch_rays),
            ("max_cycles", self.max_cycles),
            ("grad_chunks", self.grad_chunks),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.rays_per_epoch == Some(0) {
            return Err(Error::Config("rays_per_epoch must be positive".into()));
        }
        let reals = [
            ("lambda_sem", self.lambda_sem),
            ("lr", self.lr),
            ("gear_lr", self.gear_lr),
            ("lambda_stay", self.lambda_stay),
            ("v_stop", self.v_stop),
            ("tau_sim", self.tau_sim),
        ];
        for (name, v) in reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    /// `epoch`, `cycle` or `final`.
    pub kind: String,
    pub cycle: usize,
    pub epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psnr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    /// Fraction of volume probes at each gear level, starting at gear 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gear_histogram: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upshift_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upshift_loss: Option<f64>,
}

impl LogRecord {
    fn new(kind: &str, cycle: usize, epoch: usize) -> Self {
        Self {
            kind: kind.into(),
            cycle,
            epoch,
            loss: None,
            psnr: None,
            variance: None,
            gear_histogram: None,
            upshift_points: None,
            upshift_loss: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Variance,
    MaxCycles,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: GearedModel<f32>,
    pub log: Vec<LogRecord>,
    pub cycles: usize,
    pub gear_updates: usize,
    pub termination: Termination,
    pub rng: ChaCha8Rng,
}

pub fn write_log(path: &Path, log: &[LogRecord]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in log {
        let line = serde_json::to_string(r)?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

struct Frame {
    view: usize,
    time: usize,
    camera: Camera,
    rgb: Image,
    features: FeatureMap,
}

/// Ground truth for the training views, held in memory.
pub struct TrainingData {
    frames: Vec<Frame>,
    offsets: Vec<usize>,
}

impl TrainingData {
    pub fn load(scene: &SceneDataset) -> Result<Self> {
        let mut frames = Vec::new();
        for view in scene.train_views() {
            for time in 0..scene.frame_count() {
                if !scene.has_frame(view, time) {
                    continue;
                }
                frames.push(Frame {
                    view,
                    time,
                    camera: scene.camera(view).clone(),
                    rgb: scene.rgb(view, time)?,
                    features: scene.features(view, time)?,
                });
            }
        }
        let mut offsets = vec![0];
        for f in &frames {
            offsets.push(offsets.last().unwrap() + f.camera.width * f.camera.height);
        }
        Ok(Self { frames, offsets })
    }

    pub fn ray_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn locate(&self, ray: usize) -> (&Frame, usize, usize) {
        let f = self.offsets.partition_point(|&o| o <= ray) - 1;
        let frame = &self.frames[f];
        let p = ray - self.offsets[f];
        (frame, p % frame.camera.width, p / frame.camera.width)
    }

    fn frame(&self, view: usize, time: usize) -> Option<&Frame> {
        self.frames.iter().find(|f| f.view == view && f.time == time)
    }
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Evenly spaced picks of `count` items from `0..n`.
pub fn evenly_spaced(n: usize, count: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let count = count.min(n);
    if count == 1 {
        return vec![0];
    }
    (0..count).map(|i| ((i * (n - 1)) as f64 / (count - 1) as f64).round() as usize).collect()
}

/// Fraction of a fixed space-time lattice at each gear level.
pub fn gear_histogram(model: &GearedModel<f32>) -> Vec<f64> {
    let cfg = model.config();
    let n = 16;
    let times = evenly_spaced(cfg.frame_count, 6);
    let mut counts = vec![0usize; cfg.n_gear];
    let mut scratch = FeatureScratch::new(model.feature_dim());
    let (lo, ext) = (cfg.bounds.min, cfg.bounds.extent());
    for &t in &times {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let f = |a: usize| (a as f64 + 0.5) / n as f64;
                    let p = lo + Vec3::new(f(i) * ext.x(), f(j) * ext.y(), f(k) * ext.z());
                    let q = model.normalize(&SpaceTimePoint::new(p, t as f64));
                    counts[model.gear_level_normalized(&q, &mut scratch) - 1] += 1;
                }
            }
        }
    }
    let total: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

pub struct Trainer<'a> {
    pub config: TrainConfig,
    pub model: GearedModel<f32>,
    scene: &'a SceneDataset,
    data: TrainingData,
    adam: AdamState<f32>,
    rng: ChaCha8Rng,
    grads: Vec<GearedModel<f32>>,
    log: Vec<LogRecord>,
    epoch: usize,
    cycle: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(model: GearedModel<f32>, scene: &'a SceneDataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if scene.train_views().len() < 2 {
            return Err(Error::Contract("training needs at least two views".into()));
        }
        if model.semantic_dim() != scene.semantic_dim() {
            return Err(Error::DimMismatch(format!(
                "model semantic_dim {} vs scene {}",
                model.semantic_dim(),
                scene.semantic_dim()
            )));
        }
        if model.config().frame_count != scene.frame_count() {
            return Err(Error::DimMismatch(format!(
                "model frame_count {} vs scene {}",
                model.config().frame_count,
                scene.frame_count()
            )));
        }
        let data = TrainingData::load(scene)?;
        let shapes: Vec<usize> = model.tensors().iter().filter(|t| !t.1.is_gear()).map(|t| t.2.len()).collect();
        let grads = (0..config.grad_chunks).map(|_| model.zeros_like()).collect();
        Ok(Self {
            adam: AdamState::new(&shapes, AdamConfig::default()),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            scene,
            data,
            grads,
            model,
            config,
            log: Vec::new(),
            epoch: 0,
            cycle: 0,
        })
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    fn settings(&self, jitter_key: Option<u64>) -> MarchSettings {
        MarchSettings {
            samples_per_ray: self.model.config().samples_per_ray,
            jitter_seed: jitter_key,
            early_stop: self.config.early_stop,
            background: [0.0; 3],
        }
    }

    /// One pass of Adam over shuffled ray batches. Returns mean batch loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let total = self.data.ray_count();
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut self.rng);
        order.truncate(self.config.rays_per_epoch.unwrap_or(total).min(total));
        let mut sum = 0.0;
        let mut batches = 0;
        for batch in order.chunks(self.config.batch_rays) {
            let loss = self.step(batch)?;
            sum += loss;
            batches += 1;
        }
        self.epoch += 1;
        let mean = sum / batches.max(1) as f64;
        let mut rec = LogRecord::new("epoch", self.cycle, self.epoch);
        rec.loss = Some(mean);
        self.log.push(rec);
        log::info!("cycle {} epoch {}: loss {mean:.6}", self.cycle, self.epoch);
        Ok(mean)
    }

    fn step(&mut self, batch: &[usize]) -> Result<f64> {
        let b = batch.len() as f64;
        let lambda = self.config.lambda_sem;
        let d = self.model.semantic_dim();
        let per = batch.len().div_ceil(self.config.grad_chunks);
        let epoch = self.epoch as u64;
        let seed = self.config.seed;
        let jitter = self.config.jitter;
        let base = self.settings(None);
        let model = &self.model;
        let data = &self.data;
        let parts: Vec<f64> = self
            .grads
            .par_iter_mut()
            .enumerate()
            .map(|(c, grad)| {
                grad.fill_zero();
                let mut ws = RayWorkspace::new(model);
                let mut loss = 0.0;
                let (lo, hi) = ((c * per).min(batch.len()), ((c + 1) * per).min(batch.len()));
                let cfg = model.config();
                let mut ds = vec![0.0f32; d];
                for &r in &batch[lo..hi] {
                    let (frame, x, y) = data.locate(r);
                    let time = frame.time as f64;
                    let Some(ray) = frame.camera.generate_ray(x as f64, y as f64, time, &cfg.bounds, cfg.near, cfg.far) else {
                        // misses the scene box: prediction is the background
                        let c = frame.rgb.get(x, y);
                        let f = frame.features.pixel(x, y);
                        loss += c.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() + lambda * f.iter().map(|v| (*v as f64).powi(2)).sum::<f64>();
                        continue;
                    };
                    let settings = MarchSettings {
                        jitter_seed: jitter.then(|| mix(mix(seed, epoch), r as u64)),
                        ..base
                    };
                    let out = ws.forward(model, &ray, &settings);
                    let truth = frame.rgb.get(x, y);
                    let tf = frame.features.pixel(x, y);
                    let mut dc = [0.0f32; 3];
                    for k in 0..3 {
                        let e = out.color[k] - truth[k];
                        loss += (e as f64).powi(2);
                        dc[k] = 2.0 * e / b as f32;
                    }
                    for k in 0..d {
                        let e = out.semantic[k] - tf[k];
                        loss += lambda * (e as f64).powi(2);
                        ds[k] = (2.0 * lambda / b) as f32 * e;
                    }
                    ws.backward(model, dc, &ds, grad);
                }
                loss
            })
            .collect();
        let loss = parts.iter().sum::<f64>() / b;
        let (head, rest) = self.grads.split_at_mut(1);
        for g in rest.iter() {
            head[0].add_assign(g);
        }
        if !loss.is_finite() {
            let group = head[0].first_non_finite().or(self.model.first_non_finite());
            return Err(self.abort(group.map_or("loss".to_string(), |g| g.name().to_string())));
        }
        let grads: Vec<&[f32]> = head[0].tensors().into_iter().filter(|t| !t.1.is_gear()).map(|t| t.2).collect();
        let mut params: Vec<&mut [f32]> = self.model.tensors_mut().into_iter().filter(|t| !t.1.is_gear()).map(|t| t.2).collect();
        self.adam.update(&mut params, &grads, self.config.lr)?;
        if let Some(g) = self.model.first_non_finite() {
            return Err(self.abort(g.name().to_string()));
        }
        Ok(loss)
    }

    fn abort(&self, group: String) -> Error {
        Error::NumericalAbort {
            group,
            cycle: self.cycle,
            epoch: self.epoch,
        }
    }

    fn probes(&self) -> Vec<(usize, usize)> {
        let views = self.scene.train_views();
        let vs: Vec<usize> = evenly_spaced(views.len(), self.config.probe_views)
            .into_iter()
            .map(|i| views[i])
            .collect();
        let ts = evenly_spaced(self.scene.frame_count(), self.config.probe_times);
        vs.iter()
            .flat_map(|&v| ts.iter().map(move |&t| (v, t)))
            .filter(|&(v, t)| self.data.frame(v, t).is_some())
            .collect()
    }

    /// Loss maps over the probe set.
    pub fn probe_loss_maps(&self) -> Vec<(usize, usize, LossMap)> {
        let settings = self.settings(None);
        self.probes()
            .into_iter()
            .map(|(v, t)| {
                let f = self.data.frame(v, t).expect("probe frames exist");
                let map = loss_map(
                    &self.model,
                    &f.camera,
                    t as f64,
                    &f.rgb,
                    &f.features,
                    self.config.lambda_sem,
                    self.config.probe_stride,
                    &settings,
                );
                (v, t, map)
            })
            .collect()
    }

    /// Renders probes and, unless their mean variance is below `v_stop`,
    /// applies one gear update. Returns true when the loop should stop.
    pub fn gear_cycle(&mut self) -> Result<bool> {
        let maps = self.probe_loss_maps();
        let variance = maps.iter().map(|m| m.2.variance()).sum::<f64>() / maps.len() as f64;
        let psnr = maps.iter().map(|m| -10.0 * m.2.mse.log10()).sum::<f64>() / maps.len() as f64;
        let mut rec = LogRecord::new("cycle", self.cycle, self.epoch);
        rec.variance = Some(variance);
        rec.psnr = Some(psnr);
        if variance < self.config.v_stop {
            rec.gear_histogram = Some(gear_histogram(&self.model));
            rec.upshift_points = Some(0);
            log::info!("cycle {}: variance {variance:.3e} below {:.3e}, stopping", self.cycle, self.config.v_stop);
            self.log.push(rec);
            return Ok(true);
        }
        let mut masks = Vec::new();
        for (v, t, map) in &maps {
            let f = self.data.frame(*v, *t).expect("probe frames exist");
            if map.width < self.config.patch_size || map.height < self.config.patch_size {
                continue;
            }
            let (pos, neg) = topk_patch_prompts(&map.values, map.width, map.height, self.config.patch_size, self.config.topk);
            if pos.is_empty() {
                continue;
            }
            if let Some(mask) = upshift_mask(&f.features, &pos, &neg, self.config.tau_sim)? {
                log::debug!("probe view {v} time {t}: mask of {} px from positives {pos:?}", mask.count());
                masks.push(ProbeMask {
                    camera: f.camera.clone(),
                    time: *t as f64,
                    mask,
                });
            }
        }
        let batch = collect_point_sets(
            &masks,
            &self.model,
            self.model.config().samples_per_ray,
            self.config.mask_stride,
            &mut self.rng,
        );
        rec.upshift_points = Some(batch.upshift.len());
        if !batch.is_empty() {
            rec.upshift_loss = Some(gear_update(&mut self.model, &batch, self.config.gear_lr, self.config.lambda_stay));
            if let Some(g) = self.model.first_non_finite() {
                return Err(self.abort(g.name().to_string()));
            }
        }
        let hist = gear_histogram(&self.model);
        log::info!(
            "cycle {}: variance {variance:.3e}, psnr {psnr:.2}, {} masks, {} upshift points, gears {:?}",
            self.cycle,
            masks.len(),
            batch.upshift.len(),
            hist
        );
        rec.gear_histogram = Some(hist);
        self.log.push(rec);
        Ok(false)
    }

    /// The full schedule: cycles of L epochs plus a gear update until the
    /// variance test passes or `max_cycles` is hit, then L′ final epochs.
    pub fn train(mut self) -> Result<TrainOutcome> {
        let mut termination = Termination::MaxCycles;
        let mut updates = 0;
        while self.cycle < self.config.max_cycles {
            self.cycle += 1;
            for _ in 0..self.config.epochs_per_cycle {
                self.run_epoch()?;
            }
            let before = self.log.len();
            if self.gear_cycle()? {
                termination = Termination::Variance;
                break;
            }
            if self.log[before..].iter().any(|r| r.upshift_points.unwrap_or(0) > 0) {
                updates += 1;
            }
        }
        for _ in 0..self.config.final_epochs {
            self.run_epoch()?;
        }
        let mut rec = LogRecord::new("final", self.cycle, self.epoch);
        rec.gear_histogram = Some(gear_histogram(&self.model));
        self.log.push(rec);
        Ok(TrainOutcome {
            model: self.model,
            log: self.log,
            cycles: self.cycle,
            gear_updates: updates,
            termination,
            rng: self.rng,
        })
    }
}
