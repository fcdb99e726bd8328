//! Click-prompted free-viewpoint tracking over a frozen model.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GearedModel;
use crate::geometry::Vec3;
use crate::numeric::Real;
use crate::render::{render_layers, Camera, LayerSet, MarchSettings, RayWorkspace};
use crate::semantic::{decode_mask, FeatureMap, Mask, Prompt};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskStatus {
    Ok,
    Empty,
    NoSurface,
}

/// A cached mask. `halted_at` names the frame whose decode came back empty
/// when a time chain stopped early.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackEntry {
    pub mask: Mask,
    pub status: MaskStatus,
    pub halted_at: Option<usize>,
}

/// Work counters; cached queries leave `renders` and `decodes` unchanged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackCounters {
    pub renders: u64,
    pub decodes: u64,
    pub cache_hits: u64,
}

/// Surface point hit by the ray through `pixel`, or `None` when the ray finds
/// no surface.
pub fn click_to_point<T: Real>(model: &GearedModel<T>, camera: &Camera, time: f64, pixel: (usize, usize), settings: &MarchSettings) -> Option<Vec3> {
    let cfg = model.config();
    let ray = camera.generate_ray(pixel.0 as f64, pixel.1 as f64, time, &cfg.bounds, cfg.near, cfg.far)?;
    let mut ws = RayWorkspace::new(model);
    let depth = ws.forward(model, &ray, settings).depth?;
    Some(ray.at(depth))
}

/// Integer pixel containing the projection of `point`, or `None` when it is
/// behind the camera or outside the image.
pub fn project_to_pixel(camera: &Camera, point: Vec3) -> Option<(usize, usize)> {
    let xy = camera.project_point(point)?;
    camera.contains_pixel(xy).then(|| (xy[0].floor() as usize, xy[1].floor() as usize))
}

/// One click and every mask derived from it.
#[derive(Clone, Debug)]
pub struct TrackSession {
    pub id: u64,
    pub source_camera: Camera,
    pub source_time: usize,
    pub source_pixel: (usize, usize),
    pub anchor: Option<Vec3>,
    pub tau: f64,
    cache: HashMap<(u64, usize), TrackEntry>,
    cameras: HashMap<u64, Camera>,
    pub counters: TrackCounters,
}

impl TrackSession {
    /// Lifts the click to a 3D anchor and decodes the source-view mask.
    pub fn click<T: Real>(
        id: u64,
        model: &GearedModel<T>,
        camera: &Camera,
        time: usize,
        pixel: (usize, usize),
        tau: f64,
        settings: &MarchSettings,
    ) -> Result<Self> {
        if pixel.0 >= camera.width || pixel.1 >= camera.height {
            return Err(Error::Contract(format!("pixel {pixel:?} outside {}x{}", camera.width, camera.height)));
        }
        if time >= model.config().frame_count {
            return Err(Error::Contract(format!("time {time} outside 0..{}", model.config().frame_count)));
        }
        let mut s = Self {
            id,
            source_camera: camera.clone(),
            source_time: time,
            source_pixel: pixel,
            anchor: click_to_point(model, camera, time as f64, pixel, settings),
            tau,
            cache: HashMap::new(),
            cameras: HashMap::new(),
            counters: TrackCounters::default(),
        };
        s.mask_at_view(model, camera, settings)?;
        Ok(s)
    }

    pub fn source_entry(&self) -> &TrackEntry {
        &self.cache[&(self.source_camera.pose_key(), self.source_time)]
    }

    pub fn cached(&self, camera: &Camera, time: usize) -> Option<&TrackEntry> {
        self.cache.get(&(camera.pose_key(), time))
    }

    fn insert(&mut self, camera: &Camera, time: usize, entry: TrackEntry) -> TrackEntry {
        let key = camera.pose_key();
        self.cameras.entry(key).or_insert_with(|| camera.clone());
        self.cache.entry((key, time)).or_insert(entry).clone()
    }

    fn render_features<T: Real>(
        &mut self,
        model: &GearedModel<T>,
        camera: &Camera,
        time: usize,
        settings: &MarchSettings,
    ) -> Result<(FeatureMap, Vec<Option<f32>>)> {
        self.counters.renders += 1;
        let layers = LayerSet {
            semantic: true,
            depth: true,
            ..LayerSet::default()
        };
        let r = render_layers(model, camera, time as f64, layers, 1, settings);
        let f = FeatureMap::new(r.width, r.height, r.semantic_dim, r.semantic.expect("semantic layer requested"))?;
        Ok((f, r.depth.expect("depth layer requested")))
    }

    /// Mask of the anchored object in `camera` at the source time.
    pub fn mask_at_view<T: Real>(&mut self, model: &GearedModel<T>, camera: &Camera, settings: &MarchSettings) -> Result<TrackEntry> {
        let t = self.source_time;
        if let Some(e) = self.cached(camera, t) {
            let e = e.clone();
            self.counters.cache_hits += 1;
            return Ok(e);
        }
        let empty = |status| TrackEntry {
            mask: Mask::empty(camera.width, camera.height),
            status,
            halted_at: None,
        };
        let Some(anchor) = self.anchor else {
            return Ok(self.insert(camera, t, empty(MaskStatus::NoSurface)));
        };
        let Some(px) = project_to_pixel(camera, anchor) else {
            return Ok(self.insert(camera, t, empty(MaskStatus::Empty)));
        };
        let (features, depth) = self.render_features(model, camera, t, settings)?;
        if occluded(model, camera, t, px, anchor, depth[px.1 * camera.width + px.0], settings) {
            return Ok(self.insert(camera, t, empty(MaskStatus::Empty)));
        }
        self.counters.decodes += 1;
        let prompt = Prompt::positive(px.0 as f64 + 0.5, px.1 as f64 + 0.5);
        let mask = decode_mask(&features, &[prompt], self.tau)?;
        let status = if mask.is_empty() { MaskStatus::Empty } else { MaskStatus::Ok };
        Ok(self.insert(
            camera,
            t,
            TrackEntry {
                mask,
                status,
                halted_at: None,
            },
        ))
    }

    /// Carries the mask in `camera` from the nearest cached time to `target`
    /// one frame at a time with box prompts.
    pub fn propagate_time<T: Real>(
        &mut self,
        model: &GearedModel<T>,
        camera: &Camera,
        target: usize,
        settings: &MarchSettings,
    ) -> Result<TrackEntry> {
        if target >= model.config().frame_count {
            return Err(Error::Contract(format!("time {target} outside 0..{}", model.config().frame_count)));
        }
        if let Some(e) = self.cached(camera, target) {
            let e = e.clone();
            self.counters.cache_hits += 1;
            return Ok(e);
        }
        let start = match self.cached(camera, self.source_time) {
            Some(e) => e.clone(),
            None => self.mask_at_view(model, camera, settings)?,
        };
        let key = camera.pose_key();
        let from = self
            .cache
            .keys()
            .filter(|(k, _)| *k == key)
            .map(|&(_, t)| t)
            .min_by_key(|&t| (t.abs_diff(target), t))
            .unwrap_or(self.source_time);
        let mut current = self.cached(camera, from).cloned().unwrap_or(start);
        if current.status != MaskStatus::Ok {
            return Ok(TrackEntry {
                halted_at: current.halted_at.or(Some(from)),
                ..current
            });
        }
        let mut t = from;
        while t != target {
            t = if target > t { t + 1 } else { t - 1 };
            let (x0, y0, x1, y1) = current.mask.bbox().expect("ok masks are non-empty");
            let (features, _) = self.render_features(model, camera, t, settings)?;
            self.counters.decodes += 1;
            let prompt = Prompt::Box {
                u0: x0 as f64,
                v0: y0 as f64,
                u1: x1 as f64 + 1.0,
                v1: y1 as f64 + 1.0,
            };
            let mask = decode_mask(&features, &[prompt], self.tau)?;
            if mask.is_empty() {
                let entry = TrackEntry {
                    mask,
                    status: MaskStatus::Empty,
                    halted_at: Some(t),
                };
                self.insert(camera, t, entry.clone());
                return Ok(entry);
            }
            current = self.insert(
                camera,
                t,
                TrackEntry {
                    mask,
                    status: MaskStatus::Ok,
                    halted_at: None,
                },
            );
        }
        Ok(current)
    }

    /// Any view and time: reproject at the source time, then walk in time.
    pub fn query<T: Real>(&mut self, model: &GearedModel<T>, camera: &Camera, time: usize, settings: &MarchSettings) -> Result<TrackEntry> {
        self.propagate_time(model, camera, time, settings)
    }
}

/// True when the rendered surface at `px` lies in front of the anchor by more
/// than two mean sample spacings.
fn occluded<T: Real>(
    model: &GearedModel<T>,
    camera: &Camera,
    time: usize,
    px: (usize, usize),
    anchor: Vec3,
    depth: Option<f32>,
    settings: &MarchSettings,
) -> bool {
    let cfg = model.config();
    let (Some(d), Some(ray)) = (
        depth,
        camera.generate_ray(px.0 as f64, px.1 as f64, time as f64, &cfg.bounds, cfg.near, cfg.far),
    ) else {
        return false;
    };
    let spacing = (ray.t_far - ray.t_near) / settings.samples_per_ray.max(1) as f64;
    (d as f64) < (anchor - camera.center()).norm() - 2.0 * spacing
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat3;

    #[test]
    fn pinhole_projection() {
        let cam = Camera::new(100.0, 100.0, 32.0, 32.0, 64, 64, Mat3::IDENTITY, Vec3::ZERO).unwrap();
        assert_eq!(cam.project_point(Vec3::new(0.2, 0.0, 1.0)), Some([52.0, 32.0]));
        assert_eq!(cam.project_point(Vec3::new(0.0, 0.0, 3.0)), Some([32.0, 32.0]));
        assert_eq!(cam.project_point(Vec3::new(0.0, 0.0, -1.0)), None);
        assert_eq!(project_to_pixel(&cam, Vec3::new(5.0, 0.0, 1.0)), None);
    }
}
