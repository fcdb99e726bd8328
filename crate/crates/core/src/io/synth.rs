use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::render::Camera;

pub const ID_BACKGROUND: u8 = 0;
pub const ID_FLOOR: u8 = 1;
pub const ID_SPHERE: u8 = 2;
pub const ID_BOX: u8 = 3;
pub const OBJECT_COUNT: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetKind {
    OrbitingSphere,
    StaticBox,
    TwoObjects,
}

impl FromStr for PresetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orbiting-sphere" => Ok(PresetKind::OrbitingSphere),
            "static-box" => Ok(PresetKind::StaticBox),
            "two-objects" => Ok(PresetKind::TwoObjects),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (orbiting-sphere, static-box, two-objects)"
            ))),
        }
    }
}

impl fmt::Display for PresetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PresetKind::OrbitingSphere => "orbiting-sphere",
            PresetKind::StaticBox => "static-box",
            PresetKind::TwoObjects => "two-objects",
        })
    }
}

/// A sphere moving on a horizontal circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub radius: f64,
    pub orbit_center: Vec3,
    pub orbit_radius: f64,
    /// Frames per revolution.
    pub period: f64,
    pub phase: f64,
}

impl OrbitSpec {
    pub fn center(&self, time: f64) -> Vec3 {
        let a = self.phase + 2.0 * PI * time / self.period;
        self.orbit_center + Vec3::new(self.orbit_radius * a.cos(), 0.0, self.orbit_radius * a.sin())
    }
}

/// Full description of a generated scene: geometry, lighting, camera rig.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthPreset {
    pub kind: PresetKind,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub fov_x_deg: f64,
    pub ring_count: usize,
    pub ring_radius: f64,
    pub elevation_deg: f64,
    pub look_at: Vec3,
    /// Azimuth of the holdout camera relative to the first ring camera.
    pub holdout_azimuth_deg: f64,
    pub floor: Aabb,
    pub checker: f64,
    pub sphere: Option<OrbitSpec>,
    pub cube: Option<Aabb>,
    pub light_dir: Vec3,
    pub ambient: f64,
    /// Box the radiance field is fitted in.
    pub bounds: Aabb,
    pub semantic_dim: usize,
    pub seed: u64,
}

impl SynthPreset {
    pub fn new(kind: PresetKind) -> Self {
        let sphere = OrbitSpec {
            radius: 0.28,
            orbit_center: Vec3::new(0.0, -0.3, 0.0),
            orbit_radius: 0.45,
            period: 32.0,
            phase: 0.0,
        };
        let (sphere, cube) = match kind {
            PresetKind::OrbitingSphere => (Some(sphere), None),
            PresetKind::StaticBox => (None, Some(Aabb::new(Vec3::new(-0.25, -0.6, -0.25), Vec3::new(0.25, -0.1, 0.25)))),
            PresetKind::TwoObjects => (Some(sphere), Some(Aabb::new(Vec3::new(-0.1, -0.6, -0.1), Vec3::new(0.1, -0.4, 0.1)))),
        };
        Self {
            kind,
            frames: 24,
            width: 64,
            height: 64,
            fov_x_deg: 50.0,
            ring_count: 8,
            ring_radius: 2.4,
            elevation_deg: 30.0,
            look_at: Vec3::new(0.0, -0.45, 0.0),
            holdout_azimuth_deg: 22.5,
            floor: Aabb::new(Vec3::new(-1.0, -0.7, -1.0), Vec3::new(1.0, -0.6, 1.0)),
            checker: 0.25,
            sphere,
            cube,
            light_dir: Vec3::new(0.4, 1.0, 0.3).normalized(),
            ambient: 0.3,
            bounds: Aabb::new(Vec3::new(-1.05, -0.75, -1.05), Vec3::new(1.05, 0.15, 1.05)),
            semantic_dim: 16,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.width == 0 || self.height == 0 || self.ring_count == 0 {
            return Err(Error::Config("preset needs frames, image size and cameras".into()));
        }
        if let Some(s) = &self.sphere {
            for t in 0..self.frames {
                let c = s.center(t as f64);
                let r = Vec3::new(s.radius, s.radius, s.radius);
                if !self.bounds.contains(c - r) || !self.bounds.contains(c + r) {
                    return Err(Error::Config(format!("sphere leaves the scene box at frame {t}")));
                }
            }
        }
        Ok(())
    }

    /// Ring camera looking at `look_at` from the given azimuth and elevation.
    pub fn camera_at(&self, azimuth_deg: f64, elevation_deg: f64) -> Camera {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let eye = self.look_at + Vec3::new(el.cos() * az.cos(), el.sin(), el.cos() * az.sin()) * self.ring_radius;
        Camera::look_at(
            eye,
            self.look_at,
            Vec3::new(0.0, 1.0, 0.0),
            self.fov_x_deg.to_radians(),
            self.width,
            self.height,
        )
        .expect("ring cameras are never vertical")
    }

    /// Training ring followed by the holdout camera: `(id, camera, holdout)`.
    pub fn cameras(&self) -> Vec<(String, Camera, bool)> {
        let mut out: Vec<_> = (0..self.ring_count)
            .map(|k| {
                let az = 360.0 * k as f64 / self.ring_count as f64;
                (format!("cam{k:02}"), self.camera_at(az, self.elevation_deg), false)
            })
            .collect();
        out.push(("holdout".to_string(), self.camera_at(self.holdout_azimuth_deg, self.elevation_deg), true));
        out
    }

    /// Moving object's center and bounding radius at `time`.
    pub fn dynamic_region(&self, time: f64) -> Option<(Vec3, f64)> {
        self.sphere.map(|s| (s.center(time), s.radius))
    }

    pub fn is_static(&self) -> bool {
        self.sphere.is_none()
    }
}

/// Nearest surface hit along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub normal: Vec3,
    pub id: u8,
    pub point: Vec3,
}

pub fn ray_sphere(origin: Vec3, dir: Vec3, center: Vec3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.dot(oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    // the smaller root, computed without cancellation
    let q = -b - s;
    if q > 1e-12 {
        Some(q)
    } else if -b + s > 1e-12 {
        Some(-b + s)
    } else {
        None
    }
}

/// Entry distance and outward normal of the face hit first.
pub fn ray_box(origin: Vec3, dir: Vec3, b: &Aabb) -> Option<(f64, Vec3)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    let mut axis = 0;
    let mut sign = 1.0;
    for i in 0..3 {
        if dir[i].abs() < 1e-300 {
            if origin[i] < b.min[i] || origin[i] > b.max[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[i];
        let (mut a, mut c) = ((b.min[i] - origin[i]) * inv, (b.max[i] - origin[i]) * inv);
        let mut s = -1.0;
        if a > c {
            std::mem::swap(&mut a, &mut c);
            s = 1.0;
        }
        if a > t0 {
            t0 = a;
            axis = i;
            sign = s;
        }
        t1 = t1.min(c);
    }
    if t1 < t0 || t0 <= 1e-12 {
        return None;
    }
    let mut n = [0.0; 3];
    n[axis] = sign;
    Some((t0, Vec3(n)))
}

impl SynthPreset {
    pub fn trace(&self, origin: Vec3, dir: Vec3, time: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut consider = |t: f64, normal: Vec3, id: u8| {
            if best.map_or(true, |b| t < b.t) {
                best = Some(Hit {
                    t,
                    normal,
                    id,
                    point: origin + dir * t,
                });
            }
        };
        if let Some((t, n)) = ray_box(origin, dir, &self.floor) {
            consider(t, n, ID_FLOOR);
        }
        if let Some(cube) = &self.cube {
            if let Some((t, n)) = ray_box(origin, dir, cube) {
                consider(t, n, ID_BOX);
            }
        }
        if let Some(s) = &self.sphere {
            let c = s.center(time);
            if let Some(t) = ray_sphere(origin, dir, c, s.radius) {
                consider(t, (origin + dir * t - c).normalized(), ID_SPHERE);
            }
        }
        best
    }

    fn albedo(&self, hit: &Hit, time: f64) -> [f64; 3] {
        match hit.id {
            ID_FLOOR => {
                let k = (hit.point.x() / self.checker).floor() + (hit.point.z() / self.checker).floor();
                if k.rem_euclid(2.0) < 0.5 {
                    [0.82, 0.8, 0.74]
                } else {
                    [0.28, 0.34, 0.46]
                }
            }
            ID_SPHERE => {
                let s = self.sphere.expect("sphere hit implies a sphere");
                let n = (hit.point - s.center(time)) / s.radius;
                let lat = n.y().clamp(-1.0, 1.0).asin();
                let lon = n.z().atan2(n.x());
                let k = ((lat + PI / 2.0) / (PI / 6.0)).floor() + ((lon + PI) / (PI / 4.0)).floor();
                if k.rem_euclid(2.0) < 0.5 {
                    [0.92, 0.36, 0.2]
                } else {
                    [0.96, 0.86, 0.32]
                }
            }
            ID_BOX => [0.24, 0.56, 0.9],
            _ => [0.0; 3],
        }
    }

    fn shade(&self, hit: &Hit, time: f64) -> [f32; 3] {
        let lambert = hit.normal.dot(self.light_dir).max(0.0);
        let k = self.ambient + (1.0 - self.ambient) * lambert;
        self.albedo(hit, time).map(|a| (a * k) as f32)
    }
}

/// Ground truth for one camera and time.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleFrame {
    pub rgb: Image,
    /// Distance along the unit ray; `f64::INFINITY` where nothing is hit.
    pub depth: Vec<f64>,
    pub ids: Vec<u8>,
}

impl OracleFrame {
    pub fn object_mask(&self, id: u8) -> Vec<bool> {
        self.ids.iter().map(|&i| i == id).collect()
    }
}

/// Closed-form ray tracing of the preset geometry through each pixel center.
pub fn oracle_render(preset: &SynthPreset, camera: &Camera, time: f64) -> OracleFrame {
    let (w, h) = (camera.width, camera.height);
    let mut pixels = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    let mut ids = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let dir = camera.pixel_direction(u as f64, v as f64);
            match preset.trace(camera.center(), dir, time) {
                Some(hit) => {
                    pixels.push(preset.shade(&hit, time));
                    depth.push(hit.t);
                    ids.push(hit.id);
                }
                None => {
                    pixels.push([0.0; 3]);
                    depth.push(f64::INFINITY);
                    ids.push(ID_BACKGROUND);
                }
            }
        }
    }
    OracleFrame {
        rgb: Image { width: w, height: h, pixels },
        depth,
        ids,
    }
}

/// One unit vector per object id. When `dim >= count` the vectors are
/// orthonormal (Gram-Schmidt on seeded Gaussian draws).
pub fn object_prototypes(seed: u64, dim: usize, count: usize) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_fea7);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if basis.len() < dim {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-6 {
            continue;
        }
        basis.push(v.into_iter().map(|x| x / n).collect());
    }
    basis.into_iter().map(|v| v.into_iter().map(|x| x as f32).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_center_depth() {
        let p = SynthPreset::new(PresetKind::OrbitingSphere);
        let s = p.sphere.unwrap();
        let c = s.center(3.0);
        let origin = Vec3::new(0.5, 1.5, 2.0);
        let dir = (c - origin).normalized();
        let hit = p.trace(origin, dir, 3.0).unwrap();
        assert_eq!(hit.id, ID_SPHERE);
        assert!((hit.t - ((c - origin).norm() - s.radius)).abs() < 1e-12);
    }

    #[test]
    fn trajectory_is_circular() {
        let s = SynthPreset::new(PresetKind::OrbitingSphere).sphere.unwrap();
        for t in 0..24 {
            let c = s.center(t as f64);
            let r = ((c.x() - 0.0).powi(2) + c.z().powi(2)).sqrt();
            assert!((r - 0.45).abs() < 1e-12 && c.y() == -0.3);
        }
        assert!((s.center(32.0) - s.center(0.0)).norm() < 1e-12);
    }

    #[test]
    fn depth_lies_on_surfaces() {
        for kind in [PresetKind::OrbitingSphere, PresetKind::StaticBox, PresetKind::TwoObjects] {
            let p = SynthPreset::new(kind);
            p.validate().unwrap();
            let cam = p.cameras()[1].1.strided(4);
            let f = oracle_render(&p, &cam, 5.0);
            for v in 0..cam.height {
                for u in 0..cam.width {
                    let i = v * cam.width + u;
                    if f.ids[i] == ID_BACKGROUND {
                        assert!(f.depth[i].is_infinite());
                        continue;
                    }
                    let x = cam.center() + cam.pixel_direction(u as f64, v as f64) * f.depth[i];
                    let residual = match f.ids[i] {
                        ID_SPHERE => {
                            let s = p.sphere.unwrap();
                            (x - s.center(5.0)).norm() - s.radius
                        }
                        ID_FLOOR => box_sdf(&p.floor, x),
                        _ => box_sdf(p.cube.as_ref().unwrap(), x),
                    };
                    assert!(residual.abs() < 1e-9, "{kind} ({u},{v}) residual {residual}");
                }
            }
        }
    }

    fn box_sdf(b: &Aabb, x: Vec3) -> f64 {
        let c = b.center();
        let e = b.extent() * 0.5;
        let q = Vec3::new(
            (x.x() - c.x()).abs() - e.x(),
            (x.y() - c.y()).abs() - e.y(),
            (x.z() - c.z()).abs() - e.z(),
        );
        q.max(Vec3::ZERO).norm() + q.x().max(q.y()).max(q.z()).min(0.0)
    }

    #[test]
    fn prototypes_are_orthonormal() {
        let p = object_prototypes(3, 16, 4);
        for i in 0..4 {
            for j in 0..4 {
                let d: f32 = p[i].iter().zip(&p[j]).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-5);
            }
        }
        assert_eq!(object_prototypes(3, 16, 4), p);
        assert_ne!(object_prototypes(4, 16, 4), p);
    }

    #[test]
    fn sphere_is_visible_from_every_ring_camera() {
        let p = SynthPreset::new(PresetKind::OrbitingSphere);
        for (id, cam, _) in p.cameras() {
            for t in [0.0, 12.0, 23.0] {
                let f = oracle_render(&p, &cam, t);
                let n = f.ids.iter().filter(|&&i| i == ID_SPHERE).count();
                assert!(n > 50, "{id} t={t}: {n} sphere pixels");
            }
        }
    }
}
