use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Mat3, Vec3};

/// Pinhole camera in the OpenCV convention: x right, y down, z forward.
/// `rotation` maps camera axes to world axes and `translation` is the camera
/// center in world coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: Mat3,
    pub translation: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_near: f64,
    pub t_far: f64,
    pub time: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize, rotation: Mat3, translation: Vec3) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
        };
        cam.validate(1e-6)?;
        Ok(cam)
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera needs positive focal lengths and image size".into()));
        }
        let err = self.rotation.orthonormality_error();
        let det = self.rotation.determinant();
        if !(err <= tol) || !((det - 1.0).abs() <= tol) {
            return Err(Error::Config(format!(
                "camera rotation is not a proper rotation (orthonormality error {err:.2e}, det {det})"
            )));
        }
        if !self.translation.is_finite() || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::Config("camera parameters must be finite".into()));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target` with world `up` roughly upward in
    /// the image, and a horizontal field of view of `fov_x` radians.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_x: f64, width: usize, height: usize) -> Result<Self> {
        let forward = (target - eye).normalized();
        let right = forward.cross(up);
        if right.norm() < 1e-9 {
            return Err(Error::Config("look-at up vector is parallel to the view direction".into()));
        }
        let right = right.normalized();
        let down = forward.cross(right);
        let fx = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Camera::new(
            fx,
            fx,
            0.5 * width as f64,
            0.5 * height as f64,
            width,
            height,
            Mat3::from_columns(right, down, forward),
            eye,
        )
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2)
    }

    /// Unnormalized camera-space direction through image point `(x, y)`.
    pub fn camera_direction(&self, x: f64, y: f64) -> Vec3 {
        Vec3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    /// Unit world-space direction through the center of pixel `(u, v)`.
    pub fn pixel_direction(&self, u: f64, v: f64) -> Vec3 {
        self.rotation.mul_vec(self.camera_direction(u + 0.5, v + 0.5)).normalized()
    }

    /// Ray through pixel `(u, v)` clipped to `bounds` and `[near, far]`;
    /// `None` when it misses the box.
    pub fn generate_ray(&self, u: f64, v: f64, time: f64, bounds: &Aabb, near: f64, far: f64) -> Option<Ray> {
        let dir = self.pixel_direction(u, v);
        let origin = self.translation;
        let (t0, t1) = bounds.intersect(origin, dir)?;
        let t_near = t0.max(near);
        let t_far = t1.min(far);
        (t_far > t_near).then_some(Ray {
            origin,
            dir,
            t_near,
            t_far,
            time,
        })
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation.transpose_mul_vec(p - self.translation)
    }

    /// Continuous image coordinates of a world point, or `None` when it lies
    /// at or behind the image plane. Pixel `(u, v)` covers `[u, u+1) × [v, v+1)`.
    pub fn project_point(&self, p: Vec3) -> Option<[f64; 2]> {
        project_camera_point(self, self.world_to_camera(p))
    }

    pub fn contains_pixel(&self, xy: [f64; 2]) -> bool {
        xy[0] >= 0.0 && xy[1] >= 0.0 && xy[0] < self.width as f64 && xy[1] < self.height as f64
    }

    /// Copy for an image downscaled by an integer `stride`.
    pub fn strided(&self, stride: usize) -> Camera {
        let s = stride.max(1) as f64;
        Camera {
            fx: self.fx / s,
            fy: self.fy / s,
            cx: self.cx / s,
            cy: self.cy / s,
            width: self.width.div_ceil(stride.max(1)),
            height: self.height.div_ceil(stride.max(1)),
            ..self.clone()
        }
    }

    /// Stable hash of the pose and intrinsics, used as a cache key.
    pub fn pose_key(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for v in self
            .rotation
            .to_row_major()
            .iter()
            .chain(&self.translation.0)
            .chain(&[self.fx, self.fy, self.cx, self.cy])
        {
            v.to_bits().hash(&mut h);
        }
        (self.width, self.height).hash(&mut h);
        h.finish()
    }
}

pub fn project_camera_point(cam: &Camera, pc: Vec3) -> Option<[f64; 2]> {
    if pc.z() <= 0.0 {
        return None;
    }
    Some([cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy])
}
