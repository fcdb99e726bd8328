use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};

/// How many children a sample at gear `p` is split into.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    /// `2^(p-1)`
    #[default]
    Exp2,
    /// `3^(p-1)`
    Exp3,
    /// `2p - 1`
    Linear,
}

impl SplitStrategy {
    pub fn split_count(self, gear: usize) -> usize {
        let p = gear.max(1) as u32;
        match self {
            SplitStrategy::Exp2 => 2usize.pow(p - 1),
            SplitStrategy::Exp3 => 3usize.pow(p - 1),
            SplitStrategy::Linear => 2 * p as usize - 1,
        }
    }
}

impl FromStr for SplitStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp2" => Ok(SplitStrategy::Exp2),
            "exp3" => Ok(SplitStrategy::Exp3),
            "linear" => Ok(SplitStrategy::Linear),
            other => Err(Error::Config(format!("unknown split strategy `{other}` (expected exp2, exp3 or linear)"))),
        }
    }
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitStrategy::Exp2 => "exp2",
            SplitStrategy::Exp3 => "exp3",
            SplitStrategy::Linear => "linear",
        })
    }
}

/// Shape and sampling configuration of a [`GearedModel`](super::GearedModel).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_gear: usize,
    /// Plane channel count `M`.
    pub feature_dim: usize,
    pub semantic_dim: usize,
    pub spatial_res: usize,
    pub frame_count: usize,
    pub near: f64,
    pub far: f64,
    pub bounds: Aabb,
    pub split: SplitStrategy,
    /// When false, samples are never split regardless of gear.
    pub motion_aware_sampling: bool,
    pub samples_per_ray: usize,
    pub dir_freqs: usize,
    pub hidden: Vec<usize>,
    /// Forces one temporal resolution on every gear's spatio-temporal planes.
    pub temporal_override: Option<usize>,
    /// Time resolution of the gear-field planes; `None` means `ceil(T / 4)`.
    pub gear_time_res: Option<usize>,
    /// Value the gear field `g` takes everywhere at initialization.
    pub gear_init: f64,
    /// Constant value of the spatial gear planes at initialization; the
    /// spatio-temporal gear planes are set so that `g == gear_init`.
    pub gear_plane_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_gear: 4,
            feature_dim: 32,
            semantic_dim: 16,
            spatial_res: 64,
            frame_count: 24,
            near: 0.0,
            far: 1e3,
            bounds: Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0)),
            split: SplitStrategy::Exp2,
            motion_aware_sampling: true,
            samples_per_ray: 64,
            dir_freqs: 4,
            hidden: vec![64, 64],
            temporal_override: None,
            gear_time_res: None,
            gear_init: 1.0,
            gear_plane_scale: 1.0 / 3.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_gear", self.n_gear),
            ("feature_dim", self.feature_dim),
            ("semantic_dim", self.semantic_dim),
            ("frame_count", self.frame_count),
            ("samples_per_ray", self.samples_per_ray),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.spatial_res < 2 {
            return Err(Error::Config("spatial_res must be at least 2".into()));
        }
        if self.temporal_override == Some(0) || self.gear_time_res == Some(0) {
            return Err(Error::Config("temporal resolutions must be at least 1".into()));
        }
        if !(self.far > self.near && self.near >= 0.0) {
            return Err(Error::Config(format!("invalid near/far {} / {}", self.near, self.far)));
        }
        let e = self.bounds.extent();
        if !(e.x() > 0.0 && e.y() > 0.0 && e.z() > 0.0) {
            return Err(Error::Config("scene bounds must have positive extent".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.gear_plane_scale <= 0.0 {
            return Err(Error::Config("gear_plane_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn dir_encoding_dim(&self) -> usize {
        6 * self.dir_freqs
    }

    /// Time-axis resolution of gear `g`'s spatio-temporal planes.
    pub fn st_time_res(&self, gear: usize) -> usize {
        self.temporal_override
            .unwrap_or_else(|| temporal_resolution(gear, self.frame_count, self.n_gear))
    }

    pub fn gear_plane_time_res(&self) -> usize {
        self.gear_time_res.unwrap_or_else(|| self.frame_count.div_ceil(4).max(1))
    }
}

/// Temporal resolution for gear `gear` of `n_gear`, interpolating linearly
/// from 1 frame at gear 1 to `frames` at the top gear (rounded half up).
pub fn temporal_resolution(gear: usize, frames: usize, n_gear: usize) -> usize {
    if n_gear <= 1 {
        return frames.max(1);
    }
    let g = gear.clamp(1, n_gear);
    let r = 1.0 + (g - 1) as f64 * (frames.max(1) - 1) as f64 / (n_gear - 1) as f64;
    (r + 0.5).floor() as usize
}
