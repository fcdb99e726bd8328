use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use super::march::{MarchSettings, RayWorkspace};
use crate::error::{Error, Result};
use crate::field::{GearedModel, SpaceTimePoint};
use crate::io::{encode_ppm, quantize, RawTensor};
use crate::numeric::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Rgb,
    Semantic,
    Depth,
    Gear,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::Rgb, Layer::Semantic, Layer::Depth, Layer::Gear];

    pub fn name(self) -> &'static str {
        match self {
            Layer::Rgb => "rgb",
            Layer::Semantic => "semantic",
            Layer::Depth => "depth",
            Layer::Gear => "gear",
        }
    }
}

impl FromStr for Layer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(Layer::Rgb),
            "semantic" | "features" | "sem" => Ok(Layer::Semantic),
            "depth" => Ok(Layer::Depth),
            "gear" => Ok(Layer::Gear),
            other => Err(Error::Config(format!("unknown layer `{other}` (rgb, semantic, depth, gear)"))),
        }
    }
}

/// Which layers to produce.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LayerSet {
    pub rgb: bool,
    pub semantic: bool,
    pub depth: bool,
    pub gear: bool,
}

impl LayerSet {
    pub fn all() -> Self {
        Self {
            rgb: true,
            semantic: true,
            depth: true,
            gear: true,
        }
    }

    pub fn only(layers: &[Layer]) -> Self {
        let mut s = Self::default();
        for l in layers {
            match l {
                Layer::Rgb => s.rgb = true,
                Layer::Semantic => s.semantic = true,
                Layer::Depth => s.depth = true,
                Layer::Gear => s.gear = true,
            }
        }
        s
    }
}

/// Per-pixel render products. Absent layers are `None`. Depth is `None` per
/// pixel where no surface was found; the gear heatmap uses 0 for such pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedLayers {
    pub width: usize,
    pub height: usize,
    pub semantic_dim: usize,
    pub rgb: Option<Vec<[f32; 3]>>,
    pub semantic: Option<Vec<f32>>,
    pub depth: Option<Vec<Option<f32>>>,
    pub gear: Option<Vec<u8>>,
}

/// Per-pixel result used by all layer builders.
#[derive(Clone, Debug)]
pub struct PixelRender {
    pub color: [f32; 3],
    pub semantic: Vec<f32>,
    pub depth: Option<f64>,
    pub gear: u8,
}

/// Renders one pixel of `camera` at `time`, including the gear level at the
/// estimated surface point.
pub fn render_pixel<T: Real>(
    model: &GearedModel<T>,
    camera: &Camera,
    u: f64,
    v: f64,
    time: f64,
    settings: &MarchSettings,
    ws: &mut RayWorkspace<T>,
) -> PixelRender {
    let cfg = model.config();
    let bg = settings.background.map(|c| c as f32);
    let Some(ray) = camera.generate_ray(u, v, time, &cfg.bounds, cfg.near, cfg.far) else {
        return PixelRender {
            color: bg,
            semantic: vec![0.0; model.semantic_dim()],
            depth: None,
            gear: 0,
        };
    };
    let out = ws.forward(model, &ray, settings);
    let gear = match out.depth {
        Some(d) => model.gear_level(&SpaceTimePoint::new(ray.at(d), time)) as u8,
        None => 0,
    };
    PixelRender {
        color: out.color.map(|c| c.as_f64().clamp(0.0, 1.0) as f32),
        semantic: out.semantic.iter().map(|s| s.as_f64() as f32).collect(),
        depth: out.depth,
        gear,
    }
}

/// Renders the requested layers at `stride`: output pixel `(i, j)` is the
/// full-resolution pixel `(i·stride, j·stride)`.
pub fn render_layers<T: Real>(
    model: &GearedModel<T>,
    camera: &Camera,
    time: f64,
    layers: LayerSet,
    stride: usize,
    settings: &MarchSettings,
) -> RenderedLayers {
    let stride = stride.max(1);
    let w = camera.width.div_ceil(stride);
    let h = camera.height.div_ceil(stride);
    let d = model.semantic_dim();
    let rows: Vec<Vec<PixelRender>> = (0..h)
        .into_par_iter()
        .map_init(
            || RayWorkspace::new(model),
            |ws, j| {
                (0..w)
                    .map(|i| render_pixel(model, camera, (i * stride) as f64, (j * stride) as f64, time, settings, ws))
                    .collect()
            },
        )
        .collect();
    let pixels: Vec<PixelRender> = rows.into_iter().flatten().collect();
    RenderedLayers {
        width: w,
        height: h,
        semantic_dim: d,
        rgb: layers.rgb.then(|| pixels.iter().map(|p| p.color).collect()),
        semantic: layers.semantic.then(|| pixels.iter().flat_map(|p| p.semantic.iter().copied()).collect()),
        depth: layers.depth.then(|| pixels.iter().map(|p| p.depth.map(|d| d as f32)).collect()),
        gear: layers.gear.then(|| pixels.iter().map(|p| p.gear).collect()),
    }
}

impl RenderedLayers {
    /// File bytes of every present layer: PPM for `rgb` and `gear`,
    /// RawTensorFile for `depth` (`[h, w]`, +inf without a surface) and
    /// `semantic` (`[h, w, d]`).
    pub fn encode(&self) -> Vec<(Layer, Vec<u8>)> {
        let (w, h) = (self.width, self.height);
        let mut out = Vec::new();
        if let Some(rgb) = &self.rgb {
            let bytes: Vec<u8> = rgb.iter().flat_map(|c| c.map(quantize)).collect();
            out.push((Layer::Rgb, encode_ppm(w, h, &bytes)));
        }
        if let Some(sem) = &self.semantic {
            let t = RawTensor::new(vec![h as u32, w as u32, self.semantic_dim as u32], sem.clone()).expect("semantic layer shape");
            out.push((Layer::Semantic, t.to_bytes()));
        }
        if let Some(depth) = &self.depth {
            let data = depth.iter().map(|d| d.unwrap_or(f32::INFINITY)).collect();
            out.push((
                Layer::Depth,
                RawTensor::new(vec![h as u32, w as u32], data).expect("depth layer shape").to_bytes(),
            ));
        }
        if let Some(gear) = &self.gear {
            let bytes: Vec<u8> = gear.iter().flat_map(|&g| gear_color(g)).collect();
            out.push((Layer::Gear, encode_ppm(w, h, &bytes)));
        }
        out
    }
}

impl Layer {
    pub fn file_extension(self) -> &'static str {
        match self {
            Layer::Rgb | Layer::Gear => "ppm",
            Layer::Semantic | Layer::Depth => "gnrf",
        }
    }
}

/// Fixed palette for gear levels 1..=4; higher levels reuse the last entry
/// and pixels without a surface are black.
pub const GEAR_PALETTE: [[u8; 3]; 5] = [[0, 0, 0], [64, 64, 64], [40, 90, 230], [40, 200, 70], [230, 40, 40]];

pub fn gear_color(level: u8) -> [u8; 3] {
    GEAR_PALETTE[(level as usize).min(GEAR_PALETTE.len() - 1)]
}
