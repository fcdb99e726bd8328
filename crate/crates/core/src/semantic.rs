//! Feature providers and the prompt-to-mask decoder.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::synth::{oracle_render, SynthPreset};
use crate::io::{RawTensor, SceneDataset};
use crate::rle::RleMask;

pub const DEFAULT_TAU_SIM: f64 = 0.85;
pub const BOX_DILATION: f64 = 0.25;

/// Pixel-aligned feature image, `[H × W × D]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * dim {
            return Err(Error::DimMismatch(format!(
                "{width}x{height}x{dim} feature map needs {} values, got {}",
                width * height * dim,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("feature map value {i} is not finite")));
        }
        Ok(Self { width, height, dim, data })
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.dim;
        &self.data[i..i + self.dim]
    }

    /// Per-pixel L2 normalization; zero vectors stay zero.
    pub fn normalized(&self) -> FeatureMap {
        let mut out = self.clone();
        for px in out.data.chunks_exact_mut(self.dim.max(1)) {
            let n = px.iter().map(|v| v * v).sum::<f32>().sqrt();
            if n > 1e-12 {
                px.iter_mut().for_each(|v| *v /= n);
            }
        }
        out
    }

    pub fn from_tensor(t: RawTensor) -> Result<Self> {
        match t.dims[..] {
            [h, w, d] => Self::new(w as usize, h as usize, d as usize, t.data),
            _ => Err(Error::DimMismatch(format!("feature map needs 3 dims, got {:?}", t.dims))),
        }
    }

    pub fn to_tensor(&self) -> RawTensor {
        RawTensor {
            dims: vec![self.height as u32, self.width as u32, self.dim as u32],
            data: self.data.clone(),
        }
    }
}

/// Where supervision features come from.
#[derive(Clone, Copy)]
pub enum FeatureSource<'a> {
    /// Precomputed maps referenced by a scene manifest.
    Disk(&'a SceneDataset),
    /// Object-id prototypes over the analytic renderer.
    Synthetic { preset: &'a SynthPreset, prototypes: &'a [Vec<f32>] },
}

pub fn provide_features(source: FeatureSource<'_>, view: usize, time: usize) -> Result<FeatureMap> {
    match source {
        FeatureSource::Disk(scene) => scene.features(view, time),
        FeatureSource::Synthetic { preset, prototypes } => {
            let cams = preset.cameras();
            let (_, cam, _) = cams.get(view).ok_or_else(|| Error::Contract(format!("view {view} not in preset")))?;
            let frame = oracle_render(preset, cam, time as f64);
            Ok(prototype_features(&frame.ids, cam.width, cam.height, prototypes))
        }
    }
}

/// Feature image whose pixel `i` is `prototypes[ids[i]]`.
pub fn prototype_features(ids: &[u8], width: usize, height: usize, prototypes: &[Vec<f32>]) -> FeatureMap {
    let dim = prototypes.first().map_or(0, Vec::len);
    let data = ids.iter().flat_map(|&id| prototypes[id as usize].iter().copied()).collect();
    FeatureMap { width, height, dim, data }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prompt {
    Point { u: f64, v: f64, positive: bool },
    Box { u0: f64, v0: f64, u1: f64, v1: f64 },
}

impl Prompt {
    pub fn positive(u: f64, v: f64) -> Self {
        Prompt::Point { u, v, positive: true }
    }

    pub fn negative(u: f64, v: f64) -> Self {
        Prompt::Point { u, v, positive: false }
    }

    fn validate(&self, width: usize, height: usize) -> Result<()> {
        let inside = |u: f64, v: f64| u >= 0.0 && v >= 0.0 && u < width as f64 && v < height as f64;
        match *self {
            Prompt::Point { u, v, .. } if !inside(u, v) => Err(Error::Contract(format!("point prompt ({u}, {v}) outside {width}x{height}"))),
            Prompt::Box { u0, v0, u1, v1 } if !(u1 > u0 && v1 > v0) => Err(Error::Contract(format!("degenerate box ({u0}, {v0})-({u1}, {v1})"))),
            Prompt::Box { u0, v0, u1, v1 } if u0 < 0.0 || v0 < 0.0 || u1 > width as f64 || v1 > height as f64 => {
                Err(Error::Contract(format!("box ({u0}, {v0})-({u1}, {v1}) outside {width}x{height}")))
            }
            _ => Ok(()),
        }
    }
}

/// Binary mask over row-major pixels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimMismatch(format!("{width}x{height} mask given {} bits", bits.len())));
        }
        Ok(Self { width, height, bits })
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Tight pixel bounding box `(x0, y0, x1, y1)`, inclusive.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    b = Some(match b {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        b
    }

    pub fn union(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn rle(&self) -> RleMask {
        RleMask::encode(self)
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

fn pixel_of(u: f64, v: f64, width: usize, height: usize) -> (usize, usize) {
    ((u.floor() as usize).min(width - 1), (v.floor() as usize).min(height - 1))
}

/// Pixel ranges covered by a box whose pixel centers fall inside it.
fn box_pixels(u0: f64, v0: f64, u1: f64, v1: f64, width: usize, height: usize) -> (usize, usize, usize, usize) {
    let lo = |a: f64, n: usize| ((a - 0.5).ceil().max(0.0) as usize).min(n - 1);
    let hi = |b: f64, n: usize| ((b - 0.5).floor().max(0.0) as usize).min(n - 1);
    (
        lo(u0, width),
        lo(v0, height),
        hi(u1, width).max(lo(u0, width)),
        hi(v1, height).max(lo(v0, height)),
    )
}

/// Similarity region growing from prompt seeds. An empty mask means every
/// seed failed its own candidacy test.
pub fn decode_mask(features: &FeatureMap, prompts: &[Prompt], tau: f64) -> Result<Mask> {
    let (w, h) = (features.width, features.height);
    for p in prompts {
        p.validate(w, h)?;
    }
    let f = features.normalized();
    let mut seeds = Vec::new();
    let mut positives: Vec<&[f32]> = Vec::new();
    let mut negatives: Vec<&[f32]> = Vec::new();
    let mut clip: Option<Vec<bool>> = None;
    for p in prompts {
        match *p {
            Prompt::Point { u, v, positive } => {
                let (x, y) = pixel_of(u, v, w, h);
                if positive {
                    seeds.push((x, y));
                    positives.push(f.pixel(x, y));
                } else {
                    negatives.push(f.pixel(x, y));
                }
            }
            Prompt::Box { u0, v0, u1, v1 } => {
                let (x0, y0, x1, y1) = box_pixels(u0, v0, u1, v1, w, h);
                let mut mean = vec![0.0f64; f.dim];
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        for (m, v) in mean.iter_mut().zip(f.pixel(x, y)) {
                            *m += *v as f64;
                        }
                    }
                }
                let mean: Vec<f32> = mean.iter().map(|&m| m as f32).collect();
                let mut seed = (x0, y0);
                let mut best = f64::NEG_INFINITY;
                let (mx, my) = ((x0 + x1) as f64 / 2.0, (y0 + y1) as f64 / 2.0);
                let mut best_dist = f64::INFINITY;
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let s = dot(f.pixel(x, y), &mean);
                        let dist = (x as f64 - mx).powi(2) + (y as f64 - my).powi(2);
                        // ties resolved toward the box center
                        if s > best + 1e-9 || ((s - best).abs() <= 1e-9 && dist < best_dist) {
                            best = s;
                            best_dist = dist;
                            seed = (x, y);
                        }
                    }
                }
                seeds.push(seed);
                positives.push(f.pixel(seed.0, seed.1));
                let (du, dv) = (BOX_DILATION * (u1 - u0), BOX_DILATION * (v1 - v0));
                let (cx0, cy0, cx1, cy1) = box_pixels(
                    (u0 - du).max(0.0),
                    (v0 - dv).max(0.0),
                    (u1 + du).min(w as f64),
                    (v1 + dv).min(h as f64),
                    w,
                    h,
                );
                let allowed = clip.get_or_insert_with(|| vec![false; w * h]);
                for y in cy0..=cy1 {
                    for x in cx0..=cx1 {
                        allowed[y * w + x] = true;
                    }
                }
            }
        }
    }
    if seeds.is_empty() {
        return Err(Error::Contract("decode_mask needs a positive point or a box".into()));
    }
    let mut proto = vec![0.0f32; f.dim];
    for p in &positives {
        for (a, b) in proto.iter_mut().zip(p.iter()) {
            *a += *b / positives.len() as f32;
        }
    }
    let n = proto.iter().map(|v| v * v).sum::<f32>().sqrt();
    if n > 1e-12 {
        proto.iter_mut().for_each(|v| *v /= n);
    }
    let candidate = |x: usize, y: usize| -> bool {
        if let Some(c) = &clip {
            if !c[y * w + x] {
                return false;
            }
        }
        let px = f.pixel(x, y);
        let s = dot(px, &proto);
        if s < tau {
            return false;
        }
        negatives.iter().all(|neg| s > dot(px, neg))
    };
    let mut mask = Mask::empty(w, h);
    let mut queue = VecDeque::new();
    for &(x, y) in &seeds {
        if !mask.get(x, y) && candidate(x, y) {
            mask.set(x, y, true);
            queue.push_back((x, y));
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        let mut visit = |nx: usize, ny: usize| {
            if !mask.get(nx, ny) && candidate(nx, ny) {
                mask.set(nx, ny, true);
                queue.push_back((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synth::{object_prototypes, PresetKind, ID_SPHERE};

    fn two_regions() -> FeatureMap {
        // left half [1,0], right half [0,1], one isolated left-type pixel on the right
        let (w, h) = (8, 6);
        let mut data = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let left = x < 4 || (x == 6 && y == 2);
                data.extend_from_slice(if left { &[1.0, 0.0] } else { &[0.0, 1.0] });
            }
        }
        FeatureMap::new(w, h, 2, data).unwrap()
    }

    #[test]
    fn positive_point_returns_its_connected_region() {
        let f = two_regions();
        let m = decode_mask(&f, &[Prompt::positive(1.2, 3.7)], DEFAULT_TAU_SIM).unwrap();
        assert_eq!(m.count(), 24);
        assert!(m.get(3, 5) && !m.get(4, 0) && !m.get(6, 2));
    }

    #[test]
    fn identical_negative_empties_the_mask() {
        let f = two_regions();
        let m = decode_mask(&f, &[Prompt::positive(1.0, 1.0), Prompt::negative(2.0, 2.0)], DEFAULT_TAU_SIM).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn needs_a_positive_prompt() {
        let f = two_regions();
        assert!(decode_mask(&f, &[Prompt::negative(1.0, 1.0)], 0.85).is_err());
        assert!(decode_mask(&f, &[Prompt::positive(8.0, 1.0)], 0.85).is_err());
        assert!(decode_mask(
            &f,
            &[Prompt::Box {
                u0: 2.0,
                v0: 1.0,
                u1: 2.0,
                v1: 3.0
            }],
            0.85
        )
        .is_err());
    }

    #[test]
    fn box_on_sphere_matches_ground_truth() {
        let preset = SynthPreset::new(PresetKind::OrbitingSphere);
        let protos = object_prototypes(0, 16, 4);
        let cams = preset.cameras();
        let frame = oracle_render(&preset, &cams[0].1, 0.0);
        let gt = Mask::from_bits(64, 64, frame.object_mask(ID_SPHERE)).unwrap();
        let (x0, y0, x1, y1) = gt.bbox().unwrap();
        let feats = prototype_features(&frame.ids, 64, 64, &protos);
        let b = Prompt::Box {
            u0: x0 as f64,
            v0: y0 as f64,
            u1: x1 as f64 + 1.0,
            v1: y1 as f64 + 1.0,
        };
        let m = decode_mask(&feats, &[b], DEFAULT_TAU_SIM).unwrap();
        let inter = m.bits.iter().zip(&gt.bits).filter(|(a, b)| **a && **b).count();
        let uni = m.bits.iter().zip(&gt.bits).filter(|(a, b)| **a || **b).count();
        assert!(inter as f64 / uni as f64 >= 0.95);
    }

    #[test]
    fn synthetic_features_are_prototypes() {
        let preset = SynthPreset::new(PresetKind::StaticBox);
        let protos = object_prototypes(1, 8, 4);
        let src = FeatureSource::Synthetic {
            preset: &preset,
            prototypes: &protos,
        };
        let a = provide_features(src, 2, 0).unwrap();
        let b = provide_features(src, 2, 7).unwrap();
        assert_eq!(a, b);
        let ids = oracle_render(&preset, &preset.cameras()[2].1, 0.0).ids;
        assert_eq!(a.pixel(10, 40), &protos[ids[40 * 64 + 10] as usize][..]);
    }
}
