use rayon::prelude::*;

use crate::field::GearedModel;
use crate::io::Image;
use crate::numeric::Real;
use crate::render::{render_pixel, Camera, MarchSettings, RayWorkspace};
use crate::semantic::FeatureMap;

/// Mean over rays of `‖pred − truth‖²`.
pub fn photometric_loss(pred: &[[f64; 3]], truth: &[[f64; 3]]) -> f64 {
    assert!(
        !pred.is_empty() && pred.len() == truth.len(),
        "photometric loss needs matching non-empty batches"
    );
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (0..3).map(|c| (p[c] - t[c]).powi(2)).sum::<f64>())
        .sum();
    sum / pred.len() as f64
}

/// Mean over rays of `‖pred − truth‖²` on `dim`-vectors stored contiguously.
pub fn semantic_loss(pred: &[f64], truth: &[f64], dim: usize) -> f64 {
    assert!(
        dim > 0 && !pred.is_empty() && pred.len() == truth.len(),
        "semantic loss needs matching non-empty batches"
    );
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    sum / (pred.len() / dim) as f64
}

/// Per-pixel rendering loss at full resolution plus the coarse grid it was
/// interpolated from.
#[derive(Clone, Debug, PartialEq)]
pub struct LossMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub stride: usize,
    pub coarse_width: usize,
    pub coarse_height: usize,
    pub coarse: Vec<f64>,
    /// Mean photometric error over the coarse pixels.
    pub mse: f64,
}

impl LossMap {
    /// Spatial variance of the full-resolution map.
    pub fn variance(&self) -> f64 {
        let n = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
    }
}

/// Bilinear upsampling of a map sampled at pixels `(i·s, j·s)` back to full
/// resolution; pixels past the last coarse node are clamped.
pub fn upsample(coarse: &[f64], cw: usize, ch: usize, stride: usize, width: usize, height: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = (y as f64 / stride as f64).min((ch - 1) as f64);
        let (y0, ty) = (fy.floor() as usize, fy - fy.floor());
        let y1 = (y0 + 1).min(ch - 1);
        for x in 0..width {
            let fx = (x as f64 / stride as f64).min((cw - 1) as f64);
            let (x0, tx) = (fx.floor() as usize, fx - fx.floor());
            let x1 = (x0 + 1).min(cw - 1);
            let at = |i: usize, j: usize| coarse[j * cw + i];
            out.push((1.0 - ty) * ((1.0 - tx) * at(x0, y0) + tx * at(x1, y0)) + ty * ((1.0 - tx) * at(x0, y1) + tx * at(x1, y1)));
        }
    }
    out
}

/// `‖ΔC‖² + λ‖ΔS‖²` per pixel, rendered every `stride` pixels.
pub fn loss_map<T: Real>(
    model: &GearedModel<T>,
    camera: &Camera,
    time: f64,
    truth_rgb: &Image,
    truth_features: &FeatureMap,
    lambda: f64,
    stride: usize,
    settings: &MarchSettings,
) -> LossMap {
    let s = stride.max(1);
    let (cw, ch) = (camera.width.div_ceil(s), camera.height.div_ceil(s));
    let rows: Vec<Vec<(f64, f64)>> = (0..ch)
        .into_par_iter()
        .map_init(
            || RayWorkspace::new(model),
            |ws, j| {
                (0..cw)
                    .map(|i| {
                        let (x, y) = (i * s, j * s);
                        let px = render_pixel(model, camera, x as f64, y as f64, time, settings, ws);
                        let c = truth_rgb.get(x, y);
                        let pho: f64 = (0..3).map(|k| (px.color[k] as f64 - c[k] as f64).powi(2)).sum();
                        let sem: f64 = px
                            .semantic
                            .iter()
                            .zip(truth_features.pixel(x, y))
                            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                            .sum();
                        (pho + lambda * sem, pho)
                    })
                    .collect()
            },
        )
        .collect();
    let flat: Vec<(f64, f64)> = rows.into_iter().flatten().collect();
    let coarse: Vec<f64> = flat.iter().map(|p| p.0).collect();
    let mse = flat.iter().map(|p| p.1).sum::<f64>() / (3 * flat.len()) as f64;
    LossMap {
        width: camera.width,
        height: camera.height,
        values: upsample(&coarse, cw, ch, s, camera.width, camera.height),
        stride: s,
        coarse_width: cw,
        coarse_height: ch,
        coarse,
        mse,
    }
}

/// Patch means over a non-overlapping grid; edge remainders are dropped.
pub fn patch_means(map: &[f64], width: usize, height: usize, patch: usize) -> (usize, usize, Vec<f64>) {
    let (pw, ph) = (width / patch, height / patch);
    let mut means = Vec::with_capacity(pw * ph);
    for py in 0..ph {
        for px in 0..pw {
            let mut s = 0.0;
            for y in py * patch..(py + 1) * patch {
                s += map[y * width + px * patch..y * width + (px + 1) * patch].iter().sum::<f64>();
            }
            means.push(s / (patch * patch) as f64);
        }
    }
    (pw, ph, means)
}

/// Centers of the `k` highest-mean patches (positives) and of the `k` lowest
/// among the remaining patches (negatives). Ties go to the lower row-major
/// patch index. `k` shrinks to half the patch count when there are too few.
pub fn topk_patch_prompts(map: &[f64], width: usize, height: usize, patch: usize, k: usize) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let (pw, _, means) = patch_means(map, width, height, patch);
    let mut k = k;
    if 2 * k > means.len() {
        log::warn!("only {} patches for top-{k} prompts, using k = {}", means.len(), means.len() / 2);
        k = means.len() / 2;
    }
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    let mut rest = order[k..].to_vec();
    rest.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    let center = |i: usize| (((i % pw) * patch + patch / 2) as f64, ((i / pw) * patch + patch / 2) as f64);
    (
        order[..k].iter().map(|&i| center(i)).collect(),
        rest[..k].iter().map(|&i| center(i)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loss_values() {
        assert_eq!(photometric_loss(&[[0.1, 0.0, 0.0]], &[[0.0; 3]]), 0.1f64.powi(2));
        assert_eq!(photometric_loss(&[[0.3; 3]; 4], &[[0.3; 3]; 4]), 0.0);
        assert_eq!(semantic_loss(&[1.0, 0.0], &[0.0, 0.0], 2), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<[f64; 3]> = (0..9).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let t: Vec<[f64; 3]> = (0..9).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let mut direct = 0.0;
        for i in 0..9 {
            for c in 0..3 {
                direct += (p[i][c] - t[i][c]) * (p[i][c] - t[i][c]);
            }
        }
        assert!((photometric_loss(&p, &t) - direct / 9.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_map_tie_break() {
        let map = vec![1.0; 64 * 48];
        let (pos, neg) = topk_patch_prompts(&map, 64, 48, 16, 3);
        assert_eq!(pos, vec![(8.0, 8.0), (24.0, 8.0), (40.0, 8.0)]);
        assert_eq!(neg, vec![(56.0, 8.0), (8.0, 24.0), (24.0, 24.0)]);
    }

    #[test]
    fn hot_block_is_positive() {
        let mut map = vec![0.0; 64 * 64];
        for y in 32..48 {
            for x in 16..32 {
                map[y * 64 + x] = 5.0;
            }
        }
        let (pos, _) = topk_patch_prompts(&map, 64, 64, 16, 1);
        assert_eq!(pos, vec![(24.0, 40.0)]);
    }

    #[test]
    fn matches_exhaustive_patch_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let map: Vec<f64> = (0..64 * 64).map(|_| rng.gen()).collect();
            let (pos, neg) = topk_patch_prompts(&map, 64, 64, 16, 3);
            // brute force: every patch mean, then full sorts
            let mut means = Vec::new();
            for py in 0..4 {
                for px in 0..4 {
                    let mut s = 0.0;
                    for y in 0..16 {
                        for x in 0..16 {
                            s += map[(py * 16 + y) * 64 + px * 16 + x];
                        }
                    }
                    means.push((s / 256.0, py * 4 + px));
                }
            }
            let mut desc = means.clone();
            desc.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let c = |i: usize| (((i % 4) * 16 + 8) as f64, ((i / 4) * 16 + 8) as f64);
            assert_eq!(pos, desc[..3].iter().map(|m| c(m.1)).collect::<Vec<_>>());
            let lowest: Vec<_> = desc[3..].iter().rev().take(3).map(|m| c(m.1)).collect();
            assert_eq!(neg, lowest);
        }
    }

    #[test]
    fn too_few_patches_shrinks_k() {
        let (pos, neg) = topk_patch_prompts(&[0.0; 32 * 16], 32, 16, 16, 3);
        assert_eq!((pos.len(), neg.len()), (1, 1));
    }

    #[test]
    fn upsample_is_exact_at_nodes_and_linear_between() {
        let coarse = vec![0.0, 2.0, 4.0, 6.0];
        let full = upsample(&coarse, 2, 2, 2, 4, 4);
        assert_eq!(full[0], 0.0);
        assert_eq!(full[2], 2.0);
        assert_eq!(full[1], 1.0);
        assert_eq!(full[2 * 4], 4.0);
        assert_eq!(full[4 + 1], 3.0);
        assert_eq!(full[3 * 4 + 3], 6.0);
    }
}
