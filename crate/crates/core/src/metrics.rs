//! Image and mask quality metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Image;
use crate::semantic::Mask;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
/// Text renderings clamp the infinite PSNR of identical images to this.
pub const PSNR_TEXT_CAP: f64 = 99.0;

fn same_dims(a: &Image, b: &Image) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::DimMismatch(format!(
            "images are {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| (0..3).map(|c| (p[c] as f64 - q[c] as f64).powi(2)).sum::<f64>())
        .sum();
    Ok(sum / (3 * a.pixels.len()).max(1) as f64)
}

/// `10·log10(peak² / MSE)`; identical images give `+∞`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / m).log10() })
}

pub fn format_psnr(db: f64) -> String {
    format!("{:.2}", db.min(PSNR_TEXT_CAP))
}

pub fn grayscale(img: &Image) -> Vec<f64> {
    img.pixels
        .iter()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect()
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable valid-mode filtering: output is `(w−10) × (h−10)`.
fn filter_valid(x: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for ox in 0..ow {
            rows[y * ow + ox] = (0..SSIM_WINDOW).map(|i| k[i] * x[y * w + ox + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            out[oy * ow + ox] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(oy + i) * ow + ox]).sum();
        }
    }
    out
}

/// Single-scale grayscale SSIM with an 11×11 Gaussian window at unit peak.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::DimMismatch(format!(
            "{w}x{h} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let (x, y) = (grayscale(a), grayscale(b));
    let k = gaussian_kernel();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|v| filter_valid(v, w, h, &k));
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}

/// `(IoU, accuracy)`; IoU of two empty masks is 1.
pub fn mask_metrics(pred: &Mask, truth: &Mask) -> Result<(f64, f64)> {
    if (pred.width, pred.height) != (truth.width, truth.height) {
        return Err(Error::DimMismatch(format!(
            "masks are {}x{} and {}x{}",
            pred.width, pred.height, truth.width, truth.height
        )));
    }
    let (mut inter, mut uni, mut agree) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.bits.iter().zip(&truth.bits) {
        inter += (p && t) as usize;
        uni += (p || t) as usize;
        agree += (p == t) as usize;
    }
    let iou = if uni == 0 { 1.0 } else { inter as f64 / uni as f64 };
    Ok((iou, agree as f64 / pred.bits.len().max(1) as f64))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub view: String,
    pub time: usize,
    /// `None` encodes an exact match (infinite PSNR) in JSON.
    pub psnr: Option<f64>,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskScore {
    pub view: String,
    pub time: usize,
    pub iou: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    pub source_time: usize,
    pub miou: f64,
    pub acc: f64,
    pub t_miou: f64,
    pub t_acc: f64,
    pub frames: Vec<MaskScore>,
}

impl MaskReport {
    /// Frames at the source time feed mIoU/Acc; all others feed t-mIoU/t-Acc.
    pub fn from_frames(source_time: usize, frames: Vec<MaskScore>) -> Self {
        let same = || frames.iter().filter(|f| f.time == source_time);
        let other = || frames.iter().filter(|f| f.time != source_time);
        Self {
            source_time,
            miou: mean(same().map(|f| f.iou)),
            acc: mean(same().map(|f| f.accuracy)),
            t_miou: mean(other().map(|f| f.iou)),
            t_acc: mean(other().map(|f| f.accuracy)),
            frames,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frames: Vec<FrameScore>,
    /// Mean over finite PSNR values capped at the text cap.
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub lpips: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<MaskReport>,
}

impl MetricReport {
    pub fn from_frames(frames: Vec<FrameScore>) -> Self {
        Self {
            mean_psnr: mean(frames.iter().map(|f| f.psnr.unwrap_or(PSNR_TEXT_CAP).min(PSNR_TEXT_CAP))),
            mean_ssim: mean(frames.iter().map(|f| f.ssim)),
            lpips: "unavailable".into(),
            masks: None,
            frames,
        }
    }

    pub fn score(view: &str, time: usize, pred: &Image, truth: &Image) -> Result<FrameScore> {
        let p = psnr(pred, truth, 1.0)?;
        Ok(FrameScore {
            view: view.into(),
            time,
            psnr: p.is_finite().then_some(p),
            ssim: ssim(pred, truth)?,
        })
    }
}
