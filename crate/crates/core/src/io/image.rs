use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major RGB image with components in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f32; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<[f32; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimMismatch(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: [f32; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.pixels[y * self.width + x]
    }

    /// 8-bit quantization used by the PPM writer.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.map(quantize)).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 3 * width * height {
            return Err(Error::DimMismatch(format!(
                "{width}x{height} rgb8 buffer needs {} bytes, got {}",
                3 * width * height,
                bytes.len()
            )));
        }
        let pixels = bytes
            .chunks_exact(3)
            .map(|c| [c[0] as f32 / 255.0, c[1] as f32 / 255.0, c[2] as f32 / 255.0])
            .collect();
        Ok(Self { width, height, pixels })
    }

    /// Same image after an 8-bit round trip.
    pub fn quantized(&self) -> Image {
        Image::from_rgb8(self.width, self.height, &self.to_rgb8()).expect("same dims")
    }
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary PPM (P6, maxval 255).
pub fn encode_ppm(width: usize, height: usize, rgb8: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb8);
    out
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let malformed = |reason: &str| Error::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0;
    let mut token = || -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token().as_deref() != Some("P6") {
        return Err(malformed("not a binary PPM (P6)"));
    }
    let mut num = || token().and_then(|t| t.parse::<usize>().ok());
    let (w, h, maxval) = match (num(), num(), num()) {
        (Some(w), Some(h), Some(m)) => (w, h, m),
        _ => return Err(malformed("bad PPM header")),
    };
    if maxval != 255 {
        return Err(malformed(&format!("unsupported PPM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[(pos + 1).min(bytes.len())..];
    if data.len() != 3 * w * h {
        return Err(Error::PayloadLength {
            path: path.to_path_buf(),
            expected: 3 * w * h,
            found: data.len(),
        });
    }
    Ok((w, h, data.to_vec()))
}

pub fn write_ppm(path: &Path, image: &Image) -> Result<()> {
    fs::write(path, encode_ppm(image.width, image.height, &image.to_rgb8())).map_err(|e| Error::io(path, e))
}

pub fn write_ppm_rgb8(path: &Path, width: usize, height: usize, rgb8: &[u8]) -> Result<()> {
    fs::write(path, encode_ppm(width, height, rgb8)).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, data) = decode_ppm(&bytes, path)?;
    Image::from_rgb8(w, h, &data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_with_comment() {
        let raster: Vec<u8> = (0..2 * 3 * 3).map(|i| (i * 13) as u8).collect();
        let bytes = encode_ppm(2, 3, &raster);
        assert!(bytes.starts_with(b"P6\n2 3\n255\n"));
        assert_eq!(decode_ppm(&bytes, Path::new("a")).unwrap(), (2, 3, raster.clone()));
        let mut commented = b"P6\n# made by hand\n2 3\n255\n".to_vec();
        commented.extend_from_slice(&raster);
        assert_eq!(decode_ppm(&commented, Path::new("a")).unwrap().2, raster);
        assert!(decode_ppm(&bytes[..bytes.len() - 1], Path::new("a")).is_err());
        assert!(decode_ppm(b"P3\n1 1\n255\n0 0 0", Path::new("a")).is_err());
    }

    #[test]
    fn quantization_is_idempotent() {
        let img = Image::new(2, 1, vec![[0.1234, 0.5, 2.0], [-1.0, 0.999, 0.0]]).unwrap();
        let q = img.quantized();
        assert_eq!(q.quantized(), q);
        assert_eq!(q.to_rgb8(), img.to_rgb8());
    }
}
