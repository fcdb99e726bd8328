use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"GNRF";
pub const TENSOR_VERSION: u16 = 1;
const DTYPE_F32: u8 = 1;

/// Dense little-endian `f32` tensor as stored in a RawTensorFile.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl RawTensor {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        let expect: usize = dims.iter().map(|&d| d as usize).product();
        if expect != data.len() {
            return Err(Error::DimMismatch(format!(
                "tensor dims {dims:?} need {expect} values, got {}",
                data.len()
            )));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::DimMismatch(format!("tensor rank {} too large", dims.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(&TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a RawTensorFile image; `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let malformed = |reason: &str| Error::Malformed {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 8 {
            return Err(malformed("file shorter than the tensor header"));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != TENSOR_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: TENSOR_MAGIC,
                found: magic,
            });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != TENSOR_VERSION {
            return Err(Error::UnsupportedVersion {
                what: "tensor file",
                path: path.to_path_buf(),
                found: version as u32,
                supported: TENSOR_VERSION as u32,
            });
        }
        if bytes[6] != DTYPE_F32 {
            return Err(malformed(&format!("unsupported dtype tag {}", bytes[6])));
        }
        let ndim = bytes[7] as usize;
        let header = 8 + 4 * ndim;
        if bytes.len() < header {
            return Err(malformed("file shorter than its dimension list"));
        }
        let dims: Vec<u32> = (0..ndim)
            .map(|i| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()))
            .collect();
        let count: u128 = dims.iter().map(|&d| d as u128).product();
        let expected = count * 4;
        let found = (bytes.len() - header) as u128;
        if expected != found {
            return Err(Error::PayloadLength {
                path: path.to_path_buf(),
                expected: expected as usize,
                found: found as usize,
            });
        }
        let data = bytes[header..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
