use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GearedModel, ModelConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GNCK";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Serializable ChaCha8 position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Decimal string; JSON numbers cannot carry a u128.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Contract(format!("bad rng word position `{}`", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    cycle: usize,
    rng: Option<RngState>,
}

/// Trained model plus the training position it was saved at.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: GearedModel<f32>,
    pub cycle: usize,
    pub rng: Option<RngState>,
}

pub fn checkpoint_bytes(ck: &Checkpoint) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        config: ck.model.config().clone(),
        cycle: ck.cycle,
        rng: ck.rng.clone(),
    })?;
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (name, _, data) in ck.model.tensors() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(ck)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::PayloadLength {
                path: self.path.to_path_buf(),
                expected: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, path };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "checkpoint",
            path: path.to_path_buf(),
            found: version as u32,
            supported: CHECKPOINT_VERSION as u32,
        });
    }
    let hlen = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(hlen)?).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        reason: format!("checkpoint header: {e}"),
    })?;
    let mut model = GearedModel::<f32>::new(header.config)?;
    for (name, _, data) in model.tensors_mut() {
        let nlen = r.u32()? as usize;
        let found = r.take(nlen)?;
        if found != name.as_bytes() {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                reason: format!("expected tensor `{name}`, found `{}`", String::from_utf8_lossy(found)),
            });
        }
        let count = r.u32()? as usize;
        if count != data.len() {
            return Err(Error::DimMismatch(format!(
                "tensor `{name}` has {count} values, config implies {}",
                data.len()
            )));
        }
        for (d, c) in data.iter_mut().zip(r.take(4 * count)?.chunks_exact(4)) {
            *d = f32::from_le_bytes(c.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::PayloadLength {
            path: path.to_path_buf(),
            expected: r.pos,
            found: bytes.len(),
        });
    }
    Ok(Checkpoint {
        model,
        cycle: header.cycle,
        rng: header.rng,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, path)
}

/// Compares requested config values (field name, JSON text) against a loaded
/// config. Disagreements are errors unless `force`, in which case the file's
/// values are kept and a warning is logged.
pub fn reconcile_config(file: &ModelConfig, requested: &[(&'static str, String)], force: bool) -> Result<()> {
    let value = serde_json::to_value(file)?;
    for (field, want) in requested {
        let have = value.get(*field).ok_or_else(|| Error::Config(format!("unknown model field `{field}`")))?;
        let want_v: serde_json::Value = serde_json::from_str(want).unwrap_or_else(|_| serde_json::Value::String(want.clone()));
        if *have != want_v {
            if force {
                log::warn!("checkpoint has {field}={have}, ignoring requested {want}");
            } else {
                return Err(Error::ConfigConflict {
                    field,
                    file: have.to_string(),
                    requested: want.clone(),
                });
            }
        }
    }
    Ok(())
}
