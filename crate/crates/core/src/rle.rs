//! Run-length encoded binary masks used by the render service.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semantic::Mask;

/// Runs of foreground pixels in row-major order as `[start, length]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: u32,
    pub height: u32,
    pub runs: Vec<[u32; 2]>,
}

impl RleMask {
    pub fn encode(mask: &Mask) -> Self {
        let mut runs: Vec<[u32; 2]> = Vec::new();
        let mut i = 0;
        let n = mask.bits.len();
        while i < n {
            if mask.bits[i] {
                let start = i;
                while i < n && mask.bits[i] {
                    i += 1;
                }
                runs.push([start as u32, (i - start) as u32]);
            } else {
                i += 1;
            }
        }
        Self {
            width: mask.width as u32,
            height: mask.height as u32,
            runs,
        }
    }

    /// Checks ordering and bounds: runs are non-empty, sorted, disjoint and
    /// non-adjacent, and inside the image.
    pub fn validate(&self) -> Result<()> {
        let total = self.width as u64 * self.height as u64;
        let mut end = 0u64;
        for (k, &[start, len]) in self.runs.iter().enumerate() {
            let (s, l) = (start as u64, len as u64);
            if l == 0 {
                return Err(Error::Contract(format!("run {k} is empty")));
            }
            if k > 0 && s <= end {
                return Err(Error::Contract(format!("run {k} overlaps or touches its predecessor")));
            }
            end = s + l;
            if end > total {
                return Err(Error::Contract(format!("run {k} ends at {end}, beyond {total} pixels")));
            }
        }
        Ok(())
    }

    pub fn decode(&self) -> Result<Mask> {
        self.validate()?;
        let mut mask = Mask::empty(self.width as usize, self.height as usize);
        for &[start, len] in &self.runs {
            mask.bits[start as usize..(start + len) as usize].fill(true);
        }
        Ok(mask)
    }

    pub fn foreground(&self) -> u64 {
        self.runs.iter().map(|r| r[1] as u64).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_vector() {
        let bits = [0, 1, 1, 0, 0, 0, 1, 1, 1, 1, 0, 1].map(|b| b == 1).to_vec();
        let m = Mask::from_bits(4, 3, bits).unwrap();
        let r = RleMask::encode(&m);
        assert_eq!(r.runs, vec![[1, 2], [6, 4], [11, 1]]);
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"width":4,"height":3,"runs":[[1,2],[6,4],[11,1]]}"#
        );
        assert_eq!(r.decode().unwrap(), m);
    }

    #[test]
    fn rejects_bad_runs() {
        let bad = |runs: Vec<[u32; 2]>| RleMask { width: 4, height: 2, runs }.decode().is_err();
        assert!(bad(vec![[0, 0]]));
        assert!(bad(vec![[3, 2], [4, 1]]));
        assert!(bad(vec![[0, 2], [2, 1]]));
        assert!(bad(vec![[6, 3]]));
        assert!(!bad(vec![[0, 2], [3, 5]]));
    }
}
