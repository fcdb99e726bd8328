use rand::Rng;

use super::{LinearMap, Real};
use crate::error::{Error, Result};

/// Raw (pre-activation) network heads.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpOutput<T> {
    pub sigma_raw: T,
    pub color_raw: [T; 3],
    pub semantic: Vec<T>,
}

/// Small ReLU network mapping `feature ⊕ direction encoding` to
/// `(density, rgb, semantic)` heads packed as `1 + 3 + semantic_dim` outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyMlp<T> {
    feature_dim: usize,
    dir_dim: usize,
    semantic_dim: usize,
    layers: Vec<LinearMap<T>>,
}

impl<T: Real> TinyMlp<T> {
    pub fn new<R: Rng>(feature_dim: usize, dir_dim: usize, hidden: &[usize], semantic_dim: usize, rng: &mut R) -> Result<Self> {
        let mut widths = vec![feature_dim + dir_dim];
        widths.extend_from_slice(hidden);
        widths.push(4 + semantic_dim);
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let gain = if i + 1 < n { 6.0 } else { 3.0 };
                LinearMap::fan_in_uniform(widths[i], widths[i + 1], gain, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(feature_dim, dir_dim, semantic_dim, layers)
    }

    pub fn from_layers(feature_dim: usize, dir_dim: usize, semantic_dim: usize, layers: Vec<LinearMap<T>>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::Config("mlp needs at least one layer".into()))?;
        if first.in_dim() != feature_dim + dir_dim {
            return Err(Error::Config(format!(
                "mlp input width {} != feature {} + direction {}",
                first.in_dim(),
                feature_dim,
                dir_dim
            )));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Config("mlp layer widths do not chain".into()));
            }
        }
        if layers.last().map(|l| l.out_dim()) != Some(4 + semantic_dim) {
            return Err(Error::Config(format!("mlp output width must be 4 + {semantic_dim}")));
        }
        Ok(Self {
            feature_dim,
            dir_dim,
            semantic_dim,
            layers,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            feature_dim: self.feature_dim,
            dir_dim: self.dir_dim,
            semantic_dim: self.semantic_dim,
            layers: self.layers.iter().map(LinearMap::zeros_like).collect(),
        }
    }

    pub fn layers(&self) -> &[LinearMap<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LinearMap<T>] {
        &mut self.layers
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn dir_dim(&self) -> usize {
        self.dir_dim
    }

    pub fn semantic_dim(&self) -> usize {
        self.semantic_dim
    }

    pub fn input_dim(&self) -> usize {
        self.feature_dim + self.dir_dim
    }

    pub fn output_dim(&self) -> usize {
        4 + self.semantic_dim
    }

    /// Length of the activation buffer used by [`Self::forward_in_place`]:
    /// the input followed by every layer's (post-activation) output.
    pub fn activation_len(&self) -> usize {
        self.input_dim() + self.layers.iter().map(|l| l.out_dim()).sum::<usize>()
    }

    /// Runs the network over `acts`, whose first `input_dim` entries hold the
    /// input. Hidden layers apply ReLU; the last layer is linear.
    #[inline]
    pub fn forward_in_place(&self, acts: &mut [T]) {
        let mut start = 0;
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let (head, tail) = acts.split_at_mut(start + layer.in_dim());
            let x = &head[start..];
            let y = &mut tail[..layer.out_dim()];
            layer.forward_into(x, y);
            if i + 1 < n {
                for v in y.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
            start += layer.in_dim();
        }
    }

    /// Output slice of an activation buffer filled by `forward_in_place`.
    #[inline]
    pub fn output<'a>(&self, acts: &'a [T]) -> &'a [T] {
        &acts[acts.len() - self.output_dim()..]
    }

    /// Back-propagates `d_out` through the network. Parameter gradients are
    /// accumulated into `grad`; the input gradient is written to `d_input`.
    /// `scratch` must hold at least `2 * max width` values.
    pub fn backward(&self, acts: &[T], d_out: &[T], grad: &mut Self, d_input: &mut [T], scratch: &mut [T]) {
        let max_w = self.max_width();
        let (cur, next) = scratch.split_at_mut(max_w);
        cur[..d_out.len()].copy_from_slice(d_out);
        let mut offset = acts.len() - d_out.len();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            offset -= layer.in_dim();
            let x = &acts[offset..offset + layer.in_dim()];
            let dy = &cur[..layer.out_dim()];
            if i == 0 {
                layer.backward(x, dy, &mut grad.layers[i], Some(&mut d_input[..layer.in_dim()]));
            } else {
                let dx = &mut next[..layer.in_dim()];
                layer.backward(x, dy, &mut grad.layers[i], Some(dx));
                // x is the ReLU output of layer i-1
                for (d, &xv) in dx.iter_mut().zip(x) {
                    if xv <= T::zero() {
                        *d = T::zero();
                    }
                }
                cur[..layer.in_dim()].copy_from_slice(&next[..layer.in_dim()]);
            }
        }
    }

    /// Checked forward pass on separate feature and direction inputs.
    pub fn forward(&self, feature: &[T], dir_encoding: &[T]) -> Result<MlpOutput<T>> {
        if feature.len() != self.feature_dim || dir_encoding.len() != self.dir_dim {
            return Err(Error::Config(format!(
                "mlp expects feature {} + direction {}, got {} + {}",
                self.feature_dim,
                self.dir_dim,
                feature.len(),
                dir_encoding.len()
            )));
        }
        let mut acts = vec![T::zero(); self.activation_len()];
        acts[..self.feature_dim].copy_from_slice(feature);
        acts[self.feature_dim..self.input_dim()].copy_from_slice(dir_encoding);
        self.forward_in_place(&mut acts);
        Ok(split_heads(self.output(&acts)))
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(LinearMap::is_finite)
    }

    pub fn max_width(&self) -> usize {
        self.layers.iter().map(|l| l.in_dim().max(l.out_dim())).max().unwrap_or(0)
    }
}

pub(crate) fn split_heads<T: Real>(out: &[T]) -> MlpOutput<T> {
    MlpOutput {
        sigma_raw: out[0],
        color_raw: [out[1], out[2], out[3]],
        semantic: out[4..].to_vec(),
    }
}
