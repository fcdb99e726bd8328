use crate::numeric::Real;

/// Output of alpha compositing along one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct Composite<T> {
    pub color: [T; 3],
    pub semantic: Vec<T>,
    /// `w_i = T_i α_i` per sample.
    pub weights: Vec<T>,
    /// `T_i`, the transmittance in front of sample `i`.
    pub transmittance: Vec<T>,
    /// Transmittance left after the last sample.
    pub t_final: T,
}

impl<T: Real> Composite<T> {
    pub fn weight_sum(&self) -> T {
        self.weights.iter().copied().sum()
    }
}

/// Standard emission-absorption compositing. `semantic` holds `n × dim`
/// values; `background` is added on the residual transmittance.
pub fn composite<T: Real>(sigma: &[T], delta: &[T], color: &[[T; 3]], semantic: &[T], dim: usize, background: [T; 3]) -> Composite<T> {
    let n = sigma.len();
    let mut out = Composite {
        color: [T::zero(); 3],
        semantic: vec![T::zero(); dim],
        weights: Vec::with_capacity(n),
        transmittance: Vec::with_capacity(n),
        t_final: T::one(),
    };
    let mut optical = T::zero();
    for i in 0..n {
        let ti = (-optical).exp();
        optical += sigma[i] * delta[i];
        let next = (-optical).exp();
        // w_i = T_i − T_{i+1} keeps Σw + T_final telescoping exactly
        let w = ti - next;
        out.transmittance.push(ti);
        out.weights.push(w);
        for c in 0..3 {
            out.color[c] += w * color[i][c];
        }
        for (s, &v) in out.semantic.iter_mut().zip(&semantic[i * dim..(i + 1) * dim]) {
            *s += w * v;
        }
        out.t_final = next;
    }
    for c in 0..3 {
        out.color[c] += out.t_final * background[c];
    }
    out
}

/// Gradient of `⟨dc, Ĉ⟩ + ⟨ds, Ŝ⟩` with respect to the densities, given the
/// per-sample scalars `e_i = ⟨dc, c_i⟩ + ⟨ds, s_i⟩` and `e_bg = ⟨dc, bg⟩`.
/// Colors and semantics receive `w_i · dc` and `w_i · ds` directly.
pub fn composite_sigma_grad<T: Real>(delta: &[T], weights: &[T], transmittance: &[T], t_final: T, e: &[T], e_bg: T, d_sigma: &mut [T]) {
    let n = weights.len();
    let mut suffix = t_final * e_bg;
    for i in (0..n).rev() {
        let t_next = if i + 1 < n { transmittance[i + 1] } else { t_final };
        d_sigma[i] = delta[i] * (t_next * e[i] - suffix);
        suffix += weights[i] * e[i];
    }
}

/// Depth of the first sample whose exit transmittance falls below one half;
/// otherwise the weight-averaged depth when enough mass is present.
pub fn estimate_depth<T: Real>(t: &[f64], weights: &[T], transmittance: &[T], t_final: T) -> Option<f64> {
    let n = weights.len();
    for i in 0..n {
        let t_next = if i + 1 < n { transmittance[i + 1] } else { t_final };
        if t_next.as_f64() < 0.5 {
            return Some(t[i]);
        }
    }
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    if total > 0.05 {
        Some(weights.iter().zip(t).map(|(w, t)| w.as_f64() * t).sum::<f64>() / total)
    } else {
        None
    }
}
