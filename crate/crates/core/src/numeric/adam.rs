use super::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for an ordered list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: &[usize], config: AdamConfig) -> Self {
        Self {
            config,
            first: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
        }
    }

    /// One bias-corrected Adam update of every tensor in `params`.
    pub fn update(&mut self, params: &mut [&mut [T]], grads: &[&[T]], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Config(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[i].len() || g.len() != self.first[i].len() {
                return Err(Error::Config(format!(
                    "adam tensor {i}: expected {} values, got param {} / grad {}",
                    self.first[i].len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        if lr <= 0.0 {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let corr1 = 1.0 - beta1.powi(t);
        let corr2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::of(beta1), T::of(beta2));
        let (ob1, ob2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
        let step_size = T::of(lr / corr1);
        let inv_corr2 = T::of(1.0 / corr2);
        let eps = T::of(eps);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = b1 * m[k] + ob1 * gk;
                v[k] = b2 * v[k] + ob2 * gk * gk;
                p[k] -= step_size * m[k] / ((v[k] * inv_corr2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar Adam written directly from the recurrence.
    fn oracle(p0: f64, grads: &[f64], lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v, mut p) = (0.0, 0.0, p0);
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t));
            let vhat = v / (1.0 - b2.powi(t));
            p -= lr * mhat / (vhat.sqrt() + eps);
        }
        p
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut adam = AdamState::<f64>::new(&[3], AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.0; 3];
        adam.update(&mut [&mut p], &[&g], 0.02).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert!(adam.first[0].iter().chain(&adam.second[0]).all(|&x| x == 0.0));
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = AdamState::<f64>::new(&[1], AdamConfig::default());
        let mut p = vec![0.0];
        adam.update(&mut [&mut p], &[&[1.0]], 0.02).unwrap();
        let expect = -0.02 / (1.0 + 1e-8);
        assert!((p[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn repeated_steps_match_scalar_oracle() {
        let mut adam = AdamState::<f64>::new(&[1], AdamConfig::default());
        let mut p = vec![0.3];
        for _ in 0..2 {
            adam.update(&mut [&mut p], &[&[0.7]], 0.02).unwrap();
        }
        assert!((p[0] - oracle(0.3, &[0.7, 0.7], 0.02)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut adam = AdamState::<f64>::new(&[2], AdamConfig::default());
        let mut p = vec![0.0; 3];
        assert!(matches!(adam.update(&mut [&mut p], &[&[0.0; 3]], 0.02), Err(Error::Config(_))));
        let mut p = vec![0.0; 2];
        assert!(adam.update(&mut [&mut p], &[&[0.0; 2]], 0.0).is_err());
    }
}
