use rand::Rng;

use super::camera::Ray;
use crate::field::SplitStrategy;

/// Ordered samples along one ray. Sample `i` sits at `t[i]` inside the
/// segment `[lo[i], lo[i] + delta[i]]`; `gear[i]` is its gear level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    pub t: Vec<f64>,
    pub lo: Vec<f64>,
    pub delta: Vec<f64>,
    pub gear: Vec<usize>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn clear(&mut self) {
        self.t.clear();
        self.lo.clear();
        self.delta.clear();
        self.gear.clear();
    }

    pub fn push(&mut self, t: f64, lo: f64, delta: f64, gear: usize) {
        self.t.push(t);
        self.lo.push(lo);
        self.delta.push(delta);
        self.gear.push(gear);
    }
}

/// `n` samples on the uniform partition of `[t_near, t_far]`: segment
/// midpoints, or one uniformly jittered point per segment when `jitter` is given.
/// Every sample starts at gear 1.
pub fn sample_uniform_into<R: Rng>(ray: &Ray, n: usize, jitter: Option<&mut R>, out: &mut SampleSet) {
    out.clear();
    let n = n.max(1);
    let span = ray.t_far - ray.t_near;
    let step = span / n as f64;
    match jitter {
        None => {
            for i in 0..n {
                let lo = ray.t_near + span * i as f64 / n as f64;
                out.push(lo + 0.5 * step, lo, step, 1);
            }
        }
        Some(rng) => {
            for i in 0..n {
                let lo = ray.t_near + span * i as f64 / n as f64;
                let u: f64 = rng.gen();
                out.push(lo + u * step, lo, step, 1);
            }
        }
    }
}

pub fn sample_uniform<R: Rng>(ray: &Ray, n: usize, jitter: Option<&mut R>) -> SampleSet {
    let mut s = SampleSet::default();
    sample_uniform_into(ray, n, jitter, &mut s);
    s
}

/// Replaces every sample of gear `p` by `strategy.split_count(p)` children at
/// the midpoints of equal sub-segments of its segment. Children inherit the
/// parent's gear.
pub fn gear_split_into(samples: &SampleSet, strategy: SplitStrategy, out: &mut SampleSet) {
    out.clear();
    for i in 0..samples.len() {
        let p = samples.gear[i];
        let count = strategy.split_count(p);
        if count == 1 {
            out.push(samples.t[i], samples.lo[i], samples.delta[i], p);
            continue;
        }
        let d = samples.delta[i] / count as f64;
        for c in 0..count {
            let lo = samples.lo[i] + samples.delta[i] * c as f64 / count as f64;
            out.push(lo + 0.5 * d, lo, d, p);
        }
    }
}

pub fn gear_split(samples: &SampleSet, strategy: SplitStrategy) -> SampleSet {
    let mut out = SampleSet::default();
    gear_split_into(samples, strategy, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ray(t_near: f64, t_far: f64) -> Ray {
        Ray {
            origin: Vec3::ZERO,
            dir: Vec3::new(0.0, 0.0, 1.0),
            t_near,
            t_far,
            time: 0.0,
        }
    }

    #[test]
    fn midpoints() {
        let s = sample_uniform::<ChaCha8Rng>(&ray(0.0, 1.0), 4, None);
        assert_eq!(s.t, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(s.delta, vec![0.25; 4]);
        let s = sample_uniform::<ChaCha8Rng>(&ray(2.0, 5.0), 1, None);
        assert_eq!((s.t[0], s.delta[0]), (3.5, 3.0));
    }

    #[test]
    fn jitter_is_reproducible_and_stratified() {
        let r = ray(1.0, 3.0);
        let a = sample_uniform(&r, 16, Some(&mut ChaCha8Rng::seed_from_u64(5)));
        let b = sample_uniform(&r, 16, Some(&mut ChaCha8Rng::seed_from_u64(5)));
        assert_eq!(a, b);
        for i in 0..16 {
            assert!(a.t[i] >= a.lo[i] && a.t[i] <= a.lo[i] + a.delta[i]);
        }
    }

    #[test]
    fn splitting_counts_and_spacing() {
        let mut s = sample_uniform::<ChaCha8Rng>(&ray(0.0, 1.0), 2, None);
        s.gear = vec![1, 3];
        let out = gear_split(&s, SplitStrategy::Exp2);
        assert_eq!(out.len(), 5);
        assert_eq!(out.t[0], 0.25);
        assert_eq!(&out.t[1..], &[0.5625, 0.6875, 0.8125, 0.9375]);
        s.gear = vec![2, 1];
        assert_eq!(gear_split(&s, SplitStrategy::Exp3).len(), 4);
        assert_eq!(gear_split(&s, SplitStrategy::Linear).len(), 4);
    }
}
