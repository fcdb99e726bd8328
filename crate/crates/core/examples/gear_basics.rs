//! Gear levels, per-gear temporal resolution and point splitting along one ray.

use geared_radiance::field::{project_gear, temporal_resolution, SplitStrategy};
use geared_radiance::geometry::{Aabb, Vec3};
use geared_radiance::render::{gear_split, sample_uniform, Camera};
use rand_chacha::ChaCha8Rng;

fn main() {
    let n_gear = 4;
    for g in [-5.0, 0.5, 1.2, 2.3, 3.7, 9.0] {
        println!("g = {g:>4} -> gear {}", project_gear(g, n_gear));
    }
    let frames = 24;
    let res: Vec<usize> = (1..=n_gear).map(|p| temporal_resolution(p, frames, n_gear)).collect();
    println!("temporal resolution per gear over {frames} frames: {res:?}");

    for s in [SplitStrategy::Exp2, SplitStrategy::Exp3, SplitStrategy::Linear] {
        let counts: Vec<usize> = (1..=n_gear).map(|p| s.split_count(p)).collect();
        println!("{s:?} children per sample: {counts:?}");
    }

    // eight coarse samples, the middle four promoted to gear 3
    let cam = Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), 1.0, 16, 16).unwrap();
    let bounds = Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0));
    let ray = cam.generate_ray(8.0, 8.0, 0.0, &bounds, 0.0, 10.0).unwrap();
    let mut coarse = sample_uniform(&ray, 8, None::<&mut ChaCha8Rng>);
    for g in &mut coarse.gear[2..6] {
        *g = 3;
    }
    let fine = gear_split(&coarse, SplitStrategy::Exp2);
    let total = |d: &[f64]| d.iter().sum::<f64>();
    println!(
        "{} samples -> {} after splitting; summed spacing {:.6} == {:.6}",
        coarse.len(),
        fine.len(),
        total(&coarse.delta),
        total(&fine.delta)
    );
}
