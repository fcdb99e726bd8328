//! Synthesizes the moving-sphere preset and inspects its analytic ground truth.
//!
//! `cargo run --release --example synth_scene [out-dir]`

mod common;

use geared_radiance::io::{synth_scene, PresetKind, SynthPreset, ID_SPHERE};

fn main() {
    let dir = common::out_dir("synth");
    let preset = SynthPreset::new(PresetKind::OrbitingSphere);
    let scene = synth_scene(&preset, &dir).unwrap();
    println!(
        "{} cameras x {} frames at {}x{} -> {}",
        scene.cameras().len(),
        scene.frame_count(),
        preset.width,
        preset.height,
        dir.display()
    );
    for c in scene.cameras() {
        println!("  {}{} center {:?}", c.id, if c.holdout { " (holdout)" } else { "" }, c.camera.center());
    }
    for t in [0, 6, 12, 18] {
        let (center, radius) = preset.dynamic_region(t as f64).unwrap();
        let ids = scene.object_ids(0, t).unwrap().unwrap();
        let on = ids.iter().filter(|&&i| i == ID_SPHERE).count();
        println!("t={t:>2}: sphere at {center:?} r={radius}, {on} sphere pixels in cam00");
    }
    // every camera ray gets an exact surface hit from the oracle
    let cam = scene.camera(0);
    let dir0 = cam.pixel_direction(32.0, 40.0);
    if let Some(hit) = preset.trace(cam.center(), dir0, 0.0) {
        println!("pixel (32, 40) of cam00 hits object {} at depth {:.3}", hit.id, hit.t);
    }
}
