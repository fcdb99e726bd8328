//! Clicks the sphere in one view, then follows it into another view and
//! across time, scoring each mask against the analytic object ids.

mod common;

use geared_radiance::io::{PresetKind, ID_SPHERE};
use geared_radiance::metrics::mask_metrics;
use geared_radiance::render::MarchSettings;
use geared_radiance::semantic::{Mask, DEFAULT_TAU_SIM};
use geared_radiance::track::{project_to_pixel, TrackSession};

fn main() {
    let dir = common::out_dir("track");
    let (preset, scene) = common::small_scene(PresetKind::OrbitingSphere, &dir.join("scene"));
    let model = common::quick_model(&scene);
    let settings = MarchSettings::new(model.config().samples_per_ray);
    let cam0 = scene.camera(0);
    let px = project_to_pixel(cam0, preset.dynamic_region(0.0).unwrap().0).unwrap();
    let mut session = TrackSession::click(1, &model, cam0, 0, px, DEFAULT_TAU_SIM, &settings).unwrap();
    println!("click {px:?} lifts to {:?}", session.anchor);
    let truth = |v: usize, t: usize| {
        let ids = scene.object_ids(v, t).unwrap().unwrap();
        Mask::from_bits(cam0.width, cam0.height, ids.iter().map(|&i| i == ID_SPHERE).collect()).unwrap()
    };
    let e = session.mask_at_view(&model, scene.camera(1), &settings).unwrap();
    let (iou, acc) = mask_metrics(&e.mask, &truth(1, 0)).unwrap();
    println!("cam01 t=0: {:?}, IoU {iou:.3}, accuracy {acc:.3}", e.status);
    for t in 1..scene.frame_count() {
        let e = session.query(&model, cam0, t, &settings).unwrap();
        let (iou, acc) = mask_metrics(&e.mask, &truth(0, t)).unwrap();
        println!("cam00 t={t}: {:?}, {} px, IoU {iou:.3}, accuracy {acc:.3}", e.status, e.mask.count());
    }
    println!("{:?}", session.counters);
}
