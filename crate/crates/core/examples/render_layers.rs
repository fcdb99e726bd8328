//! Renders every layer (color, semantic, depth, gear) of a novel view and
//! scores the color against the analytic image.

mod common;

use geared_radiance::io::{Image, PresetKind};
use geared_radiance::metrics::{psnr, ssim};
use geared_radiance::render::{render_layers, LayerSet, MarchSettings};

fn main() {
    let dir = common::out_dir("render");
    let (_, scene) = common::small_scene(PresetKind::OrbitingSphere, &dir.join("scene"));
    let model = common::quick_model(&scene);
    let view = scene.holdout_views()[0];
    let settings = MarchSettings::new(model.config().samples_per_ray);
    for t in [0, 4] {
        let r = render_layers(&model, scene.camera(view), t as f64, LayerSet::all(), 1, &settings);
        let pred = Image::new(r.width, r.height, r.rgb.clone().unwrap()).unwrap();
        let truth = scene.rgb(view, t).unwrap();
        println!(
            "t={t}: PSNR {:.2} dB, SSIM {:.3}",
            psnr(&pred, &truth, 1.0).unwrap(),
            ssim(&pred, &truth).unwrap()
        );
        for (layer, bytes) in r.encode() {
            let path = dir.join(format!("t{t}_{}.{}", layer.name(), layer.file_extension()));
            std::fs::write(&path, bytes).unwrap();
            println!("  {}", path.display());
        }
    }
}
