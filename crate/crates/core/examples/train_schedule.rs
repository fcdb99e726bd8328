//! Runs the alternating schedule (fit, gear update, repeat until the loss
//! variance settles) on a small scene and saves a checkpoint.
//!
//! `RUST_LOG=info cargo run --release --example train_schedule [out-dir]`

mod common;

use geared_radiance::cli::{evaluate, train_to_dir};
use geared_radiance::io::PresetKind;
use geared_radiance::train::TrainConfig;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let dir = common::out_dir("train");
    let (_, scene) = common::small_scene(PresetKind::OrbitingSphere, &dir.join("scene"));
    let train = TrainConfig {
        rays_per_epoch: Some(16384),
        batch_rays: 512,
        epochs_per_cycle: 2,
        final_epochs: 4,
        max_cycles: 3,
        ..TrainConfig::default()
    };
    let (model, summary) = train_to_dir(&scene, common::small_config(&scene), train, &dir.join("run")).unwrap();
    println!(
        "{} cycles ({:?}), {:.0}s, gear occupancy {:?}",
        summary.cycles, summary.termination, summary.seconds, summary.gear_histogram
    );
    let report = evaluate(&model, &scene, &scene.holdout_views(), 2).unwrap();
    println!("holdout PSNR {:.2} dB, SSIM {:.3}", report.mean_psnr, report.mean_ssim);
    println!("checkpoint and log in {}", dir.join("run").display());
}
