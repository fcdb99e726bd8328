//! A miniature sampling ablation: the full model against single-volume
//! temporal baselines and uniform sampling, all with one seed and budget.

mod common;

use geared_radiance::cli::{ablation_table, apply_ablation, evaluate, train_to_dir, AblationAxis, AblationRow};
use geared_radiance::io::PresetKind;
use geared_radiance::train::TrainConfig;

fn main() {
    let dir = common::out_dir("ablate");
    let (_, scene) = common::small_scene(PresetKind::OrbitingSphere, &dir.join("scene"));
    let base_train = TrainConfig {
        rays_per_epoch: Some(8192),
        batch_rays: 512,
        epochs_per_cycle: 2,
        final_epochs: 2,
        max_cycles: 2,
        ..TrainConfig::default()
    };
    let mut rows = Vec::new();
    for value in ["motion-aware", "dense-temporal", "medium-temporal", "uniform-64"] {
        let (mut m, mut t) = (common::small_config(&scene), base_train.clone());
        apply_ablation(AblationAxis::Sampling, value, &mut m, &mut t).unwrap();
        let (model, summary) = train_to_dir(&scene, m, t, &dir.join(value)).unwrap();
        let report = evaluate(&model, &scene, &scene.holdout_views(), 1).unwrap();
        rows.push(AblationRow {
            value: value.into(),
            psnr: report.mean_psnr,
            ssim: report.mean_ssim,
            lpips: report.lpips,
            train_seconds: summary.seconds,
            cycles: summary.cycles,
            gear_histogram: summary.gear_histogram,
        });
    }
    print!("{}", ablation_table(AblationAxis::Sampling, &rows));
}
