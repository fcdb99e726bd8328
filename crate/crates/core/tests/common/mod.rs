#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use geared_radiance::field::{GearedModel, ModelConfig};
use geared_radiance::io::{save_checkpoint, synth_scene, Checkpoint, PresetKind, SceneDataset, SynthPreset};
use geared_radiance::train::{TrainConfig, Trainer};

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub preset: SynthPreset,
    pub scene: SceneDataset,
    pub model: GearedModel<f32>,
    pub ckpt: PathBuf,
}

pub fn small_preset(kind: PresetKind) -> SynthPreset {
    let mut p = SynthPreset::new(kind);
    p.width = 32;
    p.height = 32;
    p.frames = 8;
    p
}

pub fn small_model_config(scene: &SceneDataset) -> ModelConfig {
    ModelConfig {
        n_gear: 2,
        feature_dim: 8,
        spatial_res: 24,
        samples_per_ray: 32,
        hidden: vec![32],
        frame_count: scene.frame_count(),
        bounds: scene.bounds(),
        semantic_dim: scene.semantic_dim(),
        ..ModelConfig::default()
    }
}

/// A briefly trained orbiting-sphere model shared by the integration tests.
/// Gear updates are skipped so the fixture stays cheap.
pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let preset = small_preset(PresetKind::OrbitingSphere);
        let scene = synth_scene(&preset, &dir.path().join("scene")).unwrap();
        let cfg = TrainConfig {
            rays_per_epoch: Some(16384),
            batch_rays: 512,
            ..TrainConfig::default()
        };
        let mut tr = Trainer::new(GearedModel::new(small_model_config(&scene)).unwrap(), &scene, cfg).unwrap();
        for _ in 0..8 {
            tr.run_epoch().unwrap();
        }
        let model = tr.model;
        let ckpt = dir.path().join("model.gnck");
        save_checkpoint(
            &Checkpoint {
                model: model.clone(),
                cycle: 0,
                rng: None,
            },
            &ckpt,
        )
        .unwrap();
        Fixture {
            dir,
            preset,
            scene,
            model,
            ckpt,
        }
    })
}

pub fn scene_dir() -> PathBuf {
    fixture().dir.path().join("scene")
}

/// Sphere pixel nearest the sphere's silhouette centroid in `view` at `time`.
pub fn sphere_pixel(scene: &SceneDataset, view: usize, time: usize) -> (usize, usize) {
    let ids = scene.object_ids(view, time).unwrap().unwrap();
    let w = scene.camera(view).width;
    let on: Vec<(usize, usize)> = (0..ids.len())
        .filter(|&i| ids[i] == geared_radiance::io::ID_SPHERE)
        .map(|i| (i % w, i / w))
        .collect();
    assert!(!on.is_empty(), "sphere not visible");
    let cx = on.iter().map(|p| p.0 as f64).sum::<f64>() / on.len() as f64;
    let cy = on.iter().map(|p| p.1 as f64).sum::<f64>() / on.len() as f64;
    *on.iter()
        .min_by(|a, b| {
            let d = |p: &&(usize, usize)| (p.0 as f64 - cx).powi(2) + (p.1 as f64 - cy).powi(2);
            d(a).total_cmp(&d(b))
        })
        .unwrap()
}
