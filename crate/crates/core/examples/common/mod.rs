#![allow(dead_code)]

use std::path::{Path, PathBuf};

use geared_radiance::field::{GearedModel, ModelConfig};
use geared_radiance::io::{load_scene, synth_scene, PresetKind, SceneDataset, SynthPreset};
use geared_radiance::train::{TrainConfig, Trainer};

/// Output directory from the first argument, or a fresh one under the system temp dir.
pub fn out_dir(name: &str) -> PathBuf {
    let d = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("gear-examples/{name}")));
    std::fs::create_dir_all(&d).unwrap();
    d
}

pub fn small_preset(kind: PresetKind) -> SynthPreset {
    let mut p = SynthPreset::new(kind);
    p.width = 32;
    p.height = 32;
    p.frames = 8;
    p
}

/// Synthesizes (or reuses) a 32x32, 8-frame scene under `dir`.
pub fn small_scene(kind: PresetKind, dir: &Path) -> (SynthPreset, SceneDataset) {
    let p = small_preset(kind);
    let scene = match load_scene(dir) {
        Ok(s) if s.manifest.preset.as_ref() == Some(&p) => s,
        _ => synth_scene(&p, dir).unwrap(),
    };
    (p, scene)
}

pub fn small_config(scene: &SceneDataset) -> ModelConfig {
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

/// A few plain epochs, enough for recognizable renders and masks.
pub fn quick_model(scene: &SceneDataset) -> GearedModel<f32> {
    let cfg = TrainConfig {
        rays_per_epoch: Some(16384),
        batch_rays: 512,
        ..TrainConfig::default()
    };
    let mut tr = Trainer::new(GearedModel::new(small_config(scene)).unwrap(), scene, cfg).unwrap();
    for _ in 0..8 {
        let loss = tr.run_epoch().unwrap();
        log::info!("epoch loss {loss:.5}");
    }
    tr.model
}
