//! On-disk formats and the synthetic scene generator.

pub mod checkpoint;
pub mod dataset;
pub mod image;
pub mod synth;
pub mod tensor;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, reconcile_config, save_checkpoint, Checkpoint, RngState, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use dataset::{
    load_scene, synth_scene, write_manifest, CameraEntry, DynamicRegion, FrameEntry, SceneDataset, SceneManifest, MANIFEST_NAME, SCHEMA_VERSION,
};
pub use image::{decode_ppm, encode_ppm, quantize, read_ppm, write_ppm, write_ppm_rgb8, Image};
pub use synth::{oracle_render, OracleFrame, PresetKind, SynthPreset, ID_BACKGROUND, ID_BOX, ID_FLOOR, ID_SPHERE};
pub use tensor::RawTensor;
