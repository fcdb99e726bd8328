use std::path::Path;

use geared_radiance::field::{GearedModel, ModelConfig, SplitStrategy};
use geared_radiance::geometry::{Aabb, Vec3};
use geared_radiance::io::{
    checkpoint_bytes, checkpoint_from_bytes, decode_ppm, encode_ppm, CameraEntry, Checkpoint, DynamicRegion, FrameEntry, PresetKind, RawTensor,
    RngState, SceneManifest, SynthPreset, SCHEMA_VERSION,
};
use geared_radiance::render::Camera;
use geared_radiance::rle::RleMask;
use geared_radiance::semantic::Mask;
use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg() -> ProptestConfig {
    ProptestConfig::with_cases(1000)
}

fn mask_strategy() -> impl Strategy<Value = Mask> {
    (1usize..40, 1usize..40)
        .prop_flat_map(|(w, h)| proptest::collection::vec(any::<bool>(), w * h).prop_map(move |bits| Mask::from_bits(w, h, bits).unwrap()))
}

fn bits_of(m: &GearedModel<f32>) -> Vec<(String, Vec<u32>)> {
    m.tensors()
        .into_iter()
        .map(|(n, _, d)| (n, d.iter().map(|v| v.to_bits()).collect()))
        .collect()
}

fn micro_config(rng: &mut ChaCha8Rng) -> ModelConfig {
    let lo = Vec3::new(rng.gen_range(-2.0..0.0), rng.gen_range(-2.0..0.0), rng.gen_range(-2.0..0.0));
    ModelConfig {
        n_gear: rng.gen_range(1..4),
        feature_dim: rng.gen_range(1..5),
        semantic_dim: rng.gen_range(1..4),
        spatial_res: rng.gen_range(2..5),
        frame_count: rng.gen_range(1..6),
        bounds: Aabb::new(
            lo,
            lo + Vec3::new(rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0)),
        ),
        split: [SplitStrategy::Exp2, SplitStrategy::Exp3, SplitStrategy::Linear][rng.gen_range(0..3)],
        motion_aware_sampling: rng.gen(),
        samples_per_ray: rng.gen_range(1..100),
        dir_freqs: rng.gen_range(1..3),
        hidden: (0..rng.gen_range(0..3)).map(|_| rng.gen_range(1..5)).collect(),
        temporal_override: rng.gen::<bool>().then(|| rng.gen_range(1..4)),
        gear_time_res: rng.gen::<bool>().then(|| rng.gen_range(1..4)),
        gear_init: rng.gen_range(0.5..3.0),
        gear_plane_scale: rng.gen_range(0.1..2.0),
        seed: rng.gen(),
        near: rng.gen_range(0.0..0.5),
        far: rng.gen_range(1.0..100.0),
    }
}

fn random_camera(rng: &mut ChaCha8Rng) -> Camera {
    let eye = Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(0.5..5.0), rng.gen_range(-5.0..5.0));
    let (w, h) = (rng.gen_range(1..200), rng.gen_range(1..200));
    Camera::look_at(
        eye,
        Vec3::new(rng.gen_range(-0.5..0.5), 0.0, rng.gen_range(-0.5..0.5)),
        Vec3::new(0.0, 1.0, 0.0),
        rng.gen_range(0.2..2.0),
        w,
        h,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn rle_round_trip(mask in mask_strategy()) {
        let rle = RleMask::encode(&mask);
        prop_assert!(rle.validate().is_ok());
        prop_assert_eq!(rle.foreground() as usize, mask.count());
        prop_assert_eq!(&rle.decode().unwrap(), &mask);
        let json = serde_json::to_string(&rle).unwrap();
        let back: RleMask = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, rle);
    }

    #[test]
    fn ppm_round_trip(w in 1usize..50, h in 1usize..50, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rgb = vec![0u8; w * h * 3];
        rng.fill_bytes(&mut rgb);
        let bytes = encode_ppm(w, h, &rgb);
        let (w2, h2, back) = decode_ppm(&bytes, Path::new("p.ppm")).unwrap();
        prop_assert_eq!((w2, h2), (w, h));
        prop_assert_eq!(back, rgb);
    }

    #[test]
    fn raw_tensor_round_trip(dims in proptest::collection::vec(1u32..9, 1..4), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: u32 = dims.iter().product();
        // arbitrary bit patterns, NaNs and infinities included
        let data: Vec<f32> = (0..n).map(|_| f32::from_bits(rng.next_u32())).collect();
        let t = RawTensor::new(dims.clone(), data.clone()).unwrap();
        let bytes = t.to_bytes();
        let back = RawTensor::from_bytes(&bytes, Path::new("t.gnrf")).unwrap();
        prop_assert_eq!(&back.dims, &dims);
        prop_assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = GearedModel::<f32>::new(micro_config(&mut rng)).unwrap();
        for (_, _, d) in model.tensors_mut() {
            d.iter_mut().for_each(|v| *v = f32::from_bits(rng.next_u32()));
        }
        let mut state = ChaCha8Rng::seed_from_u64(rng.gen());
        state.set_stream(rng.gen());
        for _ in 0..rng.gen_range(0..50) {
            state.next_u32();
        }
        let ck = Checkpoint { model, cycle: rng.gen_range(0..1000), rng: rng.gen::<bool>().then(|| RngState::capture(&state)) };
        let bytes = checkpoint_bytes(&ck).unwrap();
        let back = checkpoint_from_bytes(&bytes, Path::new("m.gnck")).unwrap();
        prop_assert_eq!(back.model.config(), ck.model.config());
        prop_assert_eq!(bits_of(&back.model), bits_of(&ck.model));
        prop_assert_eq!(back.cycle, ck.cycle);
        prop_assert_eq!(&back.rng, &ck.rng);
        if let Some(r) = &back.rng {
            let mut restored = r.restore().unwrap();
            prop_assert_eq!(restored.next_u64(), state.clone().next_u64());
        }
        prop_assert_eq!(checkpoint_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn manifest_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = rng.gen_range(1..5);
        let cameras: Vec<CameraEntry> = (0..rng.gen_range(1..4))
            .map(|k| CameraEntry { id: format!("c{k}"), camera: random_camera(&mut rng), holdout: rng.gen() })
            .collect();
        let entries = cameras
            .iter()
            .flat_map(|c| (0..frames).map(move |t| (c.id.clone(), t)))
            .map(|(id, t)| FrameEntry {
                rgb: format!("rgb/{id}_{t}.ppm"),
                features: format!("features/{id}_{t}.gnrf"),
                object_ids: rng.gen::<bool>().then(|| format!("ids/{id}_{t}.gnrf")),
                depth: None,
                camera: id,
                time: t,
            })
            .collect();
        let dim = rng.gen_range(1..5);
        let mut preset = SynthPreset::new([PresetKind::OrbitingSphere, PresetKind::StaticBox, PresetKind::TwoObjects][rng.gen_range(0..3)]);
        preset.seed = rng.gen();
        preset.ambient = rng.gen();
        let m = SceneManifest {
            schema_version: SCHEMA_VERSION,
            frame_count: frames,
            bounds: Aabb::new(Vec3::new(-rng.gen::<f64>(), -1.0, -1.0), Vec3::new(rng.gen(), 1.0, 1.0)),
            semantic_dim: dim,
            cameras,
            frames: entries,
            prototypes: (0..rng.gen_range(0..4)).map(|_| (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect(),
            preset: rng.gen::<bool>().then_some(preset),
            dynamic: (0..rng.gen_range(0..3)).map(|t| DynamicRegion { time: t, center: [rng.gen(), rng.gen(), rng.gen()], radius: rng.gen() }).collect(),
        };
        let text = serde_json::to_string_pretty(&m).unwrap();
        let back: SceneManifest = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
    }
}
