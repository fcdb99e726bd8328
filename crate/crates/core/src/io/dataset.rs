use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::{read_ppm, write_ppm, Image};
use super::synth::{object_prototypes, oracle_render, SynthPreset, OBJECT_COUNT};
use super::tensor::RawTensor;
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::render::Camera;
use crate::semantic::{prototype_features, FeatureMap};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "scene.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub id: String,
    pub camera: Camera,
    #[serde(default)]
    pub holdout: bool,
}

/// Files for one (camera, time) pair, relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub camera: String,
    pub time: usize,
    pub rgb: String,
    pub features: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_ids: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
}

/// Bounding sphere of the moving content at one time step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicRegion {
    pub time: usize,
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub schema_version: u32,
    pub frame_count: usize,
    pub bounds: Aabb,
    pub semantic_dim: usize,
    pub cameras: Vec<CameraEntry>,
    pub frames: Vec<FrameEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prototypes: Vec<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<SynthPreset>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dynamic: Vec<DynamicRegion>,
}

/// Validated scene; frame payloads are read on demand.
#[derive(Clone, Debug)]
pub struct SceneDataset {
    pub root: PathBuf,
    pub manifest: SceneManifest,
    index: HashMap<(usize, usize), usize>,
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    }
}

/// Reads and validates a manifest (or a directory holding `scene.json`).
pub fn load_scene(path: &Path) -> Result<SceneDataset> {
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: SceneManifest = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: mpath.clone(),
        reason: e.to_string(),
    })?;
    let root = mpath.parent().map(Path::to_path_buf).unwrap_or_default();
    SceneDataset::from_manifest(root, manifest, &mpath)
}

impl SceneDataset {
    fn from_manifest(root: PathBuf, manifest: SceneManifest, mpath: &Path) -> Result<Self> {
        let malformed = |reason: String| Error::Malformed {
            path: mpath.to_path_buf(),
            reason,
        };
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::UnsupportedVersion {
                what: "scene manifest",
                path: mpath.to_path_buf(),
                found: manifest.schema_version,
                supported: SCHEMA_VERSION,
            });
        }
        let mut ids = HashMap::new();
        for (i, c) in manifest.cameras.iter().enumerate() {
            c.camera.validate(1e-6).map_err(|e| malformed(format!("camera `{}`: {e}", c.id)))?;
            if ids.insert(c.id.clone(), i).is_some() {
                return Err(malformed(format!("duplicate camera id `{}`", c.id)));
            }
        }
        let mut index = HashMap::new();
        for (k, f) in manifest.frames.iter().enumerate() {
            let cam = *ids
                .get(&f.camera)
                .ok_or_else(|| malformed(format!("frame {k} names unknown camera `{}`", f.camera)))?;
            if f.time >= manifest.frame_count {
                return Err(malformed(format!("frame {k} time {} ≥ frame count {}", f.time, manifest.frame_count)));
            }
            if index.insert((cam, f.time), k).is_some() {
                return Err(malformed(format!("duplicate frame ({}, {})", f.camera, f.time)));
            }
            let files = [
                ("rgb image", Some(&f.rgb)),
                ("feature map", Some(&f.features)),
                ("object-id map", f.object_ids.as_ref()),
                ("depth map", f.depth.as_ref()),
            ];
            for (what, rel) in files {
                if let Some(rel) = rel {
                    let p = root.join(rel);
                    if !p.is_file() {
                        return Err(Error::MissingFrame {
                            what,
                            camera: f.camera.clone(),
                            time: f.time,
                            path: p,
                        });
                    }
                }
            }
        }
        if !manifest.prototypes.is_empty() && manifest.prototypes.iter().any(|p| p.len() != manifest.semantic_dim) {
            return Err(malformed("prototype width differs from semantic_dim".into()));
        }
        Ok(Self { root, manifest, index })
    }

    pub fn frame_count(&self) -> usize {
        self.manifest.frame_count
    }

    pub fn semantic_dim(&self) -> usize {
        self.manifest.semantic_dim
    }

    pub fn bounds(&self) -> Aabb {
        self.manifest.bounds
    }

    pub fn cameras(&self) -> &[CameraEntry] {
        &self.manifest.cameras
    }

    pub fn camera(&self, view: usize) -> &Camera {
        &self.manifest.cameras[view].camera
    }

    pub fn camera_index(&self, id: &str) -> Option<usize> {
        self.manifest.cameras.iter().position(|c| c.id == id)
    }

    pub fn train_views(&self) -> Vec<usize> {
        (0..self.manifest.cameras.len()).filter(|&i| !self.manifest.cameras[i].holdout).collect()
    }

    pub fn holdout_views(&self) -> Vec<usize> {
        (0..self.manifest.cameras.len()).filter(|&i| self.manifest.cameras[i].holdout).collect()
    }

    pub fn has_frame(&self, view: usize, time: usize) -> bool {
        self.index.contains_key(&(view, time))
    }

    fn entry(&self, view: usize, time: usize) -> Result<&FrameEntry> {
        self.index.get(&(view, time)).map(|&k| &self.manifest.frames[k]).ok_or_else(|| {
            Error::Contract(format!(
                "no frame for camera {} at time {time}",
                self.manifest.cameras.get(view).map_or("?", |c| c.id.as_str())
            ))
        })
    }

    fn check_dims(&self, view: usize, what: &str, path: &Path, w: usize, h: usize) -> Result<()> {
        let cam = self.camera(view);
        if (w, h) != (cam.width, cam.height) {
            return Err(Error::DimMismatch(format!(
                "{what} {} is {w}x{h}, camera `{}` declares {}x{}",
                path.display(),
                self.manifest.cameras[view].id,
                cam.width,
                cam.height
            )));
        }
        Ok(())
    }

    pub fn rgb(&self, view: usize, time: usize) -> Result<Image> {
        let p = self.root.join(&self.entry(view, time)?.rgb);
        let img = read_ppm(&p)?;
        self.check_dims(view, "rgb image", &p, img.width, img.height)?;
        Ok(img)
    }

    pub fn features(&self, view: usize, time: usize) -> Result<FeatureMap> {
        let p = self.root.join(&self.entry(view, time)?.features);
        let map = FeatureMap::from_tensor(RawTensor::read(&p)?)?;
        self.check_dims(view, "feature map", &p, map.width, map.height)?;
        if map.dim != self.manifest.semantic_dim {
            return Err(Error::DimMismatch(format!(
                "feature map {} has {} channels, scene declares {}",
                p.display(),
                map.dim,
                self.manifest.semantic_dim
            )));
        }
        Ok(map)
    }

    fn image_tensor(&self, view: usize, what: &str, rel: Option<&String>) -> Result<Option<Vec<f32>>> {
        let Some(rel) = rel else { return Ok(None) };
        let p = self.root.join(rel);
        let t = RawTensor::read(&p)?;
        match t.dims[..] {
            [h, w] => self.check_dims(view, what, &p, w as usize, h as usize)?,
            _ => return Err(Error::DimMismatch(format!("{what} {} needs 2 dims, got {:?}", p.display(), t.dims))),
        }
        Ok(Some(t.data))
    }

    pub fn object_ids(&self, view: usize, time: usize) -> Result<Option<Vec<u8>>> {
        let e = self.entry(view, time)?;
        Ok(self
            .image_tensor(view, "object-id map", e.object_ids.as_ref())?
            .map(|v| v.iter().map(|&x| x as u8).collect()))
    }

    /// Ground-truth ray depth; `None` entries where nothing was hit.
    pub fn depth(&self, view: usize, time: usize) -> Result<Option<Vec<Option<f32>>>> {
        let e = self.entry(view, time)?;
        Ok(self
            .image_tensor(view, "depth map", e.depth.as_ref())?
            .map(|v| v.iter().map(|&d| d.is_finite().then_some(d)).collect()))
    }

    pub fn dynamic_region(&self, time: usize) -> Option<DynamicRegion> {
        self.manifest.dynamic.iter().find(|d| d.time == time).copied()
    }
}

/// Writes the manifest of `dataset` (re-serialized) to `dir`.
pub fn write_manifest(dir: &Path, manifest: &SceneManifest) -> Result<PathBuf> {
    let p = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    Ok(p)
}

/// Renders every camera and frame of `preset` with the analytic oracle and
/// writes a complete scene under `out`.
pub fn synth_scene(preset: &SynthPreset, out: &Path) -> Result<SceneDataset> {
    preset.validate()?;
    for sub in ["rgb", "features", "ids", "depth"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let prototypes = object_prototypes(preset.seed, preset.semantic_dim, OBJECT_COUNT);
    let cameras = preset.cameras();
    let mut frames = Vec::new();
    for (id, cam, _) in &cameras {
        for t in 0..preset.frames {
            let frame = oracle_render(preset, cam, t as f64);
            let stem = format!("{id}_{t:03}");
            let entry = FrameEntry {
                camera: id.clone(),
                time: t,
                rgb: format!("rgb/{stem}.ppm"),
                features: format!("features/{stem}.gnrf"),
                object_ids: Some(format!("ids/{stem}.gnrf")),
                depth: Some(format!("depth/{stem}.gnrf")),
            };
            write_ppm(&out.join(&entry.rgb), &frame.rgb)?;
            prototype_features(&frame.ids, cam.width, cam.height, &prototypes)
                .to_tensor()
                .write(&out.join(&entry.features))?;
            let hw = vec![cam.height as u32, cam.width as u32];
            RawTensor::new(hw.clone(), frame.ids.iter().map(|&i| i as f32).collect())?.write(&out.join(entry.object_ids.as_ref().unwrap()))?;
            RawTensor::new(hw, frame.depth.iter().map(|&d| d as f32).collect())?.write(&out.join(entry.depth.as_ref().unwrap()))?;
            frames.push(entry);
        }
    }
    let dynamic = (0..preset.frames)
        .filter_map(|t| {
            preset.dynamic_region(t as f64).map(|(c, r)| DynamicRegion {
                time: t,
                center: c.0,
                radius: r,
            })
        })
        .collect();
    let manifest = SceneManifest {
        schema_version: SCHEMA_VERSION,
        frame_count: preset.frames,
        bounds: preset.bounds,
        semantic_dim: preset.semantic_dim,
        cameras: cameras
            .into_iter()
            .map(|(id, camera, holdout)| CameraEntry { id, camera, holdout })
            .collect(),
        frames,
        prototypes,
        preset: Some(preset.clone()),
        dynamic,
    };
    let p = write_manifest(out, &manifest)?;
    load_scene(&p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synth::{PresetKind, ID_SPHERE};

    fn small(kind: PresetKind) -> SynthPreset {
        SynthPreset {
            frames: 3,
            width: 32,
            height: 32,
            ring_count: 2,
            ..SynthPreset::new(kind)
        }
    }

    #[test]
    fn round_trip_and_lazy_frames() {
        let dir = tempfile::tempdir().unwrap();
        let preset = small(PresetKind::OrbitingSphere);
        let ds = synth_scene(&preset, dir.path()).unwrap();
        let back = load_scene(dir.path()).unwrap();
        assert_eq!(back.manifest, ds.manifest);
        for (a, (_, cam, _)) in back.cameras().iter().zip(preset.cameras()) {
            assert_eq!(
                a.camera.rotation.0.map(|r| r.map(f64::to_bits)),
                cam.rotation.0.map(|r| r.map(f64::to_bits))
            );
            assert_eq!(a.camera.translation.0.map(f64::to_bits), cam.translation.0.map(f64::to_bits));
        }
        assert_eq!(back.train_views(), vec![0, 1]);
        assert_eq!(back.holdout_views(), vec![2]);
        let oracle = oracle_render(&preset, back.camera(1), 2.0);
        assert_eq!(back.rgb(1, 2).unwrap(), oracle.rgb.quantized());
        let ids = back.object_ids(1, 2).unwrap().unwrap();
        assert_eq!(ids, oracle.ids);
        let f = back.features(1, 2).unwrap();
        let k = ids.iter().position(|&i| i == ID_SPHERE).unwrap();
        assert_eq!(f.pixel(k % 32, k / 32), &ds.manifest.prototypes[ID_SPHERE as usize][..]);
        assert_eq!(back.dynamic_region(1).unwrap().radius, 0.28);
    }

    #[test]
    fn missing_feature_map_names_the_frame() {
        let dir = tempfile::tempdir().unwrap();
        synth_scene(&small(PresetKind::StaticBox), dir.path()).unwrap();
        fs::remove_file(dir.path().join("features/cam01_002.gnrf")).unwrap();
        match load_scene(dir.path()) {
            Err(Error::MissingFrame { what, camera, time, .. }) => {
                assert_eq!((what, camera.as_str(), time), ("feature map", "cam01", 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn static_frames_identical_and_deterministic() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let preset = small(PresetKind::StaticBox);
        synth_scene(&preset, a.path()).unwrap();
        synth_scene(&preset, b.path()).unwrap();
        let read = |d: &Path, rel: &str| fs::read(d.join(rel)).unwrap();
        assert_eq!(read(a.path(), "rgb/cam00_000.ppm"), read(a.path(), "rgb/cam00_002.ppm"));
        assert_eq!(read(a.path(), "features/cam01_000.gnrf"), read(a.path(), "features/cam01_001.gnrf"));
        for rel in ["scene.json", "rgb/cam01_001.ppm", "depth/holdout_002.gnrf", "ids/cam00_000.gnrf"] {
            assert_eq!(read(a.path(), rel), read(b.path(), rel), "{rel}");
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        synth_scene(&small(PresetKind::StaticBox), dir.path()).unwrap();
        write_ppm(&dir.path().join("rgb/cam00_001.ppm"), &Image::filled(8, 8, [0.0; 3])).unwrap();
        let ds = load_scene(dir.path()).unwrap();
        assert!(matches!(ds.rgb(0, 1), Err(Error::DimMismatch(_))));
    }
}
