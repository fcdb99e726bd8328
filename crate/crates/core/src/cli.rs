//! `gearctl` argument parsing and subcommands.

use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GearedModel, ModelConfig, SplitStrategy};
use crate::io::{
    load_checkpoint, load_scene, save_checkpoint, synth_scene, write_ppm, write_ppm_rgb8, Checkpoint, Image, PresetKind, RngState, SceneDataset,
    SynthPreset,
};
use crate::metrics::{FrameScore, MetricReport};
use crate::render::{render_layers, Layer, LayerSet, MarchSettings};
use crate::semantic::Mask;
use crate::service::{self, AppState, PoseSpec, ServiceConfig};
use crate::track::TrackSession;
use crate::train::{gear_histogram, write_log, TrainConfig, Trainer};

#[derive(Debug, Parser)]
#[command(name = "gearctl", version, about = "Train, render and track with gear-stratified dynamic radiance fields")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads for rendering and training (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Plain-text key=value file of flag defaults; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-view video scene with analytic ground truth.
    Synth {
        #[arg(long, default_value = "orbiting-sphere")]
        preset: PresetKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a geared model to a scene with the alternating schedule.
    Train {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Render rgb, semantic, depth or gear layers from a checkpoint.
    Render {
        #[arg(long)]
        ckpt: PathBuf,
        /// Scene whose camera ids `--view` refers to.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[command(flatten)]
        pose: PoseArgs,
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        #[arg(long, value_delimiter = ',', default_value = "rgb")]
        layers: Vec<Layer>,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Click an object in one view and write its mask in another view and time.
    Track {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        view: String,
        #[arg(long, default_value_t = 0)]
        time: usize,
        /// Clicked pixel as `u,v`.
        #[arg(long, value_delimiter = ',', required = true)]
        click: Vec<usize>,
        /// Defaults to the clicked view.
        #[arg(long)]
        target_view: Option<String>,
        /// Defaults to the clicked time.
        #[arg(long)]
        target_time: Option<usize>,
        #[arg(long, default_value_t = crate::semantic::DEFAULT_TAU_SIM)]
        tau_sim: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score rendered views against the scene's ground truth.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "holdout")]
        views: ViewSelection,
        #[arg(long, default_value_t = 1)]
        time_stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per value of an axis and tabulate holdout quality.
    Ablate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        axis: AblationAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 1)]
        time_stride: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Serve rendering and tracking over HTTP.
    Serve {
        #[arg(long)]
        ckpt: PathBuf,
        /// Scene providing camera ids for view-id poses.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = ServiceConfig::default().max_pixels)]
        max_pixels: usize,
        #[arg(long, default_value_t = ServiceConfig::default().session_cap)]
        session_cap: usize,
        #[arg(long, default_value_t = crate::semantic::DEFAULT_TAU_SIM)]
        tau_sim: f64,
    },
}

#[derive(Clone, Debug, Args)]
#[group(required = true, multiple = false)]
pub struct PoseArgs {
    /// Camera id from `--scene`.
    #[arg(long)]
    pub view: Option<String>,
    /// JSON file with an explicit pose.
    #[arg(long)]
    pub pose: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 4)]
    pub gears: usize,
    /// Plane channel count.
    #[arg(long, default_value_t = 32)]
    pub features: usize,
    #[arg(long, default_value_t = 64)]
    pub spatial_res: usize,
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub dir_freqs: usize,
    #[arg(long, default_value_t = SplitStrategy::Exp2)]
    pub split: SplitStrategy,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub motion_aware_sampling: bool,
    /// One temporal resolution for every gear.
    #[arg(long)]
    pub temporal_override: Option<usize>,
    #[arg(long)]
    pub gear_time_res: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub gear_init: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub gear_plane_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ModelArgs {
    pub fn model_config(&self, scene: &SceneDataset) -> ModelConfig {
        ModelConfig {
            n_gear: self.gears,
            feature_dim: self.features,
            semantic_dim: scene.semantic_dim(),
            spatial_res: self.spatial_res,
            frame_count: scene.frame_count(),
            bounds: scene.bounds(),
            split: self.split,
            motion_aware_sampling: self.motion_aware_sampling,
            samples_per_ray: self.samples,
            dir_freqs: self.dir_freqs,
            hidden: self.hidden.clone(),
            temporal_override: self.temporal_override,
            gear_time_res: self.gear_time_res,
            gear_init: self.gear_init,
            gear_plane_scale: self.gear_plane_scale,
            seed: self.seed,
            ..ModelConfig::default()
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0.01)]
    pub lambda_sem: f64,
    #[arg(long, default_value_t = 3)]
    pub epochs_per_cycle: usize,
    #[arg(long, default_value_t = 10)]
    pub final_epochs: usize,
    #[arg(long, default_value_t = 3)]
    pub topk: usize,
    #[arg(long, default_value_t = 16)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 0.02)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.02)]
    pub gear_lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_stay: f64,
    #[arg(long, default_value_t = 2e-4)]
    pub v_stop: f64,
    #[arg(long, default_value_t = 4)]
    pub probe_views: usize,
    #[arg(long, default_value_t = 4)]
    pub probe_times: usize,
    #[arg(long, default_value_t = 2)]
    pub probe_stride: usize,
    #[arg(long, default_value_t = 4)]
    pub mask_stride: usize,
    #[arg(long, default_value_t = 1024)]
    pub batch_rays: usize,
    /// Rays drawn per epoch; every training ray when absent.
    #[arg(long)]
    pub rays_per_epoch: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub max_cycles: usize,
    #[arg(long, default_value_t = 8)]
    pub grad_chunks: usize,
    #[arg(long, default_value_t = crate::semantic::DEFAULT_TAU_SIM)]
    pub tau_sim: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub early_stop: f64,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub jitter: bool,
}

impl TrainArgs {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lambda_sem: self.lambda_sem,
            epochs_per_cycle: self.epochs_per_cycle,
            final_epochs: self.final_epochs,
            topk: self.topk,
            patch_size: self.patch_size,
            lr: self.lr,
            gear_lr: self.gear_lr,
            lambda_stay: self.lambda_stay,
            v_stop: self.v_stop,
            probe_views: self.probe_views,
            probe_times: self.probe_times,
            probe_stride: self.probe_stride,
            mask_stride: self.mask_stride,
            batch_rays: self.batch_rays,
            rays_per_epoch: self.rays_per_epoch,
            max_cycles: self.max_cycles,
            grad_chunks: self.grad_chunks,
            tau_sim: self.tau_sim,
            early_stop: self.early_stop,
            jitter: self.jitter,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewSelection {
    Holdout,
    Train,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationAxis {
    Gears,
    Topk,
    Split,
    Sampling,
}

impl std::fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AblationAxis::Gears => "gears",
            AblationAxis::Topk => "topk",
            AblationAxis::Split => "split",
            AblationAxis::Sampling => "sampling",
        })
    }
}

/// Applies one ablation value to the shared configs.
///
/// Sampling values: `motion-aware` (the full model), `uniform-<n>` (n uniform
/// samples, no splitting), `dense-temporal` and `medium-temporal` (a single
/// volume at T or T/4 temporal resolution).
pub fn apply_ablation(axis: AblationAxis, value: &str, model: &mut ModelConfig, train: &mut TrainConfig) -> Result<()> {
    let int = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| Error::Config(format!("`{v}` is not a valid {axis} value")))
    };
    match axis {
        AblationAxis::Gears => model.n_gear = int(value)?,
        AblationAxis::Topk => train.topk = int(value)?,
        AblationAxis::Split => model.split = value.parse()?,
        AblationAxis::Sampling => match value {
            "motion-aware" => model.motion_aware_sampling = true,
            "dense-temporal" | "medium-temporal" => {
                let t = model.frame_count;
                model.n_gear = 1;
                model.temporal_override = Some(if value == "dense-temporal" { t } else { t.div_ceil(4) });
            }
            v => match v.strip_prefix("uniform-") {
                Some(n) => {
                    model.motion_aware_sampling = false;
                    model.samples_per_ray = int(n)?;
                }
                None => {
                    return Err(Error::Config(format!(
                        "unknown sampling value `{v}` (motion-aware, uniform-<n>, dense-temporal, medium-temporal)"
                    )))
                }
            },
        },
    }
    model.validate()?;
    train.validate()
}

/// Holdout/train view indices of a scene.
pub fn select_views(scene: &SceneDataset, which: ViewSelection) -> Vec<usize> {
    match which {
        ViewSelection::Holdout => scene.holdout_views(),
        ViewSelection::Train => scene.train_views(),
        ViewSelection::All => (0..scene.cameras().len()).collect(),
    }
}

/// Renders every `time_stride`-th frame of `views` and scores it.
pub fn evaluate(model: &GearedModel<f32>, scene: &SceneDataset, views: &[usize], time_stride: usize) -> Result<MetricReport> {
    let settings = MarchSettings::new(model.config().samples_per_ray);
    let mut frames: Vec<FrameScore> = Vec::new();
    for &v in views {
        let entry = &scene.cameras()[v];
        for t in (0..scene.frame_count()).step_by(time_stride.max(1)) {
            if !scene.has_frame(v, t) {
                continue;
            }
            let r = render_layers(model, &entry.camera, t as f64, LayerSet::only(&[Layer::Rgb]), 1, &settings);
            let pred = Image::new(r.width, r.height, r.rgb.expect("rgb requested"))?;
            frames.push(MetricReport::score(&entry.id, t, &pred, &scene.rgb(v, t)?)?);
        }
    }
    if frames.is_empty() {
        return Err(Error::Contract("no frames to evaluate".into()));
    }
    Ok(MetricReport::from_frames(frames))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub cycles: usize,
    pub gear_updates: usize,
    pub termination: crate::train::Termination,
    pub seconds: f64,
    pub gear_histogram: Vec<f64>,
}

/// Trains from scratch and writes `model.gnck`, `train_log.jsonl` and
/// `summary.json` into `out`.
pub fn train_to_dir(scene: &SceneDataset, model: ModelConfig, train: TrainConfig, out: &Path) -> Result<(GearedModel<f32>, TrainSummary)> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let t0 = Instant::now();
    let outcome = Trainer::new(GearedModel::new(model)?, scene, train)?.train()?;
    let summary = TrainSummary {
        cycles: outcome.cycles,
        gear_updates: outcome.gear_updates,
        termination: outcome.termination,
        seconds: t0.elapsed().as_secs_f64(),
        gear_histogram: gear_histogram(&outcome.model),
    };
    save_checkpoint(
        &Checkpoint {
            model: outcome.model.clone(),
            cycle: outcome.cycles,
            rng: Some(RngState::capture(&outcome.rng)),
        },
        &out.join("model.gnck"),
    )?;
    write_log(&out.join("train_log.jsonl"), &outcome.log)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok((outcome.model, summary))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: String,
    pub psnr: f64,
    pub ssim: f64,
    pub lpips: String,
    pub train_seconds: f64,
    pub cycles: usize,
    pub gear_histogram: Vec<f64>,
}

/// Markdown table mirroring the method/PSNR/SSIM/LPIPS layout.
pub fn ablation_table(axis: AblationAxis, rows: &[AblationRow]) -> String {
    let mut s = format!("| {axis} | PSNR | SSIM | LPIPS | train s |\n|---|---|---|---|---|\n");
    for r in rows {
        s += &format!("| {} | {:.2} | {:.3} | {} | {:.0} |\n", r.value, r.psnr, r.ssim, r.lpips, r.train_seconds);
    }
    s
}

/// The desk-scale split direction: exp3 must not trail exp2 by more than 0.2 dB.
pub fn split_check(rows: &[AblationRow]) -> Option<bool> {
    let get = |v: &str| rows.iter().find(|r| r.value == v).map(|r| r.psnr);
    Some(get("exp3")? >= get("exp2")? - 0.2)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_model(path: &Path) -> Result<GearedModel<f32>> {
    Ok(load_checkpoint(path)?.model)
}

fn scene_cameras(scene: Option<&Path>) -> Result<Vec<crate::io::CameraEntry>> {
    match scene {
        Some(p) => Ok(load_scene(p)?.cameras().to_vec()),
        None => Ok(Vec::new()),
    }
}

/// Flag-file lines as `--key value` pairs. Blank lines and `#` comments are
/// skipped; underscores in keys read as dashes.
pub fn config_file_args(text: &str) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key=value", i + 1)))?;
        let k = k.trim().replace('_', "-");
        if k.is_empty() || k == "config" {
            return Err(Error::Config(format!("config line {}: invalid key `{k}`", i + 1)));
        }
        out.push(format!("--{k}").into());
        out.push(v.trim().into());
    }
    Ok(out)
}

/// Splices the `--config` file's pairs in right after the subcommand so that
/// later command-line flags override them.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut file = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            file = Some(PathBuf::from(it.next().ok_or_else(|| Error::Config("--config needs a file".into()))?));
        } else if let Some(p) = s.strip_prefix("--config=") {
            file = Some(PathBuf::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(file) = file else { return Ok(rest) };
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let extra = config_file_args(&text)?;
    let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let at = rest
        .iter()
        .position(|a| names.iter().any(|n| a.to_str() == Some(n)))
        .ok_or_else(|| Error::Config("--config needs a subcommand".into()))?;
    rest.splice(at + 1..at + 1, extra);
    Ok(rest)
}

/// Key=value text of every resolved model and training flag.
pub fn resolved_config(model: &ModelArgs, train: &TrainArgs) -> String {
    let opt = |v: Option<usize>| v.map(|v| v.to_string());
    let hidden = model.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",");
    let pairs: Vec<(&str, Option<String>)> = vec![
        ("gears", Some(model.gears.to_string())),
        ("features", Some(model.features.to_string())),
        ("spatial-res", Some(model.spatial_res.to_string())),
        ("samples", Some(model.samples.to_string())),
        ("hidden", Some(hidden)),
        ("dir-freqs", Some(model.dir_freqs.to_string())),
        ("split", Some(model.split.to_string())),
        ("motion-aware-sampling", Some(model.motion_aware_sampling.to_string())),
        ("temporal-override", opt(model.temporal_override)),
        ("gear-time-res", opt(model.gear_time_res)),
        ("gear-init", Some(model.gear_init.to_string())),
        ("gear-plane-scale", Some(model.gear_plane_scale.to_string())),
        ("seed", Some(model.seed.to_string())),
        ("lambda-sem", Some(train.lambda_sem.to_string())),
        ("epochs-per-cycle", Some(train.epochs_per_cycle.to_string())),
        ("final-epochs", Some(train.final_epochs.to_string())),
        ("topk", Some(train.topk.to_string())),
        ("patch-size", Some(train.patch_size.to_string())),
        ("lr", Some(train.lr.to_string())),
        ("gear-lr", Some(train.gear_lr.to_string())),
        ("lambda-stay", Some(train.lambda_stay.to_string())),
        ("v-stop", Some(train.v_stop.to_string())),
        ("probe-views", Some(train.probe_views.to_string())),
        ("probe-times", Some(train.probe_times.to_string())),
        ("probe-stride", Some(train.probe_stride.to_string())),
        ("mask-stride", Some(train.mask_stride.to_string())),
        ("batch-rays", Some(train.batch_rays.to_string())),
        ("rays-per-epoch", opt(train.rays_per_epoch)),
        ("max-cycles", Some(train.max_cycles.to_string())),
        ("grad-chunks", Some(train.grad_chunks.to_string())),
        ("tau-sim", Some(train.tau_sim.to_string())),
        ("early-stop", Some(train.early_stop.to_string())),
        ("jitter", Some(train.jitter.to_string())),
    ];
    pairs.into_iter().filter_map(|(k, v)| v.map(|v| format!("{k}={v}\n"))).collect()
}

/// Parses `args` (program name first), expanding `--config`.
pub fn parse(args: Vec<OsString>) -> std::result::Result<Cli, ParseFailure> {
    let args = expand_config(args).map_err(ParseFailure::Config)?;
    let matches = Cli::command().try_get_matches_from(args).map_err(ParseFailure::Clap)?;
    Cli::from_arg_matches(&matches).map_err(ParseFailure::Clap)
}

#[derive(Debug)]
pub enum ParseFailure {
    Config(Error),
    Clap(clap::Error),
}

/// Overlays `mask` on `image` in a half-transparent highlight.
pub fn overlay(image: &Image, mask: &Mask) -> Vec<u8> {
    let tint = [1.0f32, 0.15, 0.1];
    let mut out = Vec::with_capacity(image.pixels.len() * 3);
    for y in 0..image.height {
        for x in 0..image.width {
            let p = image.pixels[y * image.width + x];
            for c in 0..3 {
                let v = if mask.get(x, y) { 0.5 * p[c] + 0.5 * tint[c] } else { p[c] };
                out.push(crate::io::quantize(v));
            }
        }
    }
    out
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        // a second call only fails when a pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Synth { preset, out, seed } => {
            let mut p = SynthPreset::new(preset);
            p.seed = seed;
            let scene = synth_scene(&p, &out)?;
            println!("{} views x {} frames -> {}", scene.cameras().len(), scene.frame_count(), out.display());
        }
        Command::Train { scene, out, model, train } => {
            let ds = load_scene(&scene)?;
            ensure_dir(&out)?;
            fs::write(out.join("config.txt"), resolved_config(&model, &train)).map_err(|e| Error::io(&out, e))?;
            let (_, summary) = train_to_dir(&ds, model.model_config(&ds), train.train_config(model.seed), &out)?;
            println!(
                "{} cycles, {} gear updates, stopped by {:?} in {:.0}s; gears {:?}",
                summary.cycles, summary.gear_updates, summary.termination, summary.seconds, summary.gear_histogram
            );
        }
        Command::Render {
            ckpt,
            scene,
            pose,
            time,
            layers,
            stride,
            out,
        } => {
            let model = load_model(&ckpt)?;
            let spec = match (pose.view, pose.pose) {
                (Some(view), _) => {
                    if scene.is_none() {
                        return Err(Error::Config("--view needs --scene".into()));
                    }
                    PoseSpec::View { view }
                }
                (None, Some(p)) => {
                    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                }
                (None, None) => unreachable!("clap requires a pose"),
            };
            let camera = service::resolve_pose(&spec, &scene_cameras(scene.as_deref())?)?;
            let last = (model.config().frame_count - 1) as f64;
            if !(0.0..=last).contains(&time) {
                return Err(Error::Contract(format!("time {time} outside [0, {last}]")));
            }
            if stride == 0 {
                return Err(Error::Config("--stride must be at least 1".into()));
            }
            let settings = MarchSettings::new(model.config().samples_per_ray);
            let r = render_layers(&model, &camera, time, LayerSet::only(&layers), stride, &settings);
            ensure_dir(&out)?;
            for (layer, bytes) in r.encode() {
                let path = out.join(format!("{}.{}", layer.name(), layer.file_extension()));
                fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
                println!("{}", path.display());
            }
        }
        Command::Track {
            ckpt,
            scene,
            view,
            time,
            click,
            target_view,
            target_time,
            tau_sim,
            out,
        } => {
            if click.len() != 2 {
                return Err(Error::Config(format!("--click needs u,v, got {} values", click.len())));
            }
            let model = load_model(&ckpt)?;
            let ds = load_scene(&scene)?;
            let settings = MarchSettings::new(model.config().samples_per_ray);
            let source = service::resolve_pose(&PoseSpec::View { view: view.clone() }, ds.cameras())?;
            let target_view = target_view.unwrap_or(view);
            let target = service::resolve_pose(&PoseSpec::View { view: target_view }, ds.cameras())?;
            let mut session = TrackSession::click(0, &model, &source, time, (click[0], click[1]), tau_sim, &settings)?;
            let entry = session.query(&model, &target, target_time.unwrap_or(time), &settings)?;
            ensure_dir(&out)?;
            write_json(&out.join("track.json"), &service::response(None, &entry))?;
            let r = render_layers(
                &model,
                &target,
                target_time.unwrap_or(time) as f64,
                LayerSet::only(&[Layer::Rgb]),
                1,
                &settings,
            );
            let img = Image::new(r.width, r.height, r.rgb.expect("rgb requested"))?;
            write_ppm_rgb8(&out.join("overlay.ppm"), img.width, img.height, &overlay(&img, &entry.mask))?;
            let px: Vec<[f32; 3]> = entry.mask.bits.iter().map(|&b| if b { [1.0; 3] } else { [0.0; 3] }).collect();
            write_ppm(&out.join("mask.ppm"), &Image::new(img.width, img.height, px)?)?;
            println!("{:?}: {} px", entry.status, entry.mask.count());
        }
        Command::Eval {
            ckpt,
            scene,
            views,
            time_stride,
            out,
        } => {
            let model = load_model(&ckpt)?;
            let ds = load_scene(&scene)?;
            let report = evaluate(&model, &ds, &select_views(&ds, views), time_stride)?;
            ensure_dir(&out)?;
            write_json(&out.join("metrics.json"), &report)?;
            println!(
                "psnr {:.2} ssim {:.3} over {} frames",
                report.mean_psnr,
                report.mean_ssim,
                report.frames.len()
            );
        }
        Command::Ablate {
            scene,
            axis,
            values,
            time_stride,
            out,
            model,
            train,
        } => {
            let ds = load_scene(&scene)?;
            let base_model = model.model_config(&ds);
            let base_train = train.train_config(model.seed);
            // validate every value before spending time on training
            for v in &values {
                apply_ablation(axis, v, &mut base_model.clone(), &mut base_train.clone())?;
            }
            ensure_dir(&out)?;
            let mut rows = Vec::new();
            for v in &values {
                let (mut m, mut t) = (base_model.clone(), base_train.clone());
                apply_ablation(axis, v, &mut m, &mut t)?;
                log::info!("ablation {axis}={v}");
                let dir = out.join(format!("{axis}-{v}"));
                let (trained, summary) = train_to_dir(&ds, m, t, &dir)?;
                let report = evaluate(&trained, &ds, &ds.holdout_views(), time_stride)?;
                write_json(&dir.join("metrics.json"), &report)?;
                rows.push(AblationRow {
                    value: v.clone(),
                    psnr: report.mean_psnr,
                    ssim: report.mean_ssim,
                    lpips: report.lpips.clone(),
                    train_seconds: summary.seconds,
                    cycles: summary.cycles,
                    gear_histogram: summary.gear_histogram,
                });
            }
            let table = ablation_table(axis, &rows);
            fs::write(out.join("ablation.md"), &table).map_err(|e| Error::io(&out, e))?;
            write_json(&out.join("ablation.json"), &rows)?;
            print!("{table}");
            if axis == AblationAxis::Split {
                if let Some(ok) = split_check(&rows) {
                    println!("exp3 >= exp2 - 0.2 dB: {}", if ok { "pass" } else { "fail" });
                }
            }
        }
        Command::Serve {
            ckpt,
            scene,
            host,
            port,
            max_pixels,
            session_cap,
            tau_sim,
        } => {
            let model = load_model(&ckpt)?;
            let cameras = scene_cameras(scene.as_deref())?;
            let state = Arc::new(AppState::new(
                model,
                cameras,
                ServiceConfig {
                    max_pixels,
                    session_cap,
                    tau_sim,
                },
            ));
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| Error::io(Path::new("tokio runtime"), e))?;
            rt.block_on(service::serve(state, SocketAddr::new(host, port)))
                .map_err(|e| Error::io(Path::new("listener"), e))?;
        }
    }
    Ok(())
}

/// Process entry point; returns the exit code.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let cli = match parse(args) {
        Ok(c) => c,
        Err(ParseFailure::Clap(e)) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
        Err(ParseFailure::Config(e)) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
