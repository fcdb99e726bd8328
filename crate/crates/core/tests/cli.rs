mod common;

use std::ffi::OsString;
use std::fs;
use std::path::Path;
use std::process::Command;

use geared_radiance::cli::{parse, Command as Sub};
use geared_radiance::io::decode_ppm;
use geared_radiance::render::{gear_color, render_layers, Layer, LayerSet, MarchSettings};

use common::{fixture, scene_dir, sphere_pixel};

fn args(list: &[&str]) -> Vec<OsString> {
    std::iter::once("gearctl").chain(list.iter().copied()).map(OsString::from).collect()
}

fn run(list: &[&str]) -> i32 {
    geared_radiance::cli::main_with_args(args(list))
}

/// Runs a whitespace-separated command line.
fn run_line(line: &str) -> i32 {
    run(&line.split_whitespace().collect::<Vec<_>>())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_defaults_are_the_published_values() {
    let Sub::Train { model, train, .. } = parse(args(&["train", "--scene", "s", "--out", "o"])).unwrap().command else {
        panic!()
    };
    assert_eq!((model.gears, model.features, model.samples), (4, 32, 64));
    assert_eq!((train.topk, train.epochs_per_cycle, train.final_epochs), (3, 3, 10));
    assert_eq!((train.lambda_sem, train.lr, train.gear_lr), (0.01, 0.02, 0.02));
    assert_eq!(train.max_cycles, 50);
}

#[test]
fn config_file_sits_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# desk run\ngears = 2\ntopk=5\nlambda_sem = 0.5\n").unwrap();
    let cli = parse(args(&["--config", s(&cfg), "train", "--scene", "s", "--out", "o", "--topk", "1"])).unwrap();
    let Sub::Train { model, train, .. } = cli.command else { panic!() };
    assert_eq!(model.gears, 2);
    assert_eq!(train.topk, 1);
    assert_eq!(train.lambda_sem, 0.5);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "gearz = 2\n").unwrap();
    assert_eq!(run(&["--config", s(&cfg), "train", "--scene", "s", "--out", "o"]), 1);
    fs::write(&cfg, "no equals sign\n").unwrap();
    assert_eq!(run(&["--config", s(&cfg), "train", "--scene", "s", "--out", "o"]), 1);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["train", "--out", "o"]), 1);
    assert_eq!(run(&["synth", "--preset", "teapot", "--out", "o"]), 1);
    assert_eq!(run(&["--help"]), 0);
    // missing scene on disk is a data error
    let missing = dir.path().join("nothing");
    assert_eq!(run(&["train", "--scene", s(&missing), "--out", s(&dir.path().join("o"))]), 2);
    let f = fixture();
    assert_eq!(
        run(&["render", "--ckpt", s(&f.ckpt), "--view", "cam00", "--out", s(&dir.path().join("r"))]),
        1
    );
    assert_eq!(
        run_line(&format!("ablate --scene {} --axis split --values exp2,exp9 --out a", s(&scene_dir()))),
        1
    );
}

#[test]
fn binary_reports_single_line_diagnostics() {
    let out = Command::new(env!("CARGO_BIN_EXE_gearctl"))
        .args(["eval", "--ckpt", "/nonexistent.gnck", "--scene", ".", "--out", "x"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().filter(|l| l.starts_with("error")).count(), 1, "{err}");
}

#[test]
fn same_seed_same_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scene_dir();
    let train = |name: &str| {
        let out = dir.path().join(name);
        let code = run_line(&format!(
            "--workers 1 train --scene {} --out {} --gears 2 --features 2 --spatial-res 6 --samples 8 --hidden 4 \
             --rays-per-epoch 1024 --batch-rays 256 --epochs-per-cycle 1 --final-epochs 1 --max-cycles 1 \
             --probe-views 1 --probe-times 1 --seed 7",
            s(&scene),
            s(&out)
        ));
        assert_eq!(code, 0);
        out
    };
    let (a, b) = (train("a"), train("b"));
    for f in ["model.gnck", "config.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let c = fs::read_to_string(a.join("config.txt")).unwrap();
    assert!(c.contains("seed=7") && c.contains("gears=2"), "{c}");
}

#[test]
fn gear_layer_uses_the_palette() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let line = format!(
        "render --ckpt {} --scene {} --view cam00 --time 2 --layers rgb,gear --out {}",
        s(&f.ckpt),
        s(&scene_dir()),
        s(&out)
    );
    assert_eq!(run_line(&line), 0);
    let (w, h, px) = decode_ppm(&fs::read(out.join("gear.ppm")).unwrap(), Path::new("gear.ppm")).unwrap();
    assert_eq!((w, h), (32, 32));
    let settings = MarchSettings::new(f.model.config().samples_per_ray);
    let r = render_layers(&f.model, f.scene.camera(0), 2.0, LayerSet::only(&[Layer::Gear]), 1, &settings);
    for (i, g) in r.gear.unwrap().iter().enumerate() {
        assert_eq!(&px[3 * i..3 * i + 3], &gear_color(*g), "pixel {i}");
    }
    assert!(out.join("rgb.ppm").exists());
}

#[test]
fn track_writes_mask_overlay_and_status() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let (u, v) = sphere_pixel(&f.scene, 0, 0);
    let line = format!(
        "track --ckpt {} --scene {} --view cam00 --click {u},{v} --target-time 1 --out {}",
        s(&f.ckpt),
        s(&scene_dir()),
        s(dir.path())
    );
    let code = run_line(&line);
    assert_eq!(code, 0);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("track.json")).unwrap()).unwrap();
    assert_eq!(json["status"], "ok");
    for f in ["overlay.ppm", "mask.ppm"] {
        assert!(dir.path().join(f).exists());
    }
    assert_eq!(
        run(&["track", "--ckpt", "x", "--scene", "y", "--view", "cam00", "--click", "3", "--out", "z"]),
        1
    );
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        assert_eq!(
            run(&["synth", "--preset", "static-box", "--seed", "3", "--out", s(&dir.path().join(name))]),
            0
        );
    }
    for f in ["scene.json", "rgb/cam03_005.ppm", "features/holdout_000.gnrf"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}
