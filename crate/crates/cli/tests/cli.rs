use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use codedlf::io::{load_scene, parse_mask_text, read_image, read_pfm_gray, Manifest, Split};
use codedlf::train::{self, init_mask, Checkpoint};
use codedlf_cli::commands::parse_range;
use codedlf_cli::{RunConfig, EVAL_COLUMNS, FAILURE_MARKER};
use tempfile::TempDir;

fn codedlf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codedlf")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = codedlf(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(out: &Path, count: usize, seed: u64) {
    synth_sized(out, count, seed, 16);
}

fn synth_sized(out: &Path, count: usize, seed: u64, side: usize) {
    let (count, seed, side) = (count.to_string(), seed.to_string(), side.to_string());
    ok(&[
        "synth-data", "--count", &count, "--height", &side, "--width", &side, "--views", "3", "--val-ratio", "0.25",
        "--test-ratio", "0.25", "--seed", &seed, "--out", s(out),
    ]);
}

fn write_config(dir: &Path, mode: &str, epochs: usize) -> PathBuf {
    let path = dir.join(format!("{mode}.toml"));
    std::fs::write(
        &path,
        format!(
            "[geometry]\nviews_s = 3\nviews_t = 3\n[mask]\nsize = 8\nseed = 11\n[network]\nbase_filters = 4\n\
             [train]\nmode = \"{mode}\"\nepochs = {epochs}\nbatch = 2\nseeds = [3]\n\
             [data]\nmanifest = \"data/manifest.txt\"\npatch = 8\nstride = 8\n"
        ),
    )
    .unwrap();
    path
}

/// Dataset plus one trained run in a fresh directory.
struct Fixture {
    dir: TempDir,
    config: PathBuf,
}

impl Fixture {
    fn new(mode: &str, epochs: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        synth(&dir.path().join("data"), 8, 1);
        let config = write_config(dir.path(), mode, epochs);
        ok(&["train", "--quiet", "--config", s(&config), "--out", s(&dir.path().join("train"))]);
        Self { dir, config }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn checkpoint(&self) -> PathBuf {
        self.path("train/seed_3/last.h5")
    }
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut rows = text.lines().map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>());
    (rows.next().unwrap(), rows.collect())
}

#[test]
fn synth_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    synth(&a, 4, 9);
    synth(&b, 4, 9);
    let ma = std::fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert_eq!(ma, std::fs::read_to_string(b.join("manifest.txt")).unwrap());
    let manifest = Manifest::parse(&ma).unwrap();
    assert_eq!(manifest.entries.len(), 4);
    for e in &manifest.entries {
        assert_eq!(load_scene(&a.join(&e.path)).unwrap(), load_scene(&b.join(&e.path)).unwrap());
    }
    let c = dir.path().join("c");
    synth(&c, 4, 10);
    let first = &manifest.entries[0].path;
    assert_ne!(load_scene(&a.join(first)).unwrap(), load_scene(&c.join(first)).unwrap());
}

#[test]
fn synth_data_with_zero_scenes_writes_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth-data", "--count", "0", "--out", s(dir.path())]);
    let m = Manifest::load(&dir.path().join("manifest.txt")).unwrap();
    assert!(m.entries.is_empty());
}

#[test]
fn fixed_mask_run_keeps_its_initialization() {
    let fx = Fixture::new("cnn_fixed_mask", 2);
    let cfg = RunConfig::load(&fx.config).unwrap();
    let ck = Checkpoint::load(&fx.checkpoint()).unwrap();
    let init = init_mask(cfg.mask_init(), 8, 11).unwrap();
    assert_eq!(ck.mask().tile(), init.tile());
    assert_eq!(ck.history.len(), 2);
}

#[test]
fn e2e_run_moves_the_mask() {
    let fx = Fixture::new("e2e", 2);
    let cfg = RunConfig::load(&fx.config).unwrap();
    let ck = Checkpoint::load(&fx.checkpoint()).unwrap();
    assert_ne!(ck.mask().tile(), init_mask(cfg.mask_init(), 8, 11).unwrap().tile());
    assert!(ck.mask().tile().iter().all(|v| (0.0..=1.0).contains(v)));
    let (_, rows) = csv(&fx.path("train/seed_3/report.csv"));
    assert_eq!(rows.len(), 2);
    assert!(fx.path("train/resolved_config.toml").exists());
}

#[test]
fn zero_epochs_saves_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    synth(&dir.path().join("data"), 8, 1);
    let config = write_config(dir.path(), "e2e", 5);
    let out = dir.path().join("train");
    ok(&["train", "--quiet", "--epochs", "0", "--config", s(&config), "--out", s(&out)]);
    let ck = Checkpoint::load(&out.join("seed_3/last.h5")).unwrap();
    assert_eq!(ck.state.epoch, 0);
    assert!(ck.history.is_empty());
}

#[test]
fn eval_matches_the_training_report() {
    let fx = Fixture::new("e2e", 2);
    let out = fx.path("eval");
    ok(&["eval", "--config", s(&fx.config), "--checkpoint", s(&fx.checkpoint()), "--out", s(&out)]);
    let (head, rows) = csv(&out.join("metrics.csv"));
    assert_eq!(head, EVAL_COLUMNS);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "val");
    let (rhead, rrows) = csv(&fx.path("train/seed_3/report.csv"));
    let last = rrows.last().unwrap();
    for m in ["pseudo_huber", "mae", "mse", "badpix01", "badpix03", "badpix07", "tv"] {
        let a: f64 = last[rhead.iter().position(|h| *h == format!("val_{m}")).unwrap()].parse().unwrap();
        let b: f64 = rows[0][head.iter().position(|h| h == m).unwrap()].parse().unwrap();
        assert!((a - b).abs() <= 1e-6, "{m}: {a} vs {b}");
    }
    let (_, scenes) = csv(&out.join("per_scene.csv"));
    let manifest = Manifest::load(&fx.path("data/manifest.txt")).unwrap();
    assert_eq!(scenes.len(), manifest.paths(Split::Val).len());
}

#[test]
fn eval_on_an_empty_split_writes_nothing() {
    let fx = Fixture::new("e2e", 1);
    let mut only_train = Manifest::load(&fx.path("data/manifest.txt")).unwrap();
    only_train.entries.retain(|e| e.split == Split::Train);
    let manifest = fx.path("data/only_train.txt");
    only_train.save(&manifest).unwrap();
    let out = fx.path("eval_empty");
    let res = codedlf(&[
        "eval", "--config", s(&fx.config), "--checkpoint", s(&fx.checkpoint()), "--manifest", s(&manifest),
        "--split", "test", "--out", s(&out),
    ]);
    assert!(!res.status.success());
    assert!(!out.exists());
}

#[test]
fn infer_writes_the_predicted_map() {
    let fx = Fixture::new("e2e", 1);
    let manifest = Manifest::load(&fx.path("data/manifest.txt")).unwrap();
    let scene_path = fx.path("data").join(&manifest.entries[0].path);
    let out = fx.path("infer");
    ok(&["infer", "--checkpoint", s(&fx.checkpoint()), "--scene", s(&scene_path), "--out", s(&out)]);
    let ck = Checkpoint::load(&fx.checkpoint()).unwrap();
    let scene = load_scene(&scene_path).unwrap();
    let (_, map) = train::infer(&ck, &scene.lightfield).unwrap();
    let written = read_pfm_gray(&out.join("disparity.pfm")).unwrap();
    assert_eq!(written, map.data().mapv(|v| v as f32 as f64));
    let (lo, hi) = parse_range(&std::fs::read_to_string(out.join("disparity_range.txt")).unwrap()).unwrap();
    assert_eq!(lo, written.iter().copied().fold(f64::INFINITY, f64::min));
    assert_eq!(hi, written.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let png = read_image(&out.join("disparity.png")).unwrap();
    assert_eq!(png.dim().0, 16);
    assert!(out.join("measurement.png").exists());
}

#[test]
fn export_mask_tiles_the_learned_pattern() {
    let dir = tempfile::tempdir().unwrap();
    synth_sized(&dir.path().join("data"), 4, 1, 32);
    let config = dir.path().join("p32.toml");
    std::fs::write(
        &config,
        "[geometry]\nviews_s = 3\nviews_t = 3\n[mask]\nsize = 32\n[network]\nbase_filters = 4\n\
         [train]\nepochs = 0\nbatch = 2\n[data]\nmanifest = \"data/manifest.txt\"\npatch = 32\nstride = 32\n",
    )
    .unwrap();
    ok(&["train", "--quiet", "--config", s(&config), "--out", s(&dir.path().join("train"))]);
    let ckpt = dir.path().join("train/seed_0/last.h5");
    let out = dir.path().join("mask");
    ok(&["export-mask", "--checkpoint", s(&ckpt), "--out", s(&out)]);
    let tile = Checkpoint::load(&ckpt).unwrap().mask().tile().clone();
    let text = std::fs::read_to_string(out.join("mask_tile.txt")).unwrap();
    assert_eq!(parse_mask_text(&text).unwrap(), tile);
    let img = read_image(&out.join("mask_tiled.png")).unwrap();
    assert_eq!(img.dim(), (256, 256, 1));
    for y in 0..256 {
        for x in 0..256 {
            assert_eq!(img[[y, x, 0]], img[[y % 32, x % 32, 0]]);
        }
    }
    assert!(tile.indexed_iter().all(|((y, x), v)| (img[[y, x, 0]] - v).abs() <= 0.5 / 65535.0 + 1e-12));
}

#[test]
fn plot_writes_one_panel_per_scene() {
    let fx = Fixture::new("e2e", 1);
    let manifest = Manifest::load(&fx.path("data/manifest.txt")).unwrap();
    let scenes: Vec<PathBuf> = manifest.entries.iter().take(3).map(|e| fx.path("data").join(&e.path)).collect();
    let out = fx.path("plot");
    let ckpt = fx.checkpoint();
    let mut args = vec!["plot", "--checkpoint", s(&ckpt), "--out", s(&out)];
    args.extend(scenes.iter().map(|p| s(p)));
    ok(&args);
    let mut panels: Vec<_> = std::fs::read_dir(out.join("panels")).unwrap().map(|e| e.unwrap().file_name()).collect();
    panels.sort();
    assert_eq!(panels.len(), 3);
    let img = read_image(&out.join("panels").join(&panels[0])).unwrap();
    assert_eq!((img.dim().0, img.dim().1), (16, 64));
}

#[test]
fn failures_exit_nonzero_and_leave_a_marker() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    synth(&out, 4, 2);
    let res = codedlf(&["eval", "--checkpoint", s(&dir.path().join("missing.h5")), "--manifest", s(&out.join("manifest.txt")), "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error:"));
    assert!(out.join(FAILURE_MARKER).exists());
    synth(&out, 4, 2);
    assert!(!out.join(FAILURE_MARKER).exists());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[train]\nlr = -1.0\n").unwrap();
    let res = codedlf(&["train", "--config", s(&bad), "--out", s(&dir.path().join("never"))]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("train.lr"));
    assert!(!dir.path().join("never").exists());
}
