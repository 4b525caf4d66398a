//! Acceptance criteria 1-9. Run with `cargo test -p codedlf-validation --test acceptance`;
//! pass criterion numbers as arguments to run a subset.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use clap::Parser;
use codedlf::data::{
    augment, extract_patches, random_scene_spec, split_dataset, synth_scene, AugmentationConfig, PatchRecord,
    SplitRatios, SynthDatasetSpec, TextureKind,
};
use codedlf::io::{decode_pfm, encode_pfm, load_scene, read_pfm_gray, save_scene, write_pfm_gray, Split};
use codedlf::metrics::{badpix, evaluate, mae, mse, pseudo_huber, total_variation, BADPIX_THRESHOLDS};
use codedlf::net::{init_network, NetworkConfig, NormKind, Parameters};
use codedlf::sensing::{
    adjoint_project, build_dense_operator, forward_project, CodedMask, LightField, Measurement, NoiseModel,
    ShearGeometry,
};
use codedlf::train::{
    self, batch_gradients, batch_loss, init_mask, train_step, Checkpoint, MaskInit, TrainConfig, TrainData,
    TrainMode, TrainState,
};
use codedlf_cli::{Cli, Command};
use codedlf_validation::{run_all, selected, Criterion, Verdict};
use ndarray::{arr1, arr2, Array1, Array2, Array3, Array5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OPERATOR_TOL: f64 = 1e-12;
const ADJOINT_TOL: f64 = 1e-12;
const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;
/// Denominator floor of the finite-difference relative error.
const FD_FLOOR: f64 = 1e-6;
const FD_PARAMS: usize = 20;
const BOX_LR_FACTOR: f64 = 100.0;
const BOX_STEPS: usize = 50;
const SYNTH_SCENES: usize = 500;
const EXPECTED_PATCHES: usize = 32_000;
const EXPECTED_SPLIT: [usize; 3] = [400, 50, 50];
const DESK_TRAIN: usize = 200;
const DESK_VAL: usize = 40;
const DESK_EPOCHS: usize = 30;
const DESK_SEEDS: [u64; 3] = [0, 1, 2];
const DESK_LOSS_FACTOR: f64 = 5.0;
const METRIC_EXACT: f64 = 1e-12;
const METRIC_TRIALS: usize = 1000;
const FLIP_TOL: f64 = 1e-6;
const FLIP_SPECS: u64 = 10;
const EVAL_TOL: f64 = 1e-6;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_mask(p: usize, r: &mut ChaCha8Rng) -> CodedMask {
    CodedMask::new(Array2::from_shape_fn((p, p), |_| r.random::<f64>())).unwrap()
}

fn random_lf(dims: (usize, usize, usize, usize, usize), r: &mut ChaCha8Rng) -> LightField {
    LightField::new(Array5::from_shape_fn(dims, |_| r.random::<f64>())).unwrap()
}

fn operator_oracle() -> Verdict {
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let mut r = rng(100 + i);
        let geom = ShearGeometry::new(3, 3, (i % 3) as usize).unwrap();
        let mask = random_mask([2, 4, 8][(i / 3 % 3) as usize], &mut r);
        let lf = random_lf((3, 3, 8, 8, 1), &mut r);
        let y = forward_project(&lf, &mask, &geom, &NoiseModel::none()).unwrap();
        let op = build_dense_operator(&mask, &geom, 8, 8).unwrap();
        let dense = op.dot(&Array1::from_iter(lf.data().iter().copied()));
        let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = y.data().iter().zip(&dense).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(err / scale);
    }
    Verdict::new(
        worst < OPERATOR_TOL,
        format!("20 instances, max rel err {worst:.2e} < {OPERATOR_TOL:e}"),
    )
}

fn adjoint_identity() -> Verdict {
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let mut r = rng(200 + i);
        let views = [1, 3, 5][r.random_range(0..3)];
        let views_t = [1, 3, 5][r.random_range(0..3)];
        let p = [1, 2, 4][r.random_range(0..3)];
        let (h, w) = (p * r.random_range(1..5), p * r.random_range(1..5));
        let c = if r.random::<bool>() { 3 } else { 1 };
        let geom = ShearGeometry::new(views, views_t, r.random_range(0..3)).unwrap();
        let mask = random_mask(p, &mut r);
        let f = random_lf((views, views_t, h, w, c), &mut r);
        let g = Measurement::new(Array3::from_shape_fn((h, w, c), |_| r.random_range(-1.0..1.0)));
        let lhs = forward_project(&f, &mask, &geom, &NoiseModel::none()).unwrap().dot(&g);
        let rhs = f.dot(&adjoint_project(&g, &mask, &geom).unwrap());
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    Verdict::new(
        worst < ADJOINT_TOL,
        format!("100 instances, max rel err {worst:.2e} < {ADJOINT_TOL:e}"),
    )
}

fn tiny_config(mode: TrainMode) -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        mask_size: 4,
        geometry: ShearGeometry::new(3, 3, 1).unwrap(),
        network: NetworkConfig {
            base_filters: 4,
            norm: NormKind::Batch,
            ..NetworkConfig::default()
        },
        augmentation: AugmentationConfig::identity(),
        ..TrainConfig::for_mode(mode)
    }
}

fn tiny_records(n: usize, size: usize, views: usize, seed: u64) -> Vec<PatchRecord> {
    let ds = SynthDatasetSpec {
        height: size,
        width: size,
        views,
        disparities: vec![-1.5, -0.5, 0.5, 1.0],
        seed,
        ..SynthDatasetSpec::default()
    };
    (0..n)
        .map(|i| extract_patches(&ds.scene(i).unwrap(), size, size).unwrap().remove(0))
        .collect()
}

/// Biases and BN shifts off zero, BN scales off one, so no gradient path is
/// trivially inactive.
fn perturbed_params(cfg: &TrainConfig) -> Parameters {
    let mut p = init_network(&cfg.network, 5).unwrap();
    let mut r = rng(9);
    for t in p.tensors_mut() {
        if t.trainable && (t.name.ends_with(".bias") || t.name.ends_with(".beta")) {
            t.data.iter_mut().for_each(|v| *v = r.random_range(-0.2..0.2));
        }
        if t.name.ends_with(".gamma") {
            t.data.iter_mut().for_each(|v| *v = r.random_range(0.5..1.5));
        }
    }
    p
}

fn fd_rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

fn gradient_oracle() -> Verdict {
    let cfg = tiny_config(TrainMode::E2e);
    let recs = tiny_records(2, 8, 3, 40);
    let keys = vec![vec![0], vec![1]];
    let params = perturbed_params(&cfg);
    let mask = init_mask(MaskInit::UniformBand, cfg.mask_size, 3).unwrap();
    let g = batch_gradients(&mask, &params, &cfg, &recs, &keys, true).unwrap();
    let gm = g.mask.unwrap();

    let mut worst_mask = 0.0f64;
    for ((i, j), a) in gm.indexed_iter() {
        let eval = |d: f64| {
            let mut tile = mask.tile().clone();
            tile[[i, j]] += d;
            batch_loss(&CodedMask::new(tile).unwrap(), &params, &cfg, &recs, &keys).unwrap()
        };
        let fd = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
        worst_mask = worst_mask.max(fd_rel(*a, fd));
    }

    let trainable: Vec<usize> = (0..params.tensors().len()).filter(|&i| params.tensors()[i].trainable).collect();
    let mut r = rng(77);
    let mut worst_param = 0.0f64;
    for _ in 0..FD_PARAMS {
        let ti = trainable[r.random_range(0..trainable.len())];
        let k = r.random_range(0..params.tensors()[ti].data.len());
        let eval = |d: f64| {
            let mut q = params.clone();
            q.tensors_mut()[ti].data[k] += d;
            batch_loss(&mask, &q, &cfg, &recs, &keys).unwrap()
        };
        let fd = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
        worst_param = worst_param.max(fd_rel(g.params.tensors[ti][k], fd));
    }
    Verdict::new(
        worst_mask < FD_TOL && worst_param < FD_TOL,
        format!(
            "{} mask entries max rel err {worst_mask:.2e}, {FD_PARAMS} parameters max rel err {worst_param:.2e} < {FD_TOL:e}",
            gm.len()
        ),
    )
}

fn constraint_suite() -> Verdict {
    let mut cfg = TrainConfig {
        batch_size: 4,
        mask_size: 8,
        ..tiny_config(TrainMode::E2e)
    };
    cfg.optimizer.learning_rate *= BOX_LR_FACTOR;
    let recs = tiny_records(8, 16, 3, 60);
    let mut state = TrainState::init(&cfg).unwrap();
    let initial = state.mask.tile().clone();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut at_bounds = 0;
    for step in 0..BOX_STEPS {
        let b = (step * cfg.batch_size) % recs.len();
        let batch = &recs[b..b + cfg.batch_size];
        let keys: Vec<Vec<u64>> = (0..batch.len()).map(|j| vec![step as u64, j as u64]).collect();
        train_step(&mut state, &cfg, batch, &keys).unwrap();
        let tile = state.mask.tile();
        lo = tile.iter().fold(lo, |m, v| m.min(*v));
        hi = tile.iter().fold(hi, |m, v| m.max(*v));
        at_bounds = at_bounds.max(tile.iter().filter(|v| **v == 0.0 || **v == 1.0).count());
    }
    let moved = state.mask.tile() != initial;
    Verdict::new(
        lo >= 0.0 && hi <= 1.0 && moved,
        format!(
            "{BOX_STEPS} steps at lr x{BOX_LR_FACTOR}: tile range [{lo}, {hi}], at most {at_bounds} entries on the box faces at once, mask moved: {moved}"
        ),
    )
}

fn synth_args(extra: &[&str]) -> codedlf_cli::commands::SynthArgs {
    let mut argv = vec!["codedlf", "synth-data"];
    argv.extend_from_slice(extra);
    match Cli::try_parse_from(argv).unwrap().command {
        Command::SynthData(a) => a,
        _ => unreachable!(),
    }
}

fn dataset_arithmetic() -> Verdict {
    // default synth-data geometry, streamed instead of written to disk
    let count = SYNTH_SCENES.to_string();
    let args = synth_args(&["--count", &count]);
    let spec = args.dataset_spec(0);
    let mut patches = 0;
    let mut dims = (0, 0, 0, 0, 0);
    for i in 0..args.count {
        let scene = spec.scene(i).unwrap();
        let d = scene.lightfield.dims();
        dims = (d.s, d.t, d.h, d.w, d.c);
        patches += extract_patches(&scene, 32, 32).unwrap().len();
    }
    let labels = args.labels(0).unwrap();
    let split = [Split::Train, Split::Val, Split::Test].map(|s| labels.iter().filter(|l| **l == s).count());
    let direct = split_dataset((0..SYNTH_SCENES).collect::<Vec<_>>(), &SplitRatios::default(), 0).unwrap();
    let direct = [direct.train.len(), direct.val.len(), direct.test.len()];
    Verdict::new(
        patches == EXPECTED_PATCHES && split == EXPECTED_SPLIT && direct == EXPECTED_SPLIT,
        format!("{SYNTH_SCENES} scenes of {dims:?} -> {patches} patches, split {split:?} (direct {direct:?})"),
    )
}

fn desk_records(range: std::ops::Range<usize>) -> Vec<PatchRecord> {
    let ds = SynthDatasetSpec {
        height: 32,
        width: 32,
        views: 7,
        channels: 3,
        disparities: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        max_foreground: 2,
        texture: TextureKind::RandomSmooth,
        seed: 6,
    };
    range
        .map(|i| extract_patches(&ds.scene(i).unwrap(), 32, 32).unwrap().remove(0))
        .collect()
}

struct DeskRun {
    mode: TrainMode,
    seed: u64,
    initial: f64,
    last: f64,
    best_val_mae: f64,
}

fn desk_config(mode: TrainMode, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: DESK_EPOCHS,
        batch_size: 16,
        seed,
        mask_seed: seed,
        augmentation: AugmentationConfig {
            seed,
            ..AugmentationConfig::default()
        },
        network: NetworkConfig {
            base_filters: 16,
            ..NetworkConfig::default()
        },
        ..TrainConfig::for_mode(mode)
    }
}

fn desk_regression() -> Verdict {
    let data = TrainData {
        train: desk_records(0..DESK_TRAIN),
        val: desk_records(DESK_TRAIN..DESK_TRAIN + DESK_VAL),
    };
    let jobs: Vec<(TrainMode, u64)> = [TrainMode::E2e, TrainMode::CnnFixedMask]
        .iter()
        .flat_map(|&m| DESK_SEEDS.iter().map(move |&s| (m, s)))
        .collect();
    let next = AtomicUsize::new(0);
    let runs = Mutex::new(Vec::new());
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(mode, seed)) = jobs.get(j) else { break };
                let out = train::train(&desk_config(mode, seed), &data, None, |_| {}).unwrap();
                let r = &out.report;
                runs.lock().unwrap().push(DeskRun {
                    mode,
                    seed,
                    initial: r.initial_train_loss,
                    last: r.final_train_loss().unwrap(),
                    best_val_mae: r.history.iter().map(|e| e.val.mae).fold(f64::INFINITY, f64::min),
                });
            });
        }
    });
    let mut runs = runs.into_inner().unwrap();
    runs.sort_by_key(|r| (r.mode == TrainMode::CnnFixedMask, r.seed));
    let of = |m: TrainMode| runs.iter().filter(move |r| r.mode == m);
    let e2e_ok = of(TrainMode::E2e).filter(|r| r.last <= r.initial / DESK_LOSS_FACTOR).count();
    let mean_mae = |m: TrainMode| of(m).map(|r| r.best_val_mae).sum::<f64>() / DESK_SEEDS.len() as f64;
    let (e2e_mae, cnn_mae) = (mean_mae(TrainMode::E2e), mean_mae(TrainMode::CnnFixedMask));
    let ratios: Vec<String> = runs
        .iter()
        .map(|r| {
            let tag = if r.mode == TrainMode::E2e { "e2e" } else { "cnn" };
            format!("{tag}/{} {:.3}->{:.3} (x{:.2})", r.seed, r.initial, r.last, r.initial / r.last)
        })
        .collect();
    let a = e2e_ok == DESK_SEEDS.len();
    let b = e2e_mae <= cnn_mae;
    Verdict::new(
        a && b,
        format!(
            "(a) {e2e_ok}/{} e2e seeds reach initial/{DESK_LOSS_FACTOR}: {}; (b) mean best val MAE e2e {e2e_mae:.4} vs cnn {cnn_mae:.4}: {}; train loss {}",
            DESK_SEEDS.len(),
            if a { "ok" } else { "not met" },
            if b { "ok" } else { "not met" },
            ratios.join(", ")
        ),
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= METRIC_EXACT
}

fn metric_suite() -> Verdict {
    let mut failures: Vec<&str> = Vec::new();
    let mut check = |ok: bool, what: &'static str| {
        if !ok {
            failures.push(what);
        }
    };
    let z = arr1(&[0.3, -1.2, 2.0, 0.0]);
    check(pseudo_huber(&z, &z, 1.0).unwrap() == 0.0, "pseudo_huber(pred = gt)");
    check(mae(&z, &z).unwrap() == 0.0 && mse(&z, &z).unwrap() == 0.0, "mae/mse(pred = gt)");
    check(badpix(&z, &z, 0.01).unwrap() == 0.0, "badpix(pred = gt)");
    let ph1 = pseudo_huber(&arr1(&[1.0]), &arr1(&[0.0]), 1.0).unwrap();
    check(close(ph1, 2f64.sqrt() - 1.0) && (ph1 - 0.414214).abs() < 1e-6, "pseudo_huber unit residual");
    let mut r = rng(7);
    let small = Array1::from_shape_fn(256, |_| r.random_range(-0.05..0.05));
    let zeros = Array1::zeros(256);
    let half = mse(&small, &zeros).unwrap() / 2.0;
    check(
        (pseudo_huber(&small, &zeros, 1.0).unwrap() - half).abs() / half < 1e-3,
        "pseudo_huber small residuals",
    );
    let zero2 = arr1(&[0.0, 0.0]);
    check(
        close(mae(&arr1(&[1.0, -1.0]), &zero2).unwrap(), 1.0) && close(mse(&arr1(&[1.0, -1.0]), &zero2).unwrap(), 1.0),
        "unit residuals",
    );
    check(
        close(mae(&arr1(&[0.1, 0.3]), &zero2).unwrap(), 0.2) && close(mse(&arr1(&[0.1, 0.3]), &zero2).unwrap(), 0.05),
        "hand residuals",
    );
    check(
        badpix(&arr1(&[0.02, 0.05, 0.10, 0.0]), &arr1(&[0.0; 4]), 0.03).unwrap() == 50.0,
        "badpix direct count",
    );
    check(total_variation(&Array2::from_elem((3, 4), 0.7)).unwrap() == 0.0, "tv constant");
    let m2 = arr2(&[[0.0, 1.0], [0.0, 1.0]]);
    check(close(total_variation(&m2).unwrap(), 0.5), "tv 2x2");
    let map = Array2::from_shape_fn((5, 6), |_| r.random_range(-2.0..2.0));
    let tv = total_variation(&map).unwrap();
    check(
        close(total_variation(&map.mapv(|v| -3.0 * v)).unwrap(), 3.0 * tv),
        "tv homogeneity",
    );
    let same = Array3::from_shape_fn((2, 4, 4), |_| r.random::<f64>());
    let rep = evaluate(&same, &same, 1.0).unwrap();
    check(
        [rep.pseudo_huber, rep.mae, rep.mse, rep.badpix01, rep.badpix03, rep.badpix07] == [0.0; 6] && rep.tv > 0.0,
        "evaluate identical pairs",
    );
    let p1 = Array3::from_shape_fn((1, 4, 5), |_| r.random_range(-1.0..1.0));
    let g1 = Array3::from_shape_fn((1, 4, 5), |_| r.random_range(-1.0..1.0));
    let rep = evaluate(&p1, &g1, 1.0).unwrap();
    let (pv, gv) = (p1.index_axis(ndarray::Axis(0), 0), g1.index_axis(ndarray::Axis(0), 0));
    check(
        close(rep.pseudo_huber, pseudo_huber(&pv, &gv, 1.0).unwrap())
            && close(rep.mae, mae(&pv, &gv).unwrap())
            && close(rep.mse, mse(&pv, &gv).unwrap())
            && close(rep.badpix03, badpix(&pv, &gv, 0.03).unwrap())
            && close(rep.tv, total_variation(&pv).unwrap()),
        "evaluate single sample",
    );
    // residuals {1, 0, 0, 0} and {0.5, 0.5, 0.5, 0.5}: abs 3 / 8, sq 2 / 8
    let p2 = Array3::from_shape_vec((2, 2, 2), vec![1.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.5]).unwrap();
    let rep = evaluate(&p2, &Array3::zeros((2, 2, 2)), 1.0).unwrap();
    let ph = ((2f64.sqrt() - 1.0) + 4.0 * (1.25f64.sqrt() - 1.0)) / 8.0;
    check(
        close(rep.mae, 0.375) && close(rep.mse, 0.25) && close(rep.pseudo_huber, ph) && close(rep.badpix07, 62.5),
        "evaluate two samples pooled",
    );
    check(close(rep.tv, (2.0 + 0.0) / 8.0), "evaluate tv of predictions");

    let mut order_violations = 0;
    let mut bound_violations = 0;
    for trial in 0..METRIC_TRIALS {
        let mut r = rng(10_000 + trial as u64);
        let n = r.random_range(1..64);
        let scale = [0.01, 0.1, 1.0, 10.0][trial % 4];
        let res = Array1::from_shape_fn(n, |_| r.random_range(-scale..scale));
        let zero = Array1::zeros(n);
        let b: Vec<f64> = BADPIX_THRESHOLDS.iter().map(|t| badpix(&res, &zero, *t).unwrap()).collect();
        if !(b[0] >= b[1] && b[1] >= b[2]) {
            order_violations += 1;
        }
        let ph = pseudo_huber(&res, &zero, 1.0).unwrap();
        if ph > mse(&res, &zero).unwrap() / 2.0 || ph > mae(&res, &zero).unwrap() {
            bound_violations += 1;
        }
    }
    check(order_violations == 0, "badpix monotonicity");
    check(bound_violations == 0, "pseudo_huber bounds");
    let pass = failures.is_empty();
    Verdict::new(
        pass,
        if pass {
            format!("all examples hold to {METRIC_EXACT:e}; {METRIC_TRIALS} random arrays: badpix monotone, pseudo_huber <= mse/2 and <= mae")
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn flip_consistency() -> Verdict {
    let flip = AugmentationConfig {
        hflip_prob: 1.0,
        ..AugmentationConfig::identity()
    };
    let mut worst = 0.0f64;
    for k in 0..FLIP_SPECS {
        let mut r = rng(300 + k);
        let n = [8, 12, 16, 20][r.random_range(0..4)];
        let views = [3, 5, 7][r.random_range(0..3)];
        let channels = if r.random::<bool>() { 3 } else { 1 };
        let texture = if k % 2 == 0 { TextureKind::RandomSmooth } else { TextureKind::Checker };
        let spec = random_scene_spec(n, n, views, channels, &[-1.5, -1.0, -0.25, 0.0, 0.5, 1.25, 2.0], 3, texture, 400 + k);
        let scene = synth_scene(&spec).unwrap();
        let rec = extract_patches(&scene, n, n).unwrap().remove(0);
        let flipped = augment(&rec, &flip, k).unwrap();
        let mirrored = synth_scene(&spec.mirrored_x()).unwrap();
        let dl = flipped
            .lightfield
            .data()
            .iter()
            .zip(mirrored.lightfield.data())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let dd = flipped
            .disparity
            .iter()
            .zip(mirrored.disparity.data())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(dl).max(dd);
    }
    Verdict::new(
        worst <= FLIP_TOL,
        format!("{FLIP_SPECS} random specs, max abs diff {worst:.2e} <= {FLIP_TOL:e}"),
    )
}

fn run_cli(argv: &[&str]) {
    let mut full = vec!["codedlf"];
    full.extend_from_slice(argv);
    codedlf_cli::run(&Cli::try_parse_from(full).unwrap()).unwrap();
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>());
    (lines.next().unwrap(), lines.collect())
}

fn serialization() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let scene = synth_scene(&random_scene_spec(16, 24, 5, 3, &[-1.5, 0.0, 2.0], 2, TextureKind::Checker, 12)).unwrap();
    let scene_path = root.join("scene.h5");
    save_scene(&scene_path, &scene).unwrap();
    let scene_ok = load_scene(&scene_path).unwrap() == scene;

    let cfg = TrainConfig {
        epochs: 2,
        ..tiny_config(TrainMode::E2e)
    };
    let recs = tiny_records(6, 8, 3, 90);
    let data = TrainData {
        train: recs[..4].to_vec(),
        val: recs[4..].to_vec(),
    };
    let out = train::train(&cfg, &data, None, |_| {}).unwrap();
    let ck_path = root.join("last.h5");
    out.last.save(&ck_path).unwrap();
    let ckpt_ok = Checkpoint::load(&ck_path).unwrap() == out.last;

    let mut r = rng(5);
    let map = Array2::from_shape_fn((7, 9), |_| r.random_range(-4.0f32..4.0) as f64);
    let pfm_path = root.join("map.pfm");
    write_pfm_gray(&pfm_path, &map).unwrap();
    let raw = Array3::from_shape_fn((3, 5, 3), |_| r.random_range(-1e3f32..1e3));
    let pfm_ok = read_pfm_gray(&pfm_path).unwrap() == map && decode_pfm(&encode_pfm(&raw).unwrap()).unwrap().data == raw;

    // train and eval through the command line on a tiny dataset
    let data_dir = root.join("data");
    let data_s = data_dir.to_str().unwrap();
    run_cli(&["synth-data", "--count", "6", "--height", "16", "--width", "16", "--views", "3", "--val-ratio", "0.34", "--test-ratio", "0", "--seed", "3", "--out", data_s]);
    let config = root.join("run.toml");
    std::fs::write(
        &config,
        "[geometry]\nviews_s = 3\nviews_t = 3\n[mask]\nsize = 8\n[network]\nbase_filters = 4\n[train]\nepochs = 2\nbatch = 2\nseeds = [7]\n[data]\nmanifest = \"data/manifest.txt\"\npatch = 8\nstride = 8\n",
    )
    .unwrap();
    let train_dir = root.join("train");
    run_cli(&["train", "--quiet", "--config", config.to_str().unwrap(), "--out", train_dir.to_str().unwrap()]);
    let seed_dir = train_dir.join("seed_7");
    let eval_dir = root.join("eval");
    run_cli(&[
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--checkpoint",
        seed_dir.join("last.h5").to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    let (rh, rrows) = csv_rows(&seed_dir.join("report.csv"));
    let (eh, erows) = csv_rows(&eval_dir.join("metrics.csv"));
    let last = rrows.last().unwrap();
    let mut worst = 0.0f64;
    for m in ["pseudo_huber", "mae", "mse", "badpix01", "badpix03", "badpix07", "tv"] {
        let ri = rh.iter().position(|h| *h == format!("val_{m}")).unwrap();
        let ei = eh.iter().position(|h| h == m).unwrap();
        let (a, b): (f64, f64) = (last[ri].parse().unwrap(), erows[0][ei].parse().unwrap());
        worst = worst.max((a - b).abs());
    }
    let eval_ok = worst <= EVAL_TOL;
    Verdict::new(
        scene_ok && ckpt_ok && pfm_ok && eval_ok,
        format!(
            "bit-exact scene {scene_ok}, checkpoint {ckpt_ok}, PFM {pfm_ok}; eval vs last report row max abs diff {worst:.1e} <= {EVAL_TOL:e}"
        ),
    )
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "operator oracle",
            budget: Duration::from_secs(5),
            run: operator_oracle,
        },
        Criterion {
            id: 2,
            name: "adjoint identity",
            budget: Duration::from_secs(5),
            run: adjoint_identity,
        },
        Criterion {
            id: 3,
            name: "gradient oracle",
            budget: Duration::from_secs(120),
            run: gradient_oracle,
        },
        Criterion {
            id: 4,
            name: "constraint suite",
            budget: Duration::from_secs(60),
            run: constraint_suite,
        },
        Criterion {
            id: 5,
            name: "dataset arithmetic",
            budget: Duration::from_secs(600),
            run: dataset_arithmetic,
        },
        Criterion {
            id: 6,
            name: "desk-scale learning regression",
            budget: Duration::from_secs(1200),
            run: desk_regression,
        },
        Criterion {
            id: 7,
            name: "metric unit suite",
            budget: Duration::from_secs(10),
            run: metric_suite,
        },
        Criterion {
            id: 8,
            name: "augmentation geometry",
            budget: Duration::from_secs(60),
            run: flip_consistency,
        },
        Criterion {
            id: 9,
            name: "serialization",
            budget: Duration::from_secs(120),
            run: serialization,
        },
    ];
    let only = selected(std::env::args().skip(1));
    if !run_all(&criteria, only.as_deref()) {
        std::process::exit(1);
    }
}
