//! Joint optimization of the mask tile and the decoder.
//!
//! A training step simulates the coded measurement of every patch in the
//! batch, feeds it (divided by the view count) through the decoder, and
//! backpropagates the mean pseudo-Huber loss into the decoder parameters
//! and, in [`TrainMode::E2e`], through the sensing operator into the mask
//! tile. Both are updated with RMSprop; the mask is then clamped to `[0, 1]`.

mod checkpoint;
mod optim;
mod report;

use std::time::Instant;

use ndarray::{Array2, Array3, Array4, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{augment, AugmentationConfig, DisparityMap, PatchRecord};
use crate::error::{Error, Result};
use crate::metrics::{pseudo_huber_kernel, pseudo_huber_kernel_grad, MetricsAccumulator, MetricsReport};
use crate::net::{init_network, Decoder, Gradients, Mode, NetworkConfig, Parameters};
use crate::seed;
use crate::sensing::{
    forward_project, mask_tile_gradient, CodedMask, LightField, Measurement, NoiseModel, ShearGeometry,
};

pub use checkpoint::Checkpoint;
pub use optim::RmsProp;
pub use report::{EpochRecord, TrainReport, REPORT_COLUMNS};

/// Stream tags for derived seeds.
const TAG_SHUFFLE: u64 = 1;
const TAG_AUGMENT: u64 = 2;
const TAG_NOISE_TRAIN: u64 = 3;
const TAG_NOISE_VAL: u64 = 4;
const TAG_NOISE_INFER: u64 = 5;
const TAG_NOISE_PROBE: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Mask and decoder are optimized jointly.
    E2e,
    /// The mask stays at its initialization; only the decoder learns.
    CnnFixedMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskInit {
    /// Uniform(0.3, 0.7).
    UniformBand,
    /// Normal(0.5, 0.25) clipped to `[0, 1]`.
    RandomNormal,
}

impl MaskInit {
    /// Default initialization for a mode: fixed baselines use the clipped
    /// normal pattern, learnable masks start from the uniform band.
    pub fn for_mode(mode: TrainMode) -> Self {
        match mode {
            TrainMode::E2e => MaskInit::UniformBand,
            TrainMode::CnnFixedMask => MaskInit::RandomNormal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: RmsProp,
    /// Pseudo-Huber scale.
    pub delta: f64,
    pub mask_init: MaskInit,
    pub mask_size: usize,
    pub mask_seed: u64,
    /// Base seed for network initialization, shuffling, augmentation and noise.
    pub seed: u64,
    pub augmentation: AugmentationConfig,
    pub geometry: ShearGeometry,
    pub network: NetworkConfig,
    pub noise: NoiseModel,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::E2e,
            epochs: 100,
            batch_size: 16,
            optimizer: RmsProp::default(),
            delta: 1.0,
            mask_init: MaskInit::UniformBand,
            mask_size: 32,
            mask_seed: 0,
            seed: 0,
            augmentation: AugmentationConfig::default(),
            geometry: ShearGeometry::default(),
            network: NetworkConfig::default(),
            noise: NoiseModel::none(),
        }
    }
}

impl TrainConfig {
    /// Defaults for `mode`, including its default mask initialization.
    pub fn for_mode(mode: TrainMode) -> Self {
        Self {
            mode,
            mask_init: MaskInit::for_mode(mode),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, detail: String| Error::ValueRange {
            key: key.into(),
            detail,
        };
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && o.learning_rate.is_finite()) {
            return Err(bad("learning_rate", format!("must be positive, got {}", o.learning_rate)));
        }
        if !(0.0..1.0).contains(&o.decay) {
            return Err(bad("decay", format!("must be in [0, 1), got {}", o.decay)));
        }
        if !(o.epsilon > 0.0 && o.epsilon.is_finite()) {
            return Err(bad("epsilon", format!("must be positive, got {}", o.epsilon)));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(bad("delta", format!("must be positive, got {}", self.delta)));
        }
        if self.mask_size == 0 {
            return Err(bad("mask_size", "must be at least 1".into()));
        }
        self.augmentation.validate()?;
        self.geometry.validate()?;
        self.network.validate()?;
        self.noise.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parse("train config", e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::parse("train config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Raw (pre-clip) draws of a mask initialization.
pub(crate) fn mask_draws(init: MaskInit, n: usize, seed_: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed_);
    match init {
        MaskInit::RandomNormal => {
            let normal = Normal::new(0.5, 0.25).expect("valid normal");
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        }
        MaskInit::UniformBand => (0..n).map(|_| rng.random_range(0.3..0.7)).collect(),
    }
}

/// Deterministic `p x p` initial mask tile.
pub fn init_mask(init: MaskInit, p: usize, seed_: u64) -> Result<CodedMask> {
    if p == 0 {
        return Err(Error::arg("mask tile size must be at least 1"));
    }
    let draws = mask_draws(init, p * p, seed_);
    let tile = Array2::from_shape_vec((p, p), draws.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
        .expect("p*p draws");
    CodedMask::new(tile)
}

/// Mutable optimization state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub mask: CodedMask,
    pub params: Parameters,
    pub mask_acc: Array2<f64>,
    /// RMSprop accumulators aligned with `params.tensors()`; empty for buffers.
    pub param_acc: Vec<Vec<f64>>,
    pub step: u64,
    /// Completed epochs.
    pub epoch: usize,
}

impl TrainState {
    pub fn init(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mask = init_mask(cfg.mask_init, cfg.mask_size, cfg.mask_seed)?;
        let params = init_network(&cfg.network, cfg.seed)?;
        let param_acc = params
            .tensors()
            .iter()
            .map(|t| if t.trainable { vec![0.0; t.data.len()] } else { Vec::new() })
            .collect();
        Ok(Self {
            mask_acc: Array2::zeros(mask.tile().dim()),
            mask,
            params,
            param_acc,
            step: 0,
            epoch: 0,
        })
    }
}

/// Decoder input for a batch: measurements `[b, c, h, w]` divided by `S*T`.
pub fn decoder_input(
    records: &[PatchRecord],
    mask: &CodedMask,
    cfg: &TrainConfig,
    noise_keys: &[Vec<u64>],
) -> Result<Array4<f64>> {
    let first = records.first().ok_or_else(|| Error::arg("empty batch"))?;
    let d = first.lightfield.dims();
    if d.c != cfg.network.in_channels {
        return Err(Error::dim(format!(
            "light field has {} channels, decoder expects {}",
            d.c, cfg.network.in_channels
        )));
    }
    let scale = 1.0 / cfg.geometry.num_views() as f64;
    let mut input = Array4::<f64>::zeros((records.len(), d.c, d.h, d.w));
    for (b, (rec, keys)) in records.iter().zip(noise_keys).enumerate() {
        if rec.lightfield.dims() != d {
            return Err(Error::dim("batch mixes light field shapes"));
        }
        let meas = forward_project(&rec.lightfield, mask, &cfg.geometry, &cfg.noise.reseeded(keys))?;
        let m = meas.data();
        let mut dst = input.index_axis_mut(Axis(0), b);
        for ((y, x, c), v) in m.indexed_iter() {
            dst[[c, y, x]] = v * scale;
        }
    }
    Ok(input)
}

fn targets(records: &[PatchRecord]) -> Array3<f64> {
    let (h, w) = records[0].size();
    let mut gt = Array3::<f64>::zeros((records.len(), h, w));
    for (b, r) in records.iter().enumerate() {
        gt.index_axis_mut(Axis(0), b).assign(&r.disparity);
    }
    gt
}

/// Mean pseudo-Huber loss and its gradient with respect to `pred`.
fn loss_and_grad(pred: &Array4<f64>, gt: &Array3<f64>, delta: f64) -> (f64, Array4<f64>) {
    let (b, _, h, w) = pred.dim();
    let n = (b * h * w) as f64;
    let mut grad = Array4::<f64>::zeros(pred.dim());
    let mut loss = 0.0;
    for ((i, _, y, x), p) in pred.indexed_iter() {
        let r = p - gt[[i, y, x]];
        loss += pseudo_huber_kernel(r, delta);
        grad[[i, 0, y, x]] = pseudo_huber_kernel_grad(r, delta) / n;
    }
    (loss / n, grad)
}

/// Loss and gradients of one batch in training mode (batch statistics).
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: f64,
    pub params: Gradients,
    /// Present when the mask gradient was requested.
    pub mask: Option<Array2<f64>>,
}

fn check_batch(records: &[PatchRecord], noise_keys: &[Vec<u64>]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    if noise_keys.len() != records.len() {
        return Err(Error::arg("one noise key per record required"));
    }
    Ok(())
}

/// Training-mode loss of a batch without updating anything.
pub fn batch_loss(
    mask: &CodedMask,
    params: &Parameters,
    cfg: &TrainConfig,
    records: &[PatchRecord],
    noise_keys: &[Vec<u64>],
) -> Result<f64> {
    check_batch(records, noise_keys)?;
    let dec = Decoder::new(&cfg.network)?;
    let input = decoder_input(records, mask, cfg, noise_keys)?;
    let pass = dec.forward(params, &input, Mode::Train)?;
    Ok(loss_and_grad(&pass.output(), &targets(records), cfg.delta).0)
}

fn batch_pass(
    dec: &Decoder,
    mask: &CodedMask,
    params: &Parameters,
    cfg: &TrainConfig,
    records: &[PatchRecord],
    noise_keys: &[Vec<u64>],
    need_mask_grad: bool,
) -> Result<(BatchGradients, crate::net::ForwardPass)> {
    check_batch(records, noise_keys)?;
    let input = decoder_input(records, mask, cfg, noise_keys)?;
    let pass = dec.forward(params, &input, Mode::Train)?;
    let (loss, dpred) = loss_and_grad(&pass.output(), &targets(records), cfg.delta);
    if !loss.is_finite() {
        return Ok((
            BatchGradients {
                loss,
                params: Gradients { tensors: Vec::new() },
                mask: None,
            },
            pass,
        ));
    }
    let (pgrads, dinput) = dec.backward(params, &pass, &dpred, need_mask_grad)?;
    let mask_grad = match dinput {
        Some(dinput) => {
            let p = mask.tile_size();
            let scale = 1.0 / cfg.geometry.num_views() as f64;
            let mut acc = Array2::<f64>::zeros((p, p));
            for (b, rec) in records.iter().enumerate() {
                let di = dinput.index_axis(Axis(0), b);
                let (c, h, w) = di.dim();
                let gm = Array3::from_shape_fn((h, w, c), |(y, x, ch)| di[[ch, y, x]] * scale);
                acc += &mask_tile_gradient(&rec.lightfield, &gm, &cfg.geometry, p)?;
            }
            Some(acc)
        }
        None => None,
    };
    Ok((
        BatchGradients {
            loss,
            params: pgrads,
            mask: mask_grad,
        },
        pass,
    ))
}

/// Loss with gradients for every trainable parameter and, when
/// `need_mask_grad`, for every mask tile entry.
pub fn batch_gradients(
    mask: &CodedMask,
    params: &Parameters,
    cfg: &TrainConfig,
    records: &[PatchRecord],
    noise_keys: &[Vec<u64>],
    need_mask_grad: bool,
) -> Result<BatchGradients> {
    let dec = Decoder::new(&cfg.network)?;
    Ok(batch_pass(&dec, mask, params, cfg, records, noise_keys, need_mask_grad)?.0)
}

fn non_finite(state: &TrainState, loss: f64) -> Error {
    let tile = state.mask.tile();
    let lo = tile.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = state
        .params
        .tensors()
        .iter()
        .map(|t| (t.name.as_str(), t.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))))
        .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    Error::NonFiniteLoss {
        step: state.step,
        snapshot: format!(
            "loss {loss}, epoch {}, mask range [{lo}, {hi}], largest |param| {} in `{}`",
            state.epoch, worst.1, worst.0
        ),
    }
}

/// One optimizer step on `records`; returns the batch loss before the update.
pub fn train_step(
    state: &mut TrainState,
    cfg: &TrainConfig,
    records: &[PatchRecord],
    noise_keys: &[Vec<u64>],
) -> Result<f64> {
    let dec = Decoder::new(&cfg.network)?;
    step_with(&dec, state, cfg, records, noise_keys)
}

fn step_with(
    dec: &Decoder,
    state: &mut TrainState,
    cfg: &TrainConfig,
    records: &[PatchRecord],
    noise_keys: &[Vec<u64>],
) -> Result<f64> {
    let learn_mask = cfg.mode == TrainMode::E2e;
    let (g, pass) = batch_pass(dec, &state.mask, &state.params, cfg, records, noise_keys, learn_mask)?;
    if !g.loss.is_finite() {
        return Err(non_finite(state, g.loss));
    }
    let opt = cfg.optimizer;
    for ((t, grad), acc) in state
        .params
        .tensors_mut()
        .iter_mut()
        .zip(&g.params.tensors)
        .zip(&mut state.param_acc)
    {
        if t.trainable {
            opt.update(&mut t.data, grad, acc);
        }
    }
    if let Some(mg) = &g.mask {
        let acc = &mut state.mask_acc;
        state.mask.update_projected(|tile| {
            let tile = tile.as_slice_mut().expect("standard layout");
            opt.update(tile, mg.as_slice().expect("standard layout"), acc.as_slice_mut().expect("standard layout"));
        });
    }
    dec.update_running_stats(&mut state.params, &pass);
    state.step += 1;
    Ok(g.loss)
}

/// Eval-mode predictions `[n, h, w]` for patches, in chunks of
/// `cfg.batch_size`, with validation noise keyed by position in `records`.
pub fn predict_patches(
    mask: &CodedMask,
    params: &Parameters,
    cfg: &TrainConfig,
    records: &[PatchRecord],
) -> Result<Array3<f64>> {
    let first = records.first().ok_or_else(|| Error::arg("cannot evaluate an empty patch set"))?;
    let (h, w) = first.size();
    let dec = Decoder::new(&cfg.network)?;
    let mut out = Array3::<f64>::zeros((records.len(), h, w));
    for (ci, chunk) in records.chunks(cfg.batch_size).enumerate() {
        let keys: Vec<Vec<u64>> = (0..chunk.len())
            .map(|j| vec![TAG_NOISE_VAL, (ci * cfg.batch_size + j) as u64])
            .collect();
        let input = decoder_input(chunk, mask, cfg, &keys)?;
        let pred = dec.forward(params, &input, Mode::Eval)?.output();
        let start = ci * cfg.batch_size;
        out.slice_mut(ndarray::s![start..start + chunk.len(), .., ..])
            .assign(&pred.index_axis(Axis(1), 0));
    }
    Ok(out)
}

/// Eval-mode metrics over patches; see [`predict_patches`].
pub fn evaluate_patches(
    mask: &CodedMask,
    params: &Parameters,
    cfg: &TrainConfig,
    records: &[PatchRecord],
) -> Result<MetricsReport> {
    let pred = predict_patches(mask, params, cfg, records)?;
    let mut acc = MetricsAccumulator::new(cfg.delta)?;
    acc.add(&pred, &targets(records))?;
    acc.finish()
}

/// Training-mode loss over `records` in order, without augmentation.
pub fn dataset_loss(mask: &CodedMask, params: &Parameters, cfg: &TrainConfig, records: &[PatchRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::arg("cannot evaluate an empty patch set"));
    }
    let mut total = 0.0;
    for (ci, chunk) in records.chunks(cfg.batch_size).enumerate() {
        let keys: Vec<Vec<u64>> = (0..chunk.len())
            .map(|j| vec![TAG_NOISE_PROBE, (ci * cfg.batch_size + j) as u64])
            .collect();
        total += batch_loss(mask, params, cfg, chunk, &keys)? * chunk.len() as f64;
    }
    Ok(total / records.len() as f64)
}

/// Training and validation patches.
#[derive(Debug, Clone, Default)]
pub struct TrainData {
    pub train: Vec<PatchRecord>,
    pub val: Vec<PatchRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Lowest validation MAE so far. `None` when resuming and no epoch of
    /// this run improved on the history carried by the resumed checkpoint.
    pub best: Option<Checkpoint>,
    pub last: Checkpoint,
    pub report: TrainReport,
}

fn compatible_for_resume(a: &TrainConfig, b: &TrainConfig) -> bool {
    TrainConfig { epochs: 0, ..a.clone() } == TrainConfig { epochs: 0, ..b.clone() }
}

/// Full epoch loop. `on_epoch` sees each finished epoch's record.
pub fn train(
    cfg: &TrainConfig,
    data: &TrainData,
    resume: Option<Checkpoint>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::arg("training split is empty"));
    }
    if data.val.is_empty() {
        return Err(Error::arg("validation split is empty"));
    }
    let dec = Decoder::new(&cfg.network)?;
    let (mut state, mut history, initial_train_loss, mut best, mut best_mae) = match resume {
        Some(ck) => {
            if !compatible_for_resume(&ck.config, cfg) {
                return Err(Error::arg("resume checkpoint was trained with a different configuration"));
            }
            let best_mae = ck.history.iter().map(|r| r.val.mae).fold(f64::INFINITY, f64::min);
            (ck.state, ck.history, ck.initial_train_loss, None, best_mae)
        }
        None => {
            let state = TrainState::init(cfg)?;
            let l0 = dataset_loss(&state.mask, &state.params, cfg, &data.train)?;
            let init = Checkpoint {
                config: cfg.clone(),
                state: state.clone(),
                initial_train_loss: l0,
                history: Vec::new(),
            };
            (state, Vec::new(), l0, Some(init), f64::INFINITY)
        }
    };

    let n = data.train.len();
    while state.epoch < cfg.epochs {
        let epoch = state.epoch as u64;
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng_for(cfg.seed, &[TAG_SHUFFLE, epoch]));
        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch = idx
                .iter()
                .map(|&i| augment(&data.train[i], &cfg.augmentation, seed::derive(cfg.seed, &[TAG_AUGMENT, epoch, i as u64])))
                .collect::<Result<Vec<_>>>()?;
            let keys: Vec<Vec<u64>> = idx.iter().map(|&i| vec![TAG_NOISE_TRAIN, epoch, i as u64]).collect();
            loss_sum += step_with(&dec, &mut state, cfg, &batch, &keys)? * batch.len() as f64;
        }
        let val = evaluate_patches(&state.mask, &state.params, cfg, &data.val)?;
        state.epoch += 1;
        let rec = EpochRecord {
            epoch: state.epoch,
            train_loss: loss_sum / n as f64,
            val,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&rec);
        let mae = rec.val.mae;
        history.push(rec);
        if mae < best_mae {
            best_mae = mae;
            best = Some(Checkpoint {
                config: cfg.clone(),
                state: state.clone(),
                initial_train_loss,
                history: history.clone(),
            });
        }
    }
    let last = Checkpoint {
        config: cfg.clone(),
        state,
        initial_train_loss,
        history: history.clone(),
    };
    Ok(TrainOutcome {
        best,
        last,
        report: TrainReport {
            initial_train_loss,
            history,
        },
    })
}

/// Simulate the measurement of a full light field with the checkpointed
/// mask and decode the central-view disparity.
pub fn infer(ckpt: &Checkpoint, lf: &LightField) -> Result<(Measurement, DisparityMap)> {
    let cfg = &ckpt.config;
    let d = lf.dims();
    if (d.s, d.t) != (cfg.geometry.num_views_s, cfg.geometry.num_views_t) {
        return Err(Error::dim(format!(
            "light field has {}x{} views, checkpoint geometry is {}x{}",
            d.s, d.t, cfg.geometry.num_views_s, cfg.geometry.num_views_t
        )));
    }
    let m = cfg.network.spatial_multiple();
    if !d.h.is_multiple_of(m) || !d.w.is_multiple_of(m) {
        return Err(Error::dim(format!("spatial dims {}x{} must be multiples of {m}", d.h, d.w)));
    }
    let meas = forward_project(lf, &ckpt.state.mask, &cfg.geometry, &cfg.noise.reseeded(&[TAG_NOISE_INFER]))?;
    let rec = PatchRecord {
        lightfield: lf.clone(),
        disparity: Array2::zeros((d.h, d.w)),
        scene_name: String::new(),
        origin: (0, 0),
    };
    let input = decoder_input(std::slice::from_ref(&rec), &ckpt.state.mask, cfg, &[vec![TAG_NOISE_INFER]])?;
    let dec = Decoder::new(&cfg.network)?;
    let pred = dec.forward(&ckpt.state.params, &input, Mode::Eval)?.output();
    let map = pred.index_axis(Axis(0), 0).index_axis(Axis(0), 0).to_owned();
    Ok((meas, DisparityMap::new(map)?))
}
