//! Shallow residual U-net decoder.
//!
//! The network maps a `[batch, in_channels, h, w]` measurement stack to a
//! `[batch, 1, h, w]` disparity estimate:
//!
//! - encoder levels: residual block, then 2x2 max pooling;
//! - bottleneck: residual block;
//! - decoder levels (up-projection): 2x nearest upsampling, concatenation
//!   with the matching encoder output, residual block;
//! - head: 1x1 linear convolution to one channel.
//!
//! A residual block is `relu(norm(conv3(relu(norm(conv3(x))))) + skip(x))`
//! where the skip is a 1x1 projection whenever the channel count changes.
//! Widths double per level starting from `base_filters`.
//!
//! Gradients are computed by hand; [`Decoder::backward`] is exercised against
//! finite differences in the test suite.

mod layers;
mod tensor;

use ndarray::Array4;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use layers::{BnCache, ConvRef};
use tensor::Act;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Batch,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub in_channels: usize,
    pub base_filters: usize,
    pub levels: usize,
    pub norm: NormKind,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            base_filters: 64,
            levels: 3,
            norm: NormKind::Batch,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels != 3 {
            return Err(Error::arg(format!("decoder has exactly 3 levels, got {}", self.levels)));
        }
        if self.in_channels == 0 || self.base_filters == 0 {
            return Err(Error::arg("in_channels and base_filters must be positive"));
        }
        Ok(())
    }

    /// Spatial dims must be multiples of this.
    pub fn spatial_multiple(&self) -> usize {
        1 << (self.levels - 1)
    }

    pub fn filters(&self, level: usize) -> usize {
        self.base_filters << level
    }
}

/// Momentum of the running normalization statistics.
const BN_MOMENTUM: f64 = 0.1;

/// One named parameter array. Buffers (running statistics) are
/// `trainable = false` and never see gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub trainable: bool,
}

/// Decoder weights in a stable, layout-determined order.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    config: NetworkConfig,
    tensors: Vec<Tensor>,
}

impl Parameters {
    /// Rebuild from stored tensors; names and shapes must match the layout.
    pub fn from_tensors(config: NetworkConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let layout = Layout::new(&config)?;
        if tensors.len() != layout.specs.len() {
            return Err(Error::dim(format!(
                "expected {} parameter arrays, got {}",
                layout.specs.len(),
                tensors.len()
            )));
        }
        for (t, s) in tensors.iter().zip(&layout.specs) {
            if t.name != s.name || t.shape != s.shape || t.trainable != s.trainable {
                return Err(Error::dim(format!(
                    "parameter `{}` {:?} does not match layout `{}` {:?}",
                    t.name, t.shape, s.name, s.shape
                )));
            }
            if t.data.len() != s.shape.iter().product::<usize>() {
                return Err(Error::dim(format!("parameter `{}` has wrong element count", t.name)));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::ValueRange {
                    key: t.name.clone(),
                    detail: "non-finite parameter".into(),
                });
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.tensors.iter().filter(|t| t.trainable).map(|t| t.data.len()).sum()
    }

    fn data(&self, i: usize) -> &[f64] {
        &self.tensors[i].data
    }
}

/// Gradient arrays aligned with [`Parameters::tensors`]; empty for buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(p: &Parameters) -> Self {
        Self {
            tensors: p
                .tensors
                .iter()
                .map(|t| if t.trainable { vec![0.0; t.data.len()] } else { Vec::new() })
                .collect(),
        }
    }

    fn add(&mut self, idx: usize, g: &[f64]) {
        self.tensors[idx].iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
}

#[derive(Debug, Clone)]
struct TensorSpec {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
    init: Init,
}

#[derive(Debug, Clone, Copy)]
enum Init {
    /// Normal with std `sqrt(gain / fan_in)`.
    FanIn { fan_in: usize, gain: f64 },
    Const(f64),
}

#[derive(Debug, Clone, Copy)]
struct ConvIdx {
    weight: usize,
    bias: Option<usize>,
    cout: usize,
    k: usize,
}

#[derive(Debug, Clone, Copy)]
struct BnIdx {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy)]
struct BlockIdx {
    conv1: ConvIdx,
    bn1: Option<BnIdx>,
    conv2: ConvIdx,
    bn2: Option<BnIdx>,
    proj: Option<ConvIdx>,
}

#[derive(Debug, Clone)]
struct Layout {
    specs: Vec<TensorSpec>,
    encoders: Vec<BlockIdx>,
    bottleneck: BlockIdx,
    decoders: Vec<BlockIdx>,
    head: ConvIdx,
}

struct LayoutBuilder {
    specs: Vec<TensorSpec>,
    norm: NormKind,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, shape: Vec<usize>, trainable: bool, init: Init) -> usize {
        self.specs.push(TensorSpec {
            name,
            shape,
            trainable,
            init,
        });
        self.specs.len() - 1
    }

    fn conv(&mut self, prefix: &str, cin: usize, cout: usize, k: usize, bias: bool, gain: f64) -> ConvIdx {
        let fan_in = cin * k * k;
        let weight = self.push(
            format!("{prefix}.weight"),
            vec![cout, cin, k, k],
            true,
            Init::FanIn { fan_in, gain },
        );
        let bias = bias.then(|| self.push(format!("{prefix}.bias"), vec![cout], true, Init::Const(0.0)));
        ConvIdx { weight, bias, cout, k }
    }

    fn bn(&mut self, prefix: &str, c: usize) -> Option<BnIdx> {
        if self.norm == NormKind::None {
            return None;
        }
        Some(BnIdx {
            gamma: self.push(format!("{prefix}.gamma"), vec![c], true, Init::Const(1.0)),
            beta: self.push(format!("{prefix}.beta"), vec![c], true, Init::Const(0.0)),
            mean: self.push(format!("{prefix}.running_mean"), vec![c], false, Init::Const(0.0)),
            var: self.push(format!("{prefix}.running_var"), vec![c], false, Init::Const(1.0)),
        })
    }

    fn block(&mut self, prefix: &str, cin: usize, cout: usize) -> BlockIdx {
        // convolutions feeding a normalization layer carry no bias
        let bias = self.norm == NormKind::None;
        let conv1 = self.conv(&format!("{prefix}.conv1"), cin, cout, 3, bias, 2.0);
        let bn1 = self.bn(&format!("{prefix}.norm1"), cout);
        let conv2 = self.conv(&format!("{prefix}.conv2"), cout, cout, 3, bias, 2.0);
        let bn2 = self.bn(&format!("{prefix}.norm2"), cout);
        let proj = (cin != cout).then(|| self.conv(&format!("{prefix}.proj"), cin, cout, 1, bias, 1.0));
        BlockIdx {
            conv1,
            bn1,
            conv2,
            bn2,
            proj,
        }
    }
}

impl Layout {
    fn new(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut b = LayoutBuilder {
            specs: Vec::new(),
            norm: cfg.norm,
        };
        let depth = cfg.levels - 1;
        let mut encoders = Vec::with_capacity(depth);
        let mut cin = cfg.in_channels;
        for l in 0..depth {
            encoders.push(b.block(&format!("enc{}", l + 1), cin, cfg.filters(l)));
            cin = cfg.filters(l);
        }
        let bottleneck = b.block("bottleneck", cin, cfg.filters(depth));
        let mut decoders = Vec::with_capacity(depth);
        let mut below = cfg.filters(depth);
        for j in 0..depth {
            let level = depth - 1 - j;
            let out = cfg.filters(level);
            decoders.push(b.block(&format!("dec{}", j + 1), below + out, out));
            below = out;
        }
        let head = b.conv("head", cfg.base_filters, 1, 1, true, 1.0);
        Ok(Self {
            specs: b.specs,
            encoders,
            bottleneck,
            decoders,
            head,
        })
    }
}

/// Deterministic initialization: fan-in scaled normal kernels, zero biases,
/// unit normalization scale, zero shift.
pub fn init_network(cfg: &NetworkConfig, seed_: u64) -> Result<Parameters> {
    let layout = Layout::new(cfg)?;
    let mut rng = seed::rng(seed_);
    let tensors = layout
        .specs
        .iter()
        .map(|s| {
            let n: usize = s.shape.iter().product();
            let data = match s.init {
                Init::Const(v) => vec![v; n],
                Init::FanIn { fan_in, gain } => {
                    let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("finite std");
                    (0..n).map(|_| normal.sample(&mut rng)).collect()
                }
            };
            Tensor {
                name: s.name.clone(),
                shape: s.shape.clone(),
                data,
                trainable: s.trainable,
            }
        })
        .collect();
    Ok(Parameters {
        config: *cfg,
        tensors,
    })
}

/// Inference-mode forward pass.
pub fn forward(params: &Parameters, meas_batch: &Array4<f64>) -> Result<Array4<f64>> {
    let dec = Decoder::new(params.config())?;
    Ok(dec.forward(params, meas_batch, Mode::Eval)?.output())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; caches everything needed by [`Decoder::backward`].
    Train,
    /// Running statistics.
    Eval,
}

struct BlockCache {
    bn1: Option<BnCache>,
    a1: Act,
    bn2: Option<BnCache>,
    out: Act,
}

/// Result of a forward pass, holding the activations for backpropagation.
pub struct ForwardPass {
    mode: Mode,
    block_inputs: Vec<Act>,
    caches: Vec<BlockCache>,
    pool_args: Vec<Vec<u8>>,
    output: Act,
}

impl ForwardPass {
    pub fn output(&self) -> Array4<f64> {
        self.output.to_nchw()
    }
}

/// Layout-bound evaluator for a [`NetworkConfig`].
pub struct Decoder {
    cfg: NetworkConfig,
    layout: Layout,
}

impl Decoder {
    pub fn new(cfg: &NetworkConfig) -> Result<Self> {
        Ok(Self {
            cfg: *cfg,
            layout: Layout::new(cfg)?,
        })
    }

    fn blocks(&self) -> impl Iterator<Item = &BlockIdx> {
        self.layout
            .encoders
            .iter()
            .chain(std::iter::once(&self.layout.bottleneck))
            .chain(self.layout.decoders.iter())
    }

    fn check(&self, params: &Parameters, input: &Array4<f64>) -> Result<()> {
        if params.config != self.cfg {
            return Err(Error::arg("parameters were built for a different network config"));
        }
        let (_, c, h, w) = input.dim();
        if c != self.cfg.in_channels {
            return Err(Error::dim(format!(
                "decoder expects {} input channels, got {c}",
                self.cfg.in_channels
            )));
        }
        let m = self.cfg.spatial_multiple();
        if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(Error::dim(format!("spatial dims {h}x{w} must be positive multiples of {m}")));
        }
        Ok(())
    }

    pub fn forward(&self, params: &Parameters, input: &Array4<f64>, mode: Mode) -> Result<ForwardPass> {
        self.check(params, input)?;
        let depth = self.layout.encoders.len();
        let mut block_inputs = Vec::with_capacity(2 * depth + 1);
        let mut caches = Vec::with_capacity(2 * depth + 1);
        let mut pool_args = Vec::with_capacity(depth);

        let mut x = Act::from_nchw(input);
        for b in &self.layout.encoders {
            let (out, cache) = block_forward(params, b, &x, mode);
            let (pooled, arg) = layers::maxpool2(&out);
            block_inputs.push(x);
            caches.push(cache);
            pool_args.push(arg);
            x = pooled;
        }
        let (out, cache) = block_forward(params, &self.layout.bottleneck, &x, mode);
        block_inputs.push(x);
        caches.push(cache);
        x = out;
        for (j, b) in self.layout.decoders.iter().enumerate() {
            let skip = &caches[depth - 1 - j].out;
            let cat = layers::concat(&layers::upsample2(&x), skip);
            let (out, cache) = block_forward(params, b, &cat, mode);
            block_inputs.push(cat);
            caches.push(cache);
            x = out;
        }
        let output = layers::conv_forward(&x, &conv_ref(params, &self.layout.head));
        Ok(ForwardPass {
            mode,
            block_inputs,
            caches,
            pool_args,
            output,
        })
    }

    /// Backpropagate `grad_output` (`[batch, 1, h, w]`). The input gradient
    /// is computed only when `need_input_grad` is set.
    pub fn backward(
        &self,
        params: &Parameters,
        pass: &ForwardPass,
        grad_output: &Array4<f64>,
        need_input_grad: bool,
    ) -> Result<(Gradients, Option<Array4<f64>>)> {
        if pass.mode != Mode::Train {
            return Err(Error::arg("backward requires a training-mode forward pass"));
        }
        let dout = Act::from_nchw(grad_output);
        if (dout.c, dout.n, dout.h, dout.w) != (pass.output.c, pass.output.n, pass.output.h, pass.output.w) {
            return Err(Error::dim("output gradient shape does not match the forward pass"));
        }
        let depth = self.layout.encoders.len();
        let mut grads = Gradients::zeros_like(params);
        let last = pass.caches.last().expect("at least one block");

        let head = &self.layout.head;
        let (hg, dx) = layers::conv_backward(&last.out, &conv_ref(params, head), &dout, true);
        record_conv(&mut grads, head, hg);
        let mut dx = dx.expect("requested");

        let mut skip_grads: Vec<Option<Act>> = (0..depth).map(|_| None).collect();
        for j in (0..depth).rev() {
            let bi = depth + 1 + j;
            let b = &self.layout.decoders[j];
            let dcat = block_backward(params, b, &pass.block_inputs[bi], &pass.caches[bi], dx, true, &mut grads)
                .expect("requested");
            let level = depth - 1 - j;
            let up_c = dcat.c - pass.caches[level].out.c;
            let (dup, dskip) = layers::split(&dcat, up_c);
            skip_grads[level] = Some(dskip);
            dx = layers::upsample2_backward(&dup);
        }
        let bott = &self.layout.bottleneck;
        dx = block_backward(params, bott, &pass.block_inputs[depth], &pass.caches[depth], dx, true, &mut grads)
            .expect("requested");
        let mut input_grad = None;
        for l in (0..depth).rev() {
            let e = &pass.caches[l].out;
            let mut de = layers::maxpool2_backward(&dx, &pass.pool_args[l], e.h, e.w);
            if let Some(s) = skip_grads[l].take() {
                de.add_assign(&s);
            }
            let need = l > 0 || need_input_grad;
            let b = &self.layout.encoders[l];
            let g = block_backward(params, b, &pass.block_inputs[l], &pass.caches[l], de, need, &mut grads);
            match g {
                Some(g) if l > 0 => dx = g,
                g => input_grad = g,
            }
        }
        Ok((grads, input_grad.map(|g| g.to_nchw())))
    }

    /// Fold the batch statistics of a training pass into the running buffers.
    pub fn update_running_stats(&self, params: &mut Parameters, pass: &ForwardPass) {
        for (b, cache) in self.blocks().zip(&pass.caches) {
            for (idx, bc) in [(b.bn1, &cache.bn1), (b.bn2, &cache.bn2)] {
                if let (Some(idx), Some(bc)) = (idx, bc) {
                    let m = bc.xhat.cols() as f64;
                    let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
                    let t = &mut params.tensors;
                    for (r, v) in t[idx.mean].data.iter_mut().zip(&bc.mean) {
                        *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
                    }
                    for (r, v) in t[idx.var].data.iter_mut().zip(&bc.var) {
                        *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias;
                    }
                }
            }
        }
    }
}

fn conv_ref<'a>(params: &'a Parameters, c: &ConvIdx) -> ConvRef<'a> {
    ConvRef {
        weight: params.data(c.weight),
        bias: c.bias.map(|b| params.data(b)),
        cout: c.cout,
        k: c.k,
    }
}

fn record_conv(grads: &mut Gradients, c: &ConvIdx, g: layers::ConvGrads) {
    grads.add(c.weight, &g.weight);
    if let (Some(bi), Some(bg)) = (c.bias, g.bias) {
        grads.add(bi, &bg);
    }
}

fn norm_forward(params: &Parameters, bn: Option<BnIdx>, x: Act, mode: Mode) -> (Act, Option<BnCache>) {
    match (bn, mode) {
        (None, _) => (x, None),
        (Some(i), Mode::Train) => {
            let (y, c) = layers::bn_forward_train(&x, params.data(i.gamma), params.data(i.beta));
            (y, Some(c))
        }
        (Some(i), Mode::Eval) => (
            layers::bn_forward_eval(
                &x,
                params.data(i.gamma),
                params.data(i.beta),
                params.data(i.mean),
                params.data(i.var),
            ),
            None,
        ),
    }
}

fn norm_backward(params: &Parameters, bn: Option<BnIdx>, cache: &Option<BnCache>, dy: Act, grads: &mut Gradients) -> Act {
    match (bn, cache) {
        (Some(i), Some(c)) => {
            let (dx, dg, db) = layers::bn_backward(c, params.data(i.gamma), &dy);
            grads.add(i.gamma, &dg);
            grads.add(i.beta, &db);
            dx
        }
        _ => dy,
    }
}

fn block_forward(params: &Parameters, b: &BlockIdx, x: &Act, mode: Mode) -> (Act, BlockCache) {
    let h1 = layers::conv_forward(x, &conv_ref(params, &b.conv1));
    let (mut a1, bn1) = norm_forward(params, b.bn1, h1, mode);
    layers::relu_inplace(&mut a1);
    let h2 = layers::conv_forward(&a1, &conv_ref(params, &b.conv2));
    let (mut z, bn2) = norm_forward(params, b.bn2, h2, mode);
    match &b.proj {
        Some(p) => z.add_assign(&layers::conv_forward(x, &conv_ref(params, p))),
        None => z.add_assign(x),
    }
    layers::relu_inplace(&mut z);
    (
        z.clone(),
        BlockCache {
            bn1,
            a1,
            bn2,
            out: z,
        },
    )
}

fn block_backward(
    params: &Parameters,
    b: &BlockIdx,
    x: &Act,
    cache: &BlockCache,
    mut dout: Act,
    need_dx: bool,
    grads: &mut Gradients,
) -> Option<Act> {
    layers::relu_backward_inplace(&cache.out, &mut dout);
    let dz = dout;

    let dh2 = norm_backward(params, b.bn2, &cache.bn2, dz.clone(), grads);
    let (g2, da1) = layers::conv_backward(&cache.a1, &conv_ref(params, &b.conv2), &dh2, true);
    record_conv(grads, &b.conv2, g2);
    let mut da1 = da1.expect("requested");
    layers::relu_backward_inplace(&cache.a1, &mut da1);
    let dh1 = norm_backward(params, b.bn1, &cache.bn1, da1, grads);
    let (g1, dx1) = layers::conv_backward(x, &conv_ref(params, &b.conv1), &dh1, need_dx);
    record_conv(grads, &b.conv1, g1);

    let dx_skip = match &b.proj {
        Some(p) => {
            let (gp, dxp) = layers::conv_backward(x, &conv_ref(params, p), &dz, need_dx);
            record_conv(grads, p, gp);
            dxp
        }
        None => need_dx.then_some(dz),
    };
    match (dx1, dx_skip) {
        (Some(mut a), Some(b)) => {
            a.add_assign(&b);
            Some(a)
        }
        _ => None,
    }
}
