//! A small convolutional network (convolution, ReLU, 2x2 max-pooling, a final
//! fully connected layer) run forward and backward with either convolution
//! engine, timing the three per-layer operations across the whole stack.
//!
//! Network description format, one stage per line (`#` starts a comment):
//!
//! ```text
//! batch 8
//! conv 11 32 3 96     # conv k n f f'
//! relu
//! pool
//! fc 1000
//! ```
//!
//! The first stage must be `conv`, the last must be `fc`, and `batch` is
//! optional. When a convolution declares a larger input width than the
//! incoming maps have, the maps are zero-padded at the bottom and right to
//! that width; a smaller declared width is an error (insert `pool` instead).

use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::config::LayerConfig;
use crate::direct::{forward_direct, grad_input_direct, grad_weight_direct};
use crate::error::{Error, Result};
use crate::fftconv::{forward_fft, grad_input_fft, grad_weight_fft, workspace_for, ConvWorkspace};
use crate::init::{uniform_values, Role};
use crate::scalar::Real;
use crate::tensor::{RealTensor4, WeightTensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Conv {
        k: usize,
        n: usize,
        f: usize,
        f_prime: usize,
    },
    Relu,
    /// 2x2 window, stride 2.
    Pool,
    Fc {
        outputs: usize,
    },
}

/// Convolution engine used for a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Direct,
    Fft,
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Engine::Direct),
            "fft" => Ok(Engine::Fft),
            _ => Err(Error::Config(format!("unknown engine {s:?}"))),
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Direct => "direct",
            Engine::Fft => "fft",
        })
    }
}

/// Validated stage list plus minibatch size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    batch: usize,
    stages: Vec<Stage>,
}

/// Spatial/map shape flowing between stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Shape {
    maps: usize,
    size: usize,
}

impl NetworkSpec {
    pub fn new(batch: usize, stages: Vec<Stage>) -> Result<Self> {
        let spec = NetworkSpec { batch, stages };
        spec.shapes()?;
        Ok(spec)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn with_batch(&self, batch: usize) -> Result<Self> {
        NetworkSpec::new(batch, self.stages.clone())
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Convolution layers in order, as layer configs at this batch size.
    pub fn conv_layers(&self) -> Vec<LayerConfig> {
        self.stages
            .iter()
            .filter_map(|s| match *s {
                Stage::Conv { k, n, f, f_prime } => Some(LayerConfig { k, n, f, f_prime, batch: self.batch }),
                _ => None,
            })
            .collect()
    }

    pub fn fc_outputs(&self) -> usize {
        match self.stages.last() {
            Some(Stage::Fc { outputs }) => *outputs,
            _ => unreachable!("validated spec ends with fc"),
        }
    }

    /// `(maps, size)` the first convolution expects.
    pub fn input_shape(&self) -> (usize, usize) {
        match self.stages[0] {
            Stage::Conv { n, f, .. } => (f, n),
            _ => unreachable!("validated spec starts with conv"),
        }
    }

    /// Flattened length feeding the fully connected layer.
    pub fn fc_inputs(&self) -> usize {
        let shapes = self.shapes().expect("validated");
        let last = shapes[shapes.len() - 1];
        last.maps * last.size * last.size
    }

    /// Input shape of every stage; the last entry is the fc input.
    fn shapes(&self) -> Result<Vec<Shape>> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        let Some(Stage::Conv { n, f, .. }) = self.stages.first() else {
            return Err(Error::Config("network must start with a conv stage".into()));
        };
        match self.stages.last() {
            Some(Stage::Fc { outputs }) if *outputs >= 1 => {}
            Some(Stage::Fc { .. }) => return Err(Error::Config("fc needs at least one output".into())),
            _ => return Err(Error::Config("network must end with an fc stage".into())),
        }
        let mut cur = Shape { maps: *f, size: *n };
        let mut shapes = Vec::with_capacity(self.stages.len());
        for (i, stage) in self.stages.iter().enumerate() {
            shapes.push(cur);
            cur = match *stage {
                Stage::Conv { k, n, f, f_prime } => {
                    LayerConfig::new(k, n, f, f_prime, self.batch)?;
                    if cur.maps != f {
                        return Err(Error::Config(format!(
                            "stage {i}: conv expects {f} input maps but receives {}",
                            cur.maps
                        )));
                    }
                    if cur.size > n {
                        return Err(Error::Config(format!(
                            "stage {i}: conv expects width {n} but receives {}; add a pool stage",
                            cur.size
                        )));
                    }
                    Shape { maps: f_prime, size: n - k + 1 }
                }
                Stage::Relu => cur,
                Stage::Pool => {
                    if !cur.size.is_multiple_of(2) {
                        return Err(Error::Config(format!("stage {i}: cannot pool odd width {}", cur.size)));
                    }
                    Shape { maps: cur.maps, size: cur.size / 2 }
                }
                Stage::Fc { .. } => {
                    if i + 1 != self.stages.len() {
                        return Err(Error::Config(format!("stage {i}: fc must be the last stage")));
                    }
                    cur
                }
            };
        }
        Ok(shapes)
    }

    /// Parses the line-oriented description; `default_batch` applies when
    /// the text has no `batch` line.
    pub fn parse(text: &str, default_batch: usize) -> Result<Self> {
        let mut batch = default_batch;
        let mut stages = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let kw = words.next().unwrap();
            let nums: Vec<usize> = words
                .map(|w| w.parse().map_err(|_| Error::Config(format!("line {}: {w:?} is not an integer", lineno + 1))))
                .collect::<Result<_>>()?;
            let arity = |want: usize| {
                if nums.len() == want {
                    Ok(())
                } else {
                    Err(Error::Config(format!("line {}: `{kw}` takes {want} numbers, got {}", lineno + 1, nums.len())))
                }
            };
            match kw {
                "batch" => {
                    arity(1)?;
                    batch = nums[0];
                }
                "conv" => {
                    arity(4)?;
                    stages.push(Stage::Conv { k: nums[0], n: nums[1], f: nums[2], f_prime: nums[3] });
                }
                "relu" => {
                    arity(0)?;
                    stages.push(Stage::Relu);
                }
                "pool" => {
                    arity(0)?;
                    stages.push(Stage::Pool);
                }
                "fc" => {
                    arity(1)?;
                    stages.push(Stage::Fc { outputs: nums[0] });
                }
                other => return Err(Error::Config(format!("line {}: unknown stage `{other}`", lineno + 1))),
            }
        }
        NetworkSpec::new(batch, stages)
    }

    /// The five reference layers with ReLUs, one pooling stage and a
    /// 1000-way classifier, minibatch 128.
    pub fn paper_net() -> Self {
        Self::scaled_reference(128, 1)
    }

    /// [`NetworkSpec::paper_net`] with minibatch 8 and hidden maps divided by 8.
    pub fn paper_net_small() -> Self {
        Self::scaled_reference(8, 8)
    }

    fn scaled_reference(batch: usize, div: usize) -> Self {
        let (a, b, c) = (96 / div, 256 / div, 384 / div);
        let conv = |k, n, f, f_prime| Stage::Conv { k, n, f, f_prime };
        let stages = vec![
            conv(11, 32, 3, a),
            Stage::Relu,
            conv(7, 32, a, b),
            Stage::Relu,
            Stage::Pool,
            conv(5, 16, b, c),
            Stage::Relu,
            conv(5, 16, c, c),
            Stage::Relu,
            conv(3, 16, c, c),
            Stage::Relu,
            Stage::Fc { outputs: 1000 },
        ];
        NetworkSpec::new(batch, stages).expect("reference network chains")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-net" => Ok(Self::paper_net()),
            "paper-net-small" => Ok(Self::paper_net_small()),
            _ => Err(Error::Config(format!("unknown preset {name:?} (paper-net, paper-net-small)"))),
        }
    }
}

/// 2x2 stride-2 max-pooling. `argmax[o]` is the flat input index that
/// produced output element `o`; ties go to the first maximum in row-major order.
pub fn maxpool_forward<T: Real>(x: &RealTensor4<T>) -> Result<(RealTensor4<T>, Vec<usize>)> {
    let (b, maps, rows, cols) = x.dims();
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::Size(format!("max-pooling needs even dims, got {rows}x{cols}")));
    }
    let (orows, ocols) = (rows / 2, cols / 2);
    let mut y = RealTensor4::zeros(b, maps, orows, ocols)?;
    let mut argmax = Vec::with_capacity(y.data().len());
    let src = x.data();
    let mut o = 0;
    for p in 0..b * maps {
        let base = p * rows * cols;
        for i in 0..orows {
            for j in 0..ocols {
                let top = base + 2 * i * cols + 2 * j;
                let mut best = top;
                for idx in [top + 1, top + cols, top + cols + 1] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                y.data_mut()[o] = src[best];
                argmax.push(best);
                o += 1;
            }
        }
    }
    Ok((y, argmax))
}

/// Routes each output gradient to its recorded argmax position.
pub fn maxpool_backward<T: Real>(
    gy: &RealTensor4<T>,
    argmax: &[usize],
    input_dims: (usize, usize, usize, usize),
) -> Result<RealTensor4<T>> {
    if argmax.len() != gy.data().len() {
        return Err(Error::Shape("argmax length does not match output gradient".into()));
    }
    let (b, m, r, c) = input_dims;
    let mut gx = RealTensor4::zeros(b, m, r, c)?;
    for (g, &idx) in gy.data().iter().zip(argmax) {
        gx.data_mut()[idx] += *g;
    }
    Ok(gx)
}

pub fn relu_forward<T: Real>(x: &RealTensor4<T>) -> RealTensor4<T> {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    y
}

/// `gy * 1[x > 0]`
pub fn relu_backward<T: Real>(gy: &RealTensor4<T>, x: &RealTensor4<T>) -> Result<RealTensor4<T>> {
    if gy.dims() != x.dims() {
        return Err(Error::Shape(format!("relu gradient {:?} vs input {:?}", gy.dims(), x.dims())));
    }
    let mut gx = gy.clone();
    for (g, v) in gx.data_mut().iter_mut().zip(x.data()) {
        if *v <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(gx)
}

/// Affine classifier: `weight` is `outputs x inputs` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer<T> {
    pub outputs: usize,
    pub inputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> FcLayer<T> {
    pub fn new(outputs: usize, inputs: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weight.len() != outputs * inputs || bias.len() != outputs {
            return Err(Error::Shape(format!(
                "fc weight {} / bias {} do not match {outputs}x{inputs}",
                weight.len(),
                bias.len()
            )));
        }
        Ok(FcLayer { outputs, inputs, weight, bias })
    }
}

/// `scores[s,o] = b[o] + sum_j W[o,j] x[s,j]` for `x` flattened per sample.
pub fn fc_forward<T: Real>(x: &[T], batch: usize, fc: &FcLayer<T>) -> Result<Vec<T>> {
    if x.len() != batch * fc.inputs {
        return Err(Error::Shape(format!("fc expects {batch}x{} inputs, got {}", fc.inputs, x.len())));
    }
    let mut scores = Vec::with_capacity(batch * fc.outputs);
    for xs in x.chunks_exact(fc.inputs) {
        for (wrow, b) in fc.weight.chunks_exact(fc.inputs).zip(&fc.bias) {
            let dot: T = wrow.iter().zip(xs).map(|(w, v)| *w * *v).sum();
            scores.push(*b + dot);
        }
    }
    Ok(scores)
}

/// Gradients of the fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FcGrads<T> {
    pub input: Vec<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Input gradient of the fc layer.
pub fn fc_backward_input<T: Real>(gscores: &[T], batch: usize, fc: &FcLayer<T>) -> Vec<T> {
    let mut gx = vec![T::zero(); batch * fc.inputs];
    for (gxs, gs) in gx.chunks_exact_mut(fc.inputs).zip(gscores.chunks_exact(fc.outputs)) {
        for (wrow, g) in fc.weight.chunks_exact(fc.inputs).zip(gs) {
            for (a, w) in gxs.iter_mut().zip(wrow) {
                *a += *g * *w;
            }
        }
    }
    gx
}

/// Weight and bias gradients of the fc layer, accumulated over the batch.
pub fn fc_backward_params<T: Real>(gscores: &[T], x: &[T], fc: &FcLayer<T>) -> (Vec<T>, Vec<T>) {
    let mut gw = vec![T::zero(); fc.outputs * fc.inputs];
    let mut gb = vec![T::zero(); fc.outputs];
    for (xs, gs) in x.chunks_exact(fc.inputs).zip(gscores.chunks_exact(fc.outputs)) {
        for ((wrow, g), bsum) in gw.chunks_exact_mut(fc.inputs).zip(gs).zip(gb.iter_mut()) {
            *bsum += *g;
            for (a, v) in wrow.iter_mut().zip(xs) {
                *a += *g * *v;
            }
        }
    }
    (gw, gb)
}

pub fn fc_backward<T: Real>(gscores: &[T], x: &[T], batch: usize, fc: &FcLayer<T>) -> Result<FcGrads<T>> {
    if gscores.len() != batch * fc.outputs || x.len() != batch * fc.inputs {
        return Err(Error::Shape("fc backward operand sizes do not match the layer".into()));
    }
    let input = fc_backward_input(gscores, batch, fc);
    let (weight, bias) = fc_backward_params(gscores, x, fc);
    Ok(FcGrads { input, weight, bias })
}

/// Trainable parameters of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub conv: Vec<WeightTensor4<T>>,
    pub fc: FcLayer<T>,
}

impl<T: Real> NetworkParams<T> {
    /// Uniform noise scaled by `1/sqrt(fan_in)`, keyed by `seed`.
    pub fn random(net: &NetworkSpec, seed: u64) -> Self {
        let conv = net
            .conv_layers()
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let scale = 1.0 / ((c.f * c.k * c.k) as f64).sqrt();
                let vals = uniform_values::<f64>(seed, Role::Layer(i as u32), c.f_prime * c.f * c.k * c.k)
                    .into_iter()
                    .map(|v| T::from_f64_lossy(v * scale))
                    .collect();
                WeightTensor4::from_vec(c.f_prime, c.f, c.k, vals).expect("sizes match")
            })
            .collect();
        let (outputs, inputs) = (net.fc_outputs(), net.fc_inputs());
        let scale = 1.0 / (inputs as f64).sqrt();
        let weight = uniform_values::<f64>(seed, Role::FcWeight, outputs * inputs)
            .into_iter()
            .map(|v| T::from_f64_lossy(v * scale))
            .collect();
        let bias = uniform_values(seed, Role::FcBias, outputs);
        NetworkParams { conv, fc: FcLayer { outputs, inputs, weight, bias } }
    }
}

/// Wall time spent in each operation class over one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    /// Forward pass through every stage.
    pub update_output: Duration,
    /// Propagation of gradients to stage inputs.
    pub update_grad_input: Duration,
    /// Convolution-kernel and fc parameter gradients.
    pub acc_grad_parameters: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.update_output + self.update_grad_input + self.acc_grad_parameters
    }

    /// `(name, duration)` rows: the three stages then the total.
    pub fn rows(&self) -> [(&'static str, Duration); 4] {
        [
            ("updateOutput", self.update_output),
            ("updateGradInput", self.update_grad_input),
            ("accGradParameters", self.acc_grad_parameters),
            ("Total", self.total()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub conv: Vec<WeightTensor4<T>>,
    pub fc_weight: Vec<T>,
    pub fc_bias: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct IterationResult<T> {
    pub timings: StageTimings,
    pub gradients: Gradients<T>,
    /// `batch x fc_outputs` class scores.
    pub scores: Vec<T>,
    /// Sum of all scores; the loss differentiated by the backward pass.
    pub loss: f64,
    /// Per convolution layer: whether its input gradient was computed.
    pub grad_input_computed: Vec<bool>,
}

/// Saved forward state needed by the backward pass.
enum Saved<T> {
    Conv { input: RealTensor4<T>, unpadded: usize },
    Relu { input: RealTensor4<T> },
    Pool { argmax: Vec<usize>, dims: (usize, usize, usize, usize) },
    Fc { input: Vec<T> },
}

/// A network with parameters and, for FFT layers, a shared workspace sized
/// for the largest convolution. Not reentrant: one iteration at a time.
pub struct LayerStack<T> {
    net: NetworkSpec,
    params: NetworkParams<T>,
    workspace: Option<ConvWorkspace<T>>,
}

impl<T: Real> LayerStack<T> {
    pub fn new(net: NetworkSpec, params: NetworkParams<T>) -> Result<Self> {
        let convs = net.conv_layers();
        if params.conv.len() != convs.len() {
            return Err(Error::Config(format!(
                "{} conv parameter tensors for {} conv layers",
                params.conv.len(),
                convs.len()
            )));
        }
        for (w, c) in params.conv.iter().zip(&convs) {
            if w.dims() != (c.f_prime, c.f, c.k, c.k) {
                return Err(Error::Config(format!("kernel shape {:?} does not match layer {c}", w.dims())));
            }
        }
        if params.fc.outputs != net.fc_outputs() || params.fc.inputs != net.fc_inputs() {
            return Err(Error::Config("fc parameters do not match the network".into()));
        }
        Ok(LayerStack { net, params, workspace: None })
    }

    pub fn net(&self) -> &NetworkSpec {
        &self.net
    }

    pub fn params(&self) -> &NetworkParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut NetworkParams<T> {
        &mut self.params
    }

    fn workspace(&mut self) -> Result<&mut ConvWorkspace<T>> {
        if self.workspace.is_none() {
            self.workspace = Some(workspace_for(&self.net.conv_layers())?);
        }
        Ok(self.workspace.as_mut().unwrap())
    }

    fn check_input(&self, input: &RealTensor4<T>) -> Result<()> {
        let (f, n) = self.net.input_shape();
        if input.dims() != (self.net.batch, f, n, n) {
            return Err(Error::Config(format!(
                "batch shape {:?} does not match network input {:?}",
                input.dims(),
                (self.net.batch, f, n, n)
            )));
        }
        Ok(())
    }

    fn engines_for(&self, engines: &[Engine]) -> Result<Vec<Engine>> {
        let layers = self.net.conv_layers().len();
        match engines.len() {
            1 => Ok(vec![engines[0]; layers]),
            l if l == layers => Ok(engines.to_vec()),
            l => Err(Error::Config(format!("{l} engines given for {layers} conv layers"))),
        }
    }

    fn conv_forward(&mut self, engine: Engine, layer: usize, x: &RealTensor4<T>) -> Result<RealTensor4<T>> {
        match engine {
            Engine::Direct => forward_direct(x, &self.params.conv[layer]),
            Engine::Fft => {
                let w = &self.params.conv[layer];
                let ws = self.workspace.as_mut().expect("workspace built");
                forward_fft(ws, x, w)
            }
        }
    }

    /// Forward pass only; returns `batch x outputs` scores.
    pub fn forward(&mut self, engines: &[Engine], input: &RealTensor4<T>) -> Result<Vec<T>> {
        Ok(self.forward_saving(engines, input)?.0)
    }

    fn forward_saving(&mut self, engines: &[Engine], input: &RealTensor4<T>) -> Result<(Vec<T>, Vec<Saved<T>>)> {
        self.check_input(input)?;
        let engines = self.engines_for(engines)?;
        if engines.contains(&Engine::Fft) {
            self.workspace()?;
        }
        let batch = self.net.batch;
        let stages = self.net.stages.clone();
        let mut saved = Vec::with_capacity(stages.len());
        let mut cur = input.clone();
        let mut layer = 0;
        for stage in &stages {
            match *stage {
                Stage::Conv { n, .. } => {
                    let unpadded = cur.rows();
                    let x = if unpadded < n { cur.pad_to(n, n)? } else { cur };
                    cur = self.conv_forward(engines[layer], layer, &x)?;
                    saved.push(Saved::Conv { input: x, unpadded });
                    layer += 1;
                }
                Stage::Relu => {
                    let y = relu_forward(&cur);
                    saved.push(Saved::Relu { input: cur });
                    cur = y;
                }
                Stage::Pool => {
                    let (y, argmax) = maxpool_forward(&cur)?;
                    saved.push(Saved::Pool { argmax, dims: cur.dims() });
                    cur = y;
                }
                Stage::Fc { .. } => {
                    let flat = cur.into_vec();
                    let scores = fc_forward(&flat, batch, &self.params.fc)?;
                    saved.push(Saved::Fc { input: flat });
                    return Ok((scores, saved));
                }
            }
        }
        unreachable!("validated spec ends with fc")
    }

    /// Sum of scores, the scalar loss used for gradient checks.
    pub fn loss(&mut self, engines: &[Engine], input: &RealTensor4<T>) -> Result<f64> {
        Ok(self.forward(engines, input)?.iter().map(|v| v.as_f64()).sum())
    }

    /// One training iteration (forward, then backward of the sum-of-scores
    /// loss) with one engine for all layers or one engine per conv layer.
    /// The first convolution never computes its input gradient.
    pub fn run_iteration(&mut self, engines: &[Engine], input: &RealTensor4<T>) -> Result<IterationResult<T>> {
        let engines = self.engines_for(engines)?;
        let t0 = Instant::now();
        let (scores, saved) = self.forward_saving(&engines, input)?;
        let update_output = t0.elapsed();

        let batch = self.net.batch;
        let mut timings = StageTimings { update_output, ..Default::default() };
        let layers = engines.len();
        let mut conv_grads: Vec<Option<WeightTensor4<T>>> = vec![None; layers];
        let mut grad_input_computed = vec![false; layers];
        let mut fc_weight = Vec::new();
        let mut fc_bias = Vec::new();

        let gscores = vec![T::one(); scores.len()];
        let mut grad: Option<RealTensor4<T>> = None;
        let mut layer = layers;
        let stages = self.net.stages.clone();

        for (stage, state) in stages.iter().zip(saved).rev() {
            match (stage, state) {
                (Stage::Fc { .. }, Saved::Fc { input }) => {
                    let t = Instant::now();
                    let (gw, gb) = fc_backward_params(&gscores, &input, &self.params.fc);
                    timings.acc_grad_parameters += t.elapsed();
                    fc_weight = gw;
                    fc_bias = gb;

                    let t = Instant::now();
                    let gx = fc_backward_input(&gscores, batch, &self.params.fc);
                    let (_, maps, size) = last_shape(&self.net);
                    grad = Some(RealTensor4::from_vec(batch, maps, size, size, gx)?);
                    timings.update_grad_input += t.elapsed();
                }
                (Stage::Relu, Saved::Relu { input }) => {
                    let t = Instant::now();
                    grad = Some(relu_backward(grad.as_ref().expect("gradient flows"), &input)?);
                    timings.update_grad_input += t.elapsed();
                }
                (Stage::Pool, Saved::Pool { argmax, dims }) => {
                    let t = Instant::now();
                    grad = Some(maxpool_backward(grad.as_ref().expect("gradient flows"), &argmax, dims)?);
                    timings.update_grad_input += t.elapsed();
                }
                (Stage::Conv { .. }, Saved::Conv { input, unpadded }) => {
                    layer -= 1;
                    let gy = grad.take().expect("gradient flows");
                    let t = Instant::now();
                    let gw = match engines[layer] {
                        Engine::Direct => grad_weight_direct(&gy, &input)?,
                        Engine::Fft => grad_weight_fft(self.workspace.as_mut().unwrap(), &gy, &input)?,
                    };
                    timings.acc_grad_parameters += t.elapsed();
                    conv_grads[layer] = Some(gw);

                    if layer == 0 {
                        break;
                    }
                    let t = Instant::now();
                    let w = &self.params.conv[layer];
                    let gx = match engines[layer] {
                        Engine::Direct => grad_input_direct(&gy, w)?,
                        Engine::Fft => grad_input_fft(self.workspace.as_mut().unwrap(), &gy, w)?,
                    };
                    let gx = if unpadded < gx.rows() { gx.crop(0, 0, unpadded, unpadded)? } else { gx };
                    timings.update_grad_input += t.elapsed();
                    grad_input_computed[layer] = true;
                    grad = Some(gx);
                }
                _ => unreachable!("saved state mirrors stages"),
            }
        }

        let loss = scores.iter().map(|v| v.as_f64()).sum();
        Ok(IterationResult {
            timings,
            gradients: Gradients {
                conv: conv_grads.into_iter().map(|g| g.expect("every conv layer visited")).collect(),
                fc_weight,
                fc_bias,
            },
            scores,
            loss,
            grad_input_computed,
        })
    }
}

fn last_shape(net: &NetworkSpec) -> (usize, usize, usize) {
    let shapes = net.shapes().expect("validated");
    let s = shapes[shapes.len() - 1];
    (net.batch, s.maps, s.size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::uniform_tensor;

    #[test]
    fn pool_basics() {
        let x = RealTensor4::from_vec(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, arg) = maxpool_forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(arg, vec![3]);

        let c = RealTensor4::from_vec(1, 1, 4, 4, vec![2.5f64; 16]).unwrap();
        let (y, arg) = maxpool_forward(&c).unwrap();
        assert_eq!(y.dims(), (1, 1, 2, 2));
        assert!(y.data().iter().all(|v| *v == 2.5));
        // ties resolve to the top-left element of each window
        assert_eq!(arg, vec![0, 2, 8, 10]);

        let odd = RealTensor4::<f64>::zeros(1, 1, 3, 4).unwrap();
        assert!(matches!(maxpool_forward(&odd), Err(Error::Size(_))));
    }

    #[test]
    fn pool_backward_conserves_mass() {
        let x = uniform_tensor::<f64>(4, Role::Input, 2, 3, 6, 6).unwrap();
        let (y, arg) = maxpool_forward(&x).unwrap();
        // multiples of 1/64 keep every partial sum exact
        let g: Vec<f64> = (0..y.data().len()).map(|i| ((i * 37 % 101) as f64 - 50.0) / 64.0).collect();
        let gy = RealTensor4::from_vec(2, 3, 3, 3, g).unwrap();
        let gx = maxpool_backward(&gy, &arg, x.dims()).unwrap();
        assert_eq!(gx.sum(), gy.sum());
        for (o, &idx) in arg.iter().enumerate() {
            assert_eq!(gx.data()[idx], gy.data()[o]);
        }
    }

    #[test]
    fn relu_basics() {
        let x = RealTensor4::from_vec(1, 1, 1, 4, vec![-1.0, 0.0, 0.5, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 0.5, 2.0]);
        let gy = RealTensor4::from_vec(1, 1, 1, 4, vec![1.0; 4]).unwrap();
        assert_eq!(relu_backward(&gy, &x).unwrap().data(), &[0.0, 0.0, 1.0, 1.0]);
        let pos = RealTensor4::from_vec(1, 1, 1, 2, vec![0.1, 3.0]).unwrap();
        assert_eq!(relu_forward(&pos), pos);
    }

    #[test]
    fn fc_basics() {
        // identity block selects the first two inputs
        let fc = FcLayer::new(2, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(fc_forward(&[4.0, 5.0, 6.0], 1, &fc).unwrap(), vec![4.0, 5.0]);
        let zero = FcLayer::new(2, 3, vec![0.0; 6], vec![1.5, -2.0]).unwrap();
        assert_eq!(fc_forward(&[4.0, 5.0, 6.0], 1, &zero).unwrap(), vec![1.5, -2.0]);
        assert!(fc_forward(&[1.0, 2.0], 1, &fc).is_err());
        assert!(FcLayer::<f64>::new(2, 3, vec![0.0; 5], vec![0.0; 2]).is_err());
    }

    #[test]
    fn parses_description() {
        let text = "# tiny\nbatch 2\nconv 3 8 1 2\nrelu\npool\nconv 3 4 2 2  # padded? no\nfc 4\n";
        let net = NetworkSpec::parse(text, 9).unwrap();
        assert_eq!(net.batch(), 2);
        assert_eq!(net.conv_layers().len(), 2);
        assert_eq!(net.fc_inputs(), 2 * 2 * 2);
        assert_eq!(NetworkSpec::parse("conv 3 8 1 2\nfc 3", 5).unwrap().batch(), 5);
    }

    #[test]
    fn rejects_inconsistent_descriptions() {
        for bad in [
            "relu\nfc 2",
            "conv 3 8 1 2",
            "conv 3 8 1 2\nconv 3 6 3 2\nfc 2",
            "conv 3 8 1 2\nconv 3 4 2 2\nfc 2",
            "conv 2 8 1 2\npool\nfc 2",
            "conv 3 8 1 2\nfc 0",
            "conv 3 8 1 2\nfc 2\nrelu",
            "conv 3 8 1\nfc 2",
            "dense 3\nfc 2",
        ] {
            assert!(matches!(NetworkSpec::parse(bad, 1), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn reference_presets_chain() {
        let net = NetworkSpec::paper_net();
        assert_eq!(net.conv_layers(), crate::config::reference_layers().to_vec());
        assert_eq!(net.fc_inputs(), 384 * 14 * 14);
        let small = NetworkSpec::paper_net_small();
        assert_eq!(small.batch(), 8);
        assert_eq!(small.conv_layers()[1], LayerConfig { k: 7, n: 32, f: 12, f_prime: 32, batch: 8 });
        assert!(NetworkSpec::preset("nope").is_err());
    }

    #[test]
    fn first_layer_skips_grad_input() {
        let net = NetworkSpec::parse("batch 2\nconv 3 8 2 3\nrelu\nconv 3 6 3 2\nfc 3", 1).unwrap();
        let params = NetworkParams::<f64>::random(&net, 1);
        let mut stack = LayerStack::new(net, params).unwrap();
        let x = uniform_tensor::<f64>(1, Role::Input, 2, 2, 8, 8).unwrap();
        let r = stack.run_iteration(&[Engine::Direct], &x).unwrap();
        assert_eq!(r.grad_input_computed, vec![false, true]);
        assert_eq!(r.timings.rows().len(), 4);
        assert_eq!(r.timings.rows()[3].1, r.timings.total());
    }
}
