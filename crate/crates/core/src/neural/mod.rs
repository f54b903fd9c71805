//! The student: a non-causal dilated-convolution network mapping plain speech
//! samples to enhanced samples, one output per input position.
//!
//! Each output sample sees exactly `r` past and `r` future input samples,
//! where `r` is [`NetConfig::receptive_radius`]. The stack is
//!
//! ```text
//! x ─ 1×1 input projection ─┬─ [dilated conv → tanh ⊙ σ → 1×1 residual] × layers
//!                           └─ Σ 1×1 skips → ReLU → 1×1 → ReLU → 1×1 → ŷ
//! ```
//!
//! All convolutions run in valid mode, so an input of length `N` yields
//! `N − 2r` outputs aligned with input positions `r..N−r`.

mod kernels;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioError;
use kernels::Conv;

pub use train::{
    BestParams, BestTracker, Checkpoint, LossRecord, LrSchedule, TrainOptions, TrainOutcome, TrainState, TrainingPair,
    adam_step, enhance_neural, enhance_neural_with, loss_history_csv, lr_at, reflect_pad, train, validation_l1,
};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("input of {len} samples is shorter than the {needed}-sample receptive span")]
    InputTooShort { len: usize, needed: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("parameter shape mismatch")]
    ShapeMismatch,
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("zero-energy input")]
    ZeroEnergy,
    #[error("expected 16000 Hz input, got {0} Hz")]
    WrongSampleRate(u32),
    #[error("unsupported checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

/// Nonlinearity of the residual units and output head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `tanh(f) ⊙ σ(g)` units with a ReLU output head.
    #[default]
    Gated,
    /// Identity everywhere: the whole network is a linear filter.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub blocks: usize,
    pub dilations_per_block: Vec<usize>,
    pub channels: usize,
    pub skip_channels: usize,
    pub filter_width: usize,
    /// Output samples predicted per training crop.
    pub target_field: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl NetConfig {
    /// 3 blocks of dilations 1..512, 256 channels, 4096-sample target field.
    pub fn paper() -> Self {
        Self {
            blocks: 3,
            dilations_per_block: (0..10).map(|i| 1 << i).collect(),
            channels: 256,
            skip_channels: 256,
            filter_width: 3,
            target_field: 4096,
            activation: Activation::Gated,
        }
    }

    /// One block of dilations 1..32 with 32 channels; trains in minutes on a CPU.
    pub fn desk() -> Self {
        Self {
            blocks: 1,
            dilations_per_block: (0..6).map(|i| 1 << i).collect(),
            channels: 32,
            skip_channels: 32,
            filter_width: 3,
            target_field: 1024,
            activation: Activation::Gated,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NeuralError::InvalidConfig(m.to_string()));
        if self.blocks == 0 {
            return bad("blocks must be at least 1");
        }
        if self.dilations_per_block.is_empty() || self.dilations_per_block.contains(&0) {
            return bad("dilations must be positive");
        }
        if self.filter_width < 3 || self.filter_width.is_multiple_of(2) {
            return bad("filter_width must be odd and at least 3");
        }
        if self.channels == 0 || self.skip_channels == 0 {
            return bad("channel counts must be positive");
        }
        if self.target_field == 0 {
            return bad("target_field must be positive");
        }
        Ok(())
    }

    /// Dilation of every residual layer, in order.
    pub fn dilations(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.blocks).flat_map(move |_| self.dilations_per_block.iter().copied())
    }

    pub fn layer_count(&self) -> usize {
        self.blocks * self.dilations_per_block.len()
    }

    fn half_width(&self) -> usize {
        (self.filter_width - 1) / 2
    }

    /// Input samples on each side that influence one output sample.
    ///
    /// The input projection is pointwise and adds nothing.
    pub fn receptive_radius(&self) -> usize {
        self.half_width() * self.dilations().sum::<usize>()
    }

    /// Total input samples seen by one output sample, `2r + 1`.
    pub fn receptive_span(&self) -> usize {
        2 * self.receptive_radius() + 1
    }

    /// Input crop length used in training: target field plus `2r`.
    pub fn training_input_len(&self) -> usize {
        self.target_field + 2 * self.receptive_radius()
    }
}

/// Trainable parameters of one residual layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub filter_w: Vec<f64>,
    pub filter_b: Vec<f64>,
    pub gate_w: Vec<f64>,
    pub gate_b: Vec<f64>,
    pub res_w: Vec<f64>,
    pub res_b: Vec<f64>,
    pub skip_w: Vec<f64>,
    pub skip_b: Vec<f64>,
}

/// The full parameter set. Gradients and optimizer moments use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub input_w: Vec<f64>,
    pub input_b: Vec<f64>,
    pub layers: Vec<LayerParams>,
    pub head1_w: Vec<f64>,
    pub head1_b: Vec<f64>,
    pub head2_w: Vec<f64>,
    pub head2_b: Vec<f64>,
}

impl NetParams {
    pub fn zeros(cfg: &NetConfig) -> Self {
        let (c, s, k) = (cfg.channels, cfg.skip_channels, cfg.filter_width);
        let layer = LayerParams {
            filter_w: vec![0.0; c * c * k],
            filter_b: vec![0.0; c],
            gate_w: vec![0.0; c * c * k],
            gate_b: vec![0.0; c],
            res_w: vec![0.0; c * c],
            res_b: vec![0.0; c],
            skip_w: vec![0.0; s * c],
            skip_b: vec![0.0; s],
        };
        Self {
            input_w: vec![0.0; c],
            input_b: vec![0.0; c],
            layers: vec![layer; cfg.layer_count()],
            head1_w: vec![0.0; s * s],
            head1_b: vec![0.0; s],
            head2_w: vec![0.0; s],
            head2_b: vec![0.0; 1],
        }
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn init(cfg: &NetConfig, rng: &mut impl Rng) -> Self {
        let (c, s, k) = (cfg.channels, cfg.skip_channels, cfg.filter_width);
        let mut p = Self::zeros(cfg);
        let mut fill = |w: &mut [f64], fan_in: usize| {
            let bound = (6.0 / fan_in as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        };
        fill(&mut p.input_w, 1);
        for l in p.layers.iter_mut() {
            fill(&mut l.filter_w, c * k);
            fill(&mut l.gate_w, c * k);
            fill(&mut l.res_w, c);
            fill(&mut l.skip_w, c);
        }
        fill(&mut p.head1_w, s);
        fill(&mut p.head2_w, s);
        p
    }

    /// Every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.input_w, &self.input_b];
        for l in &self.layers {
            v.extend([&l.filter_w[..], &l.filter_b, &l.gate_w, &l.gate_b, &l.res_w, &l.res_b, &l.skip_w, &l.skip_b]);
        }
        v.extend([&self.head1_w[..], &self.head1_b, &self.head2_w, &self.head2_b]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.input_w, &mut self.input_b];
        for l in self.layers.iter_mut() {
            v.extend([
                &mut l.filter_w[..],
                &mut l.filter_b,
                &mut l.gate_w,
                &mut l.gate_b,
                &mut l.res_w,
                &mut l.res_b,
                &mut l.skip_w,
                &mut l.skip_b,
            ]);
        }
        v.extend([&mut self.head1_w[..], &mut self.head1_b, &mut self.head2_w, &mut self.head2_b]);
        v
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &NetParams) -> bool {
        let (a, b) = (self.tensors(), other.tensors());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }

    pub fn matches_config(&self, cfg: &NetConfig) -> bool {
        self.same_shape(&NetParams::zeros(cfg))
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Flat copy of every parameter in [`NetParams::tensors`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Mutable access to the parameter at flat index `i`.
    pub fn flat_mut(&mut self, mut i: usize) -> Option<&mut f64> {
        for t in self.tensors_mut() {
            if i < t.len() {
                return Some(&mut t[i]);
            }
            i -= t.len();
        }
        None
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of each residual layer; `hidden[0]` is the projected input.
    hidden: Vec<Vec<f64>>,
    /// Per layer: `tanh(f)` (or `f` itself for linear nets).
    filt: Vec<Vec<f64>>,
    /// Per layer: `σ(g)`; empty for linear nets.
    gate: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    /// Skip sum before the head nonlinearity.
    pub skip_sum: Vec<f64>,
    head_a1: Vec<f64>,
    /// First head stage before its nonlinearity.
    pub head_u2: Vec<f64>,
    head_a2: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 { x } else { 0.0 }
}

fn check_input(cfg: &NetConfig, len: usize) -> Result<usize> {
    cfg.validate()?;
    let r = cfg.receptive_radius();
    if len <= 2 * r {
        return Err(NeuralError::InputTooShort { len, needed: 2 * r + 1 });
    }
    Ok(r)
}

fn run(params: &NetParams, cfg: &NetConfig, input: &[f64], keep: bool) -> Result<(Vec<f64>, Option<ForwardCache>)> {
    let r = check_input(cfg, input.len())?;
    if !params.matches_config(cfg) {
        return Err(NeuralError::ShapeMismatch);
    }
    let (c, s, k) = (cfg.channels, cfg.skip_channels, cfg.filter_width);
    let half = cfg.half_width();
    let gated = cfg.activation == Activation::Gated;
    let n = input.len();
    let t_out = n - 2 * r;

    let proj = Conv { c_in: 1, c_out: c, k: 1, dilation: 1, in_stride: n, start: 0, len_out: n };
    let mut h = proj.forward(&params.input_w, &params.input_b, input);
    let mut len = n;
    let mut trimmed = 0;
    let mut skip_sum = vec![0.0; s * t_out];

    let mut cache_hidden = Vec::new();
    let mut cache_filt = Vec::new();
    let mut cache_gate = Vec::new();
    let mut cache_z = Vec::new();

    for (lp, d) in params.layers.iter().zip(cfg.dilations()) {
        let shift = half * d;
        let len_out = len - 2 * shift;
        let conv = Conv { c_in: c, c_out: c, k, dilation: d, in_stride: len, start: 0, len_out };
        let mut f = conv.forward(&lp.filter_w, &lp.filter_b, &h);
        let (z, gate) = if gated {
            let mut g = conv.forward(&lp.gate_w, &lp.gate_b, &h);
            f.iter_mut().for_each(|v| *v = v.tanh());
            g.iter_mut().for_each(|v| *v = sigmoid(*v));
            let z: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a * b).collect();
            (z, g)
        } else {
            (f.clone(), Vec::new())
        };
        trimmed += shift;

        let skip =
            Conv { c_in: c, c_out: s, k: 1, dilation: 1, in_stride: len_out, start: r - trimmed, len_out: t_out };
        let sk = skip.forward(&lp.skip_w, &lp.skip_b, &z);
        skip_sum.iter_mut().zip(&sk).for_each(|(a, b)| *a += b);

        let res = Conv { c_in: c, c_out: c, k: 1, dilation: 1, in_stride: len_out, start: 0, len_out };
        let mut next = res.forward(&lp.res_w, &lp.res_b, &z);
        for ch in 0..c {
            let src = &h[ch * len + shift..ch * len + shift + len_out];
            next[ch * len_out..(ch + 1) * len_out].iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }

        if keep {
            cache_hidden.push(std::mem::replace(&mut h, next));
            cache_filt.push(f);
            cache_gate.push(gate);
            cache_z.push(z);
        } else {
            h = next;
        }
        len = len_out;
    }

    let act = |v: f64| if gated { relu(v) } else { v };
    let head1 = Conv { c_in: s, c_out: s, k: 1, dilation: 1, in_stride: t_out, start: 0, len_out: t_out };
    let head2 = Conv { c_in: s, c_out: 1, k: 1, dilation: 1, in_stride: t_out, start: 0, len_out: t_out };
    let a1: Vec<f64> = skip_sum.iter().map(|&v| act(v)).collect();
    let u2 = head1.forward(&params.head1_w, &params.head1_b, &a1);
    let a2: Vec<f64> = u2.iter().map(|&v| act(v)).collect();
    let y = head2.forward(&params.head2_w, &params.head2_b, &a2);

    let cache = keep.then(|| ForwardCache {
        hidden: cache_hidden,
        filt: cache_filt,
        gate: cache_gate,
        z: cache_z,
        skip_sum,
        head_a1: a1,
        head_u2: u2,
        head_a2: a2,
    });
    Ok((y, cache))
}

/// Valid-mode forward pass: `input.len() − 2r` outputs.
pub fn forward(params: &NetParams, cfg: &NetConfig, input: &[f64]) -> Result<Vec<f64>> {
    Ok(run(params, cfg, input, false)?.0)
}

/// Forward pass that also returns the intermediates needed by [`backward`].
pub fn forward_cached(params: &NetParams, cfg: &NetConfig, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    let (y, cache) = run(params, cfg, input, true)?;
    Ok((y, cache.expect("cache requested")))
}

/// Mean absolute error over the valid region `r..T−r` (exactly `T − 2r`
/// samples). `pred[t]` is aligned with `target[t + r]`.
pub fn l1_valid_loss(pred: &[f64], target: &[f64], r: usize) -> Result<f64> {
    let t = target.len();
    if t <= 2 * r {
        return Err(NeuralError::LengthMismatch(format!("target length {t} leaves no valid region for radius {r}")));
    }
    let valid = t - 2 * r;
    if pred.len() != valid {
        return Err(NeuralError::LengthMismatch(format!(
            "prediction has {} samples, valid region has {valid}",
            pred.len()
        )));
    }
    let sum: f64 = pred.iter().zip(&target[r..t - r]).map(|(p, y)| (y - p).abs()).sum();
    Ok(sum / valid as f64)
}

/// Loss and exact reverse-mode gradients of [`l1_valid_loss`] with respect to
/// every parameter. `target` has the same length as `input`.
///
/// Subgradients at kinks (|·| at 0, ReLU at 0) are taken as 0.
pub fn backward(params: &NetParams, cfg: &NetConfig, input: &[f64], target: &[f64]) -> Result<(f64, NetParams)> {
    if target.len() != input.len() {
        return Err(NeuralError::LengthMismatch(format!("input has {} samples, target {}", input.len(), target.len())));
    }
    let (y, cache) = forward_cached(params, cfg, input)?;
    let r = cfg.receptive_radius();
    let loss = l1_valid_loss(&y, target, r)?;

    let (c, s, k) = (cfg.channels, cfg.skip_channels, cfg.filter_width);
    let half = cfg.half_width();
    let gated = cfg.activation == Activation::Gated;
    let n = input.len();
    let t_out = n - 2 * r;
    let mut grads = NetParams::zeros(cfg);

    let inv = 1.0 / t_out as f64;
    let dy: Vec<f64> = y
        .iter()
        .zip(&target[r..n - r])
        .map(|(p, t)| {
            let e = p - t;
            if e > 0.0 {
                inv
            } else if e < 0.0 {
                -inv
            } else {
                0.0
            }
        })
        .collect();

    let dact = |pre: f64| if !gated || pre > 0.0 { 1.0 } else { 0.0 };
    let head1 = Conv { c_in: s, c_out: s, k: 1, dilation: 1, in_stride: t_out, start: 0, len_out: t_out };
    let head2 = Conv { c_in: s, c_out: 1, k: 1, dilation: 1, in_stride: t_out, start: 0, len_out: t_out };

    let mut da2 = vec![0.0; s * t_out];
    head2.backward(&params.head2_w, &cache.head_a2, &dy, &mut grads.head2_w, &mut grads.head2_b, Some(&mut da2));
    let du2: Vec<f64> = da2.iter().zip(&cache.head_u2).map(|(g, &u)| g * dact(u)).collect();
    let mut da1 = vec![0.0; s * t_out];
    head1.backward(&params.head1_w, &cache.head_a1, &du2, &mut grads.head1_w, &mut grads.head1_b, Some(&mut da1));
    let ds: Vec<f64> = da1.iter().zip(&cache.skip_sum).map(|(g, &u)| g * dact(u)).collect();

    let dilations: Vec<usize> = cfg.dilations().collect();
    let mut trimmed_after: Vec<usize> = Vec::with_capacity(dilations.len());
    let mut acc = 0;
    for &d in &dilations {
        acc += half * d;
        trimmed_after.push(acc);
    }

    // gradient w.r.t. the output of the layer being processed
    let last_len = n - 2 * r;
    let mut dh = vec![0.0; c * last_len];
    for l in (0..dilations.len()).rev() {
        let d = dilations[l];
        let shift = half * d;
        let h_in = &cache.hidden[l];
        let len_in = h_in.len() / c;
        let len_out = len_in - 2 * shift;
        let lp = &params.layers[l];
        let gl = &mut grads.layers[l];
        let z = &cache.z[l];

        let mut dz = vec![0.0; c * len_out];
        let skip = Conv {
            c_in: c,
            c_out: s,
            k: 1,
            dilation: 1,
            in_stride: len_out,
            start: r - trimmed_after[l],
            len_out: t_out,
        };
        skip.backward(&lp.skip_w, z, &ds, &mut gl.skip_w, &mut gl.skip_b, Some(&mut dz));
        let res = Conv { c_in: c, c_out: c, k: 1, dilation: 1, in_stride: len_out, start: 0, len_out };
        res.backward(&lp.res_w, z, &dh, &mut gl.res_w, &mut gl.res_b, Some(&mut dz));

        let mut dh_prev = vec![0.0; c * len_in];
        for ch in 0..c {
            dh_prev[ch * len_in + shift..ch * len_in + shift + len_out]
                .iter_mut()
                .zip(&dh[ch * len_out..(ch + 1) * len_out])
                .for_each(|(a, b)| *a += b);
        }

        let conv = Conv { c_in: c, c_out: c, k, dilation: d, in_stride: len_in, start: 0, len_out };
        if gated {
            let tf = &cache.filt[l];
            let sg = &cache.gate[l];
            let df: Vec<f64> = dz.iter().zip(tf.iter().zip(sg)).map(|(g, (t, s))| g * s * (1.0 - t * t)).collect();
            let dg: Vec<f64> = dz.iter().zip(tf.iter().zip(sg)).map(|(g, (t, s))| g * t * s * (1.0 - s)).collect();
            conv.backward(&lp.filter_w, h_in, &df, &mut gl.filter_w, &mut gl.filter_b, Some(&mut dh_prev));
            conv.backward(&lp.gate_w, h_in, &dg, &mut gl.gate_w, &mut gl.gate_b, Some(&mut dh_prev));
        } else {
            conv.backward(&lp.filter_w, h_in, &dz, &mut gl.filter_w, &mut gl.filter_b, Some(&mut dh_prev));
        }
        dh = dh_prev;
    }

    let proj = Conv { c_in: 1, c_out: c, k: 1, dilation: 1, in_stride: n, start: 0, len_out: n };
    proj.backward(&params.input_w, input, &dh, &mut grads.input_w, &mut grads.input_b, None);
    Ok((loss, grads))
}
