//! Optimisation: learning-rate schedule, Adam, the teacher-student training
//! loop, checkpoints and whole-utterance inference.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NetConfig, NetParams, NeuralError, Result, backward, forward};
use crate::audio::{self, AudioError, LevelSpec, Waveform};
use crate::fsutil;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Continuous exponential learning-rate decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay_steps: f64,
    pub decay_rate: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { base_lr: 0.001, decay_steps: 20_000.0, decay_rate: 0.99 }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) || !(self.decay_steps > 0.0) || !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(NeuralError::InvalidConfig(format!("bad learning-rate schedule {self:?}")));
        }
        Ok(())
    }
}

/// `base_lr · decay_rate^(step / decay_steps)`.
pub fn lr_at(sched: &LrSchedule, step: u64) -> f64 {
    sched.base_lr * sched.decay_rate.powf(step as f64 / sched.decay_steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub params: NetParams,
    pub adam_m: NetParams,
    pub adam_v: NetParams,
    pub step: u64,
    pub rng_seed: u64,
}

impl TrainState {
    pub fn new(cfg: &NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = NetParams::init(cfg, &mut rng);
        Self::from_params(cfg, params, seed)
    }

    pub fn from_params(cfg: &NetConfig, params: NetParams, seed: u64) -> Self {
        Self { params, adam_m: NetParams::zeros(cfg), adam_v: NetParams::zeros(cfg), step: 0, rng_seed: seed }
    }
}

/// One bias-corrected Adam update at the scheduled learning rate.
pub fn adam_step(state: &mut TrainState, grads: &NetParams, sched: &LrSchedule) -> Result<()> {
    if !state.params.same_shape(grads)
        || !state.params.same_shape(&state.adam_m)
        || !state.params.same_shape(&state.adam_v)
    {
        return Err(NeuralError::ShapeMismatch);
    }
    let lr = lr_at(sched, state.step);
    let t = (state.step + 1) as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let g = grads.tensors();
    let m = state.adam_m.tensors_mut();
    let v = state.adam_v.tensors_mut();
    let p = state.params.tensors_mut();
    for (((pt, mt), vt), gt) in p.into_iter().zip(m).zip(v).zip(g) {
        for i in 0..pt.len() {
            let gi = gt[i];
            mt[i] = ADAM_BETA1 * mt[i] + (1.0 - ADAM_BETA1) * gi;
            vt[i] = ADAM_BETA2 * vt[i] + (1.0 - ADAM_BETA2) * gi * gi;
            let m_hat = mt[i] / c1;
            let v_hat = vt[i] / c2;
            pt[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
    state.step += 1;
    Ok(())
}

/// A plain input and its teacher target, both at the network's RMS level.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub id: String,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl TrainingPair {
    /// Normalises both signals to RMS 0.06 independently.
    pub fn new(id: impl Into<String>, plain: &Waveform, teacher: &Waveform) -> Result<Self> {
        if plain.len() != teacher.len() {
            return Err(NeuralError::LengthMismatch(format!(
                "plain has {} samples, teacher {}",
                plain.len(),
                teacher.len()
            )));
        }
        let norm = |w: &Waveform| -> Result<Vec<f64>> {
            match audio::normalize_rms(w, LevelSpec::NETWORK_INPUT) {
                Ok(v) => Ok(v.into_samples()),
                Err(AudioError::ZeroEnergy) => Err(NeuralError::ZeroEnergy),
                Err(e) => Err(e.into()),
            }
        };
        Ok(Self { id: id.into(), input: norm(plain)?, target: norm(teacher)? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    /// Total passes over the corpus, counting passes already completed by a
    /// resumed state; one random crop per utterance per pass.
    pub epochs: usize,
    /// Stops early once this many optimizer steps have run in total.
    pub max_steps: Option<u64>,
    pub seed: u64,
    /// Invoke the checkpoint callback every this many steps.
    pub checkpoint_every: Option<u64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epochs: 1, max_steps: None, seed: 0, checkpoint_every: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: Vec<LossRecord>,
    /// Ids of utterances skipped for being shorter than a training crop.
    pub skipped: Vec<String>,
}

/// Teacher-student training with batch size 1.
///
/// Each step draws one utterance, takes a random crop of
/// `target_field + 2r` samples, and applies one Adam update on the valid-region
/// L1 loss. Runs from `resume` when given, otherwise from a fresh
/// initialisation seeded by `opts.seed`.
pub fn train(
    pairs: &[TrainingPair],
    cfg: &NetConfig,
    sched: &LrSchedule,
    opts: &TrainOptions,
    resume: Option<TrainState>,
    mut on_checkpoint: impl FnMut(&TrainState, &[LossRecord]) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    sched.validate()?;
    let span = cfg.training_input_len();
    let mut skipped = Vec::new();
    let usable: Vec<&TrainingPair> = pairs
        .iter()
        .filter(|p| {
            let ok = p.input.len() > span && p.target.len() == p.input.len();
            if !ok {
                log::warn!("skipping {}: {} samples, need more than {span}", p.id, p.input.len());
                skipped.push(p.id.clone());
            }
            ok
        })
        .collect();
    if usable.is_empty() {
        return Err(NeuralError::EmptyCorpus);
    }

    let mut state = match resume {
        Some(s) => {
            if !s.params.matches_config(cfg) {
                return Err(NeuralError::ShapeMismatch);
            }
            s
        }
        None => TrainState::new(cfg, opts.seed),
    };
    let mut history = Vec::new();

    let per_epoch = usable.len() as u64;
    let first_epoch = (state.step / per_epoch) as usize;
    let mut skip = (state.step % per_epoch) as usize;

    'epochs: for epoch in first_epoch..opts.epochs {
        let mut epoch_rng = step_rng(state.rng_seed, u64::MAX - epoch as u64);
        let mut order: Vec<usize> = (0..usable.len()).collect();
        order.shuffle(&mut epoch_rng);
        for &i in order.iter().skip(std::mem::take(&mut skip)) {
            if opts.max_steps.is_some_and(|m| state.step >= m) {
                break 'epochs;
            }
            let pair = usable[i];
            let mut rng = step_rng(state.rng_seed, state.step);
            let start = rng.random_range(0..=pair.input.len() - span);
            let x = &pair.input[start..start + span];
            let y = &pair.target[start..start + span];
            let lr = lr_at(sched, state.step);
            let (loss, grads) = backward(&state.params, cfg, x, y)?;
            history.push(LossRecord { step: state.step, lr, loss });
            adam_step(&mut state, &grads, sched)?;
            if opts.checkpoint_every.is_some_and(|k| k > 0 && state.step % k == 0) {
                on_checkpoint(&state, &history)?;
            }
        }
    }
    Ok(TrainOutcome { state, history, skipped })
}

fn step_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(salt);
    rng
}

/// Loss history as `step,lr,loss` CSV.
pub fn loss_history_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("step,lr,loss\n");
    for r in history {
        out.push_str(&format!("{},{:e},{:e}\n", r.step, r.lr, r.loss));
    }
    out
}

/// Index-mirrored padding by `pad` samples on each side (the edge sample is
/// not repeated). Works for any non-empty input, reflecting repeatedly.
pub fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len() as i64;
    if n == 0 {
        return Vec::new();
    }
    let period = (2 * n - 2).max(1);
    (-(pad as i64)..n + pad as i64)
        .map(|i| {
            let mut j = i.rem_euclid(period);
            if j >= n {
                j = period - j;
            }
            x[j as usize]
        })
        .collect()
}

/// Runs the trained network over a whole utterance in one pass.
///
/// The input is normalised to RMS 0.06, reflect-padded by `r` on both sides,
/// and the output is rescaled to the input's energy.
pub fn enhance_neural(params: &NetParams, cfg: &NetConfig, w: &Waveform) -> Result<Waveform> {
    enhance_neural_with(params, cfg, w, true)
}

/// As [`enhance_neural`]; without `equal_energy` the output only undoes the
/// input normalisation gain.
pub fn enhance_neural_with(params: &NetParams, cfg: &NetConfig, w: &Waveform, equal_energy: bool) -> Result<Waveform> {
    if w.sample_rate_hz() != crate::ssdrc::SAMPLE_RATE_HZ {
        return Err(NeuralError::WrongSampleRate(w.sample_rate_hz()));
    }
    let normalized = match audio::normalize_rms(w, LevelSpec::NETWORK_INPUT) {
        Ok(v) => v,
        Err(AudioError::ZeroEnergy) => return Err(NeuralError::ZeroEnergy),
        Err(e) => return Err(e.into()),
    };
    let r = cfg.receptive_radius();
    let padded = reflect_pad(normalized.samples(), r);
    let mut y = forward(params, cfg, &padded)?;
    if !equal_energy {
        let gain = audio::rms(w)? / LevelSpec::NETWORK_INPUT.target_rms_linear();
        y.iter_mut().for_each(|v| *v *= gain);
        return Ok(w.with_samples(y)?);
    }
    let out = w.with_samples(y)?;
    match audio::scale_to_energy(&out, w) {
        Ok(v) => Ok(v),
        Err(AudioError::ZeroEnergy) => Err(NeuralError::ZeroEnergy),
        Err(e) => Err(e.into()),
    }
}

/// Mean absolute difference between the network's whole-utterance output and
/// the teacher target, averaged over utterances, at the network's RMS level.
pub fn validation_l1(params: &NetParams, cfg: &NetConfig, pairs: &[TrainingPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(NeuralError::EmptyCorpus);
    }
    let r = cfg.receptive_radius();
    let mut total = 0.0;
    for p in pairs {
        let y = forward(params, cfg, &reflect_pad(&p.input, r))?;
        total += y.iter().zip(&p.target).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

/// Parameters that scored best on validation during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestParams {
    pub step: u64,
    pub validation_l1: f64,
    pub params: NetParams,
}

/// Keeps the best-scoring parameters seen at checkpoint times. Batch-size-1
/// training is noisy, so the last iterate is rarely the best one.
pub struct BestTracker<'a> {
    cfg: &'a NetConfig,
    pairs: &'a [TrainingPair],
    pub best: Option<BestParams>,
}

impl<'a> BestTracker<'a> {
    pub fn new(cfg: &'a NetConfig, pairs: &'a [TrainingPair], previous: Option<BestParams>) -> Self {
        Self { cfg, pairs, best: previous }
    }

    /// Scores `state`; returns true when it became the new best.
    pub fn observe(&mut self, state: &TrainState) -> Result<bool> {
        let l1 = validation_l1(&state.params, self.cfg, self.pairs)?;
        if self.best.as_ref().is_some_and(|b| b.validation_l1 <= l1) {
            return Ok(false);
        }
        self.best = Some(BestParams { step: state.step, validation_l1: l1, params: state.params.clone() });
        Ok(true)
    }
}

const CHECKPOINT_FORMAT: &str = "wssdrc-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON container for a network and its optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: NetConfig,
    pub schedule: LrSchedule,
    pub state: TrainState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best: Option<BestParams>,
}

impl Checkpoint {
    pub fn new(config: NetConfig, schedule: LrSchedule, state: TrainState) -> Self {
        Self { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, config, schedule, state, best: None }
    }

    pub fn with_best(mut self, best: Option<BestParams>) -> Self {
        self.best = best;
        self
    }

    /// Parameters to run inference with: the validation-best snapshot when
    /// present, else the latest training state.
    pub fn inference_params(&self) -> &NetParams {
        self.best.as_ref().map(|b| &b.params).unwrap_or(&self.state.params)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(bytes)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!("{} v{}", ck.format, ck.version)));
        }
        ck.config.validate()?;
        if !ck.state.params.matches_config(&ck.config)
            || !ck.state.params.same_shape(&ck.state.adam_m)
            || !ck.state.params.same_shape(&ck.state.adam_v)
            || ck.best.as_ref().is_some_and(|b| !b.params.matches_config(&ck.config))
        {
            return Err(NeuralError::ShapeMismatch);
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
