//! Spectral shaping followed by dynamic range compression.
//!
//! This is the teacher: its output provides the training targets for the
//! student network and is also one of the evaluated conditions.
//!
//! The shaping stage runs a 75%-overlap Hann STFT. Each frame's magnitude is
//! multiplied by two gains:
//!
//! * an adaptive formant sharpening gain `(E(f)/GM(E))^(β·Pv)`, where `E` is the
//!   cepstrally smoothed spectral envelope, `GM` its geometric mean over
//!   frequency and `Pv` the frame's voicing probability;
//! * a fixed piecewise log-linear boost that lifts the 1–4 kHz region and
//!   attenuates the low band.
//!
//! The compression stage follows the signal envelope with a one-pole
//! attack/release detector and applies `c·(ref − L)` dB of gain, clamped.

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioError, Waveform};
use crate::dsp;

pub const SAMPLE_RATE_HZ: u32 = 16_000;

#[derive(Debug, Error)]
pub enum SsdrcError {
    #[error("expected {SAMPLE_RATE_HZ} Hz input, got {0} Hz")]
    WrongSampleRate(u32),
    #[error("frame too short for voicing analysis: {len} < {needed}")]
    FrameTooShort { len: usize, needed: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("zero-energy input")]
    ZeroEnergy,
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub type Result<T> = std::result::Result<T, SsdrcError>;

/// One point of the fixed shaping filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub freq_hz: f64,
    pub gain_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsdrcParams {
    pub frame_len: usize,
    pub hop: usize,
    /// Formant sharpening strength β.
    pub sharpening_strength: f64,
    pub fixed_filter_breakpoints: Vec<Breakpoint>,
    pub env_attack_ms: f64,
    pub env_release_ms: f64,
    /// Compression ratio `c` in `[0, 1]`; 0 disables compression.
    pub comp_ratio: f64,
    pub comp_ref_dbfs: f64,
    pub gain_clamp_db: f64,
    pub equal_energy: bool,
}

impl Default for SsdrcParams {
    fn default() -> Self {
        let bp = |freq_hz, gain_db| Breakpoint { freq_hz, gain_db };
        Self {
            frame_len: 512,
            hop: 128,
            sharpening_strength: 0.3,
            fixed_filter_breakpoints: vec![
                bp(0.0, -6.0),
                bp(500.0, -6.0),
                bp(1000.0, 9.0),
                bp(4000.0, 9.0),
                bp(8000.0, 3.0),
            ],
            env_attack_ms: 5.0,
            env_release_ms: 20.0,
            comp_ratio: 0.5,
            comp_ref_dbfs: -26.0,
            gain_clamp_db: 15.0,
            equal_energy: true,
        }
    }
}

impl SsdrcParams {
    /// Parameters under which every stage is the identity.
    pub fn identity() -> Self {
        Self {
            sharpening_strength: 0.0,
            fixed_filter_breakpoints: vec![Breakpoint { freq_hz: 0.0, gain_db: 0.0 }],
            comp_ratio: 0.0,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SsdrcError::InvalidParams(m.to_string()));
        if !self.frame_len.is_power_of_two() || self.frame_len < 4 {
            return bad("frame_len must be a power of two");
        }
        if self.hop == 0 || self.hop > self.frame_len / 2 {
            return bad("hop must satisfy 0 < hop <= frame_len/2");
        }
        if !(0.0..=1.0).contains(&self.comp_ratio) {
            return bad("comp_ratio must lie in [0, 1]");
        }
        if !(self.sharpening_strength >= 0.0) {
            return bad("sharpening_strength must be non-negative");
        }
        if self.env_attack_ms <= 0.0 || self.env_release_ms <= 0.0 {
            return bad("envelope time constants must be positive");
        }
        if self.gain_clamp_db < 0.0 {
            return bad("gain_clamp_db must be non-negative");
        }
        if self.fixed_filter_breakpoints.is_empty() {
            return bad("at least one fixed filter breakpoint is required");
        }
        if self.fixed_filter_breakpoints.windows(2).any(|w| w[1].freq_hz <= w[0].freq_hz) {
            return bad("fixed filter breakpoints must have increasing frequency");
        }
        Ok(())
    }

    /// Fixed filter gain in dB at `freq_hz`, interpolated linearly in log
    /// frequency between breakpoints (linearly in frequency next to a 0 Hz
    /// breakpoint) and held constant outside the breakpoint range.
    pub fn fixed_gain_db(&self, freq_hz: f64) -> f64 {
        let bps = &self.fixed_filter_breakpoints;
        if freq_hz <= bps[0].freq_hz {
            return bps[0].gain_db;
        }
        for w in bps.windows(2) {
            let (a, b) = (w[0], w[1]);
            if freq_hz <= b.freq_hz {
                let t = if a.freq_hz > 0.0 {
                    (freq_hz / a.freq_hz).ln() / (b.freq_hz / a.freq_hz).ln()
                } else {
                    (freq_hz - a.freq_hz) / (b.freq_hz - a.freq_hz)
                };
                return a.gain_db + t * (b.gain_db - a.gain_db);
            }
        }
        bps[bps.len() - 1].gain_db
    }
}

const PITCH_MIN_HZ: f64 = 60.0;
const PITCH_MAX_HZ: f64 = 400.0;

fn pitch_lags(sample_rate_hz: u32) -> (usize, usize) {
    let sr = sample_rate_hz as f64;
    ((sr / PITCH_MAX_HZ).floor() as usize, (sr / PITCH_MIN_HZ).ceil() as usize)
}

/// Minimum frame length accepted by [`voicing_probability`].
pub fn min_voicing_frame(sample_rate_hz: u32) -> usize {
    2 * pitch_lags(sample_rate_hz).1
}

/// Peak normalised autocorrelation over the 60–400 Hz pitch-lag range, in `[0, 1]`.
pub fn voicing_probability(frame: &[f64], sample_rate_hz: u32) -> Result<f64> {
    let (lo, hi) = pitch_lags(sample_rate_hz);
    let needed = 2 * hi;
    if frame.len() < needed {
        return Err(SsdrcError::FrameTooShort { len: frame.len(), needed });
    }
    let mut best = 0.0f64;
    for lag in lo..=hi {
        let (a, b) = (&frame[..frame.len() - lag], &frame[lag..]);
        let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
        for (&u, &v) in a.iter().zip(b) {
            xy += u * v;
            xx += u * u;
            yy += v * v;
        }
        let denom = (xx * yy).sqrt();
        if denom > 0.0 {
            best = best.max(xy / denom);
        }
    }
    Ok(best.clamp(0.0, 1.0))
}

/// Quefrency cutoff for envelope smoothing: coefficients below 1 ms are kept.
fn lifter_len(sample_rate_hz: u32) -> usize {
    (sample_rate_hz as usize / 1000).max(1)
}

/// Log-magnitude spectral envelope (natural log) for bins `0..=n/2`, by
/// low-quefrency liftering of the real cepstrum.
pub fn cepstral_log_envelope(planner: &mut FftPlanner<f64>, magnitude_full: &[f64], keep: usize) -> Vec<f64> {
    let n = magnitude_full.len();
    let peak = magnitude_full.iter().cloned().fold(0.0, f64::max);
    let floor = (peak * 1e-6).max(1e-12);
    let mut spec: Vec<rustfft::num_complex::Complex<f64>> =
        magnitude_full.iter().map(|&m| rustfft::num_complex::Complex::new(m.max(floor).ln(), 0.0)).collect();
    let mut cep = dsp::ifft_real(planner, &mut spec);
    for (q, c) in cep.iter_mut().enumerate() {
        let quef = q.min(n - q);
        if quef >= keep {
            *c = 0.0;
        }
    }
    let env = dsp::fft_real(planner, &cep);
    env[..=n / 2].iter().map(|c| c.re).collect()
}

/// STFT-domain formant sharpening and fixed spectral tilt compensation.
pub fn spectral_shaping(w: &Waveform, p: &SsdrcParams) -> Result<Waveform> {
    p.validate()?;
    let sr = w.sample_rate_hz();
    if sr != SAMPLE_RATE_HZ {
        return Err(SsdrcError::WrongSampleRate(sr));
    }
    let x = w.samples();
    let len = x.len();
    let n = p.frame_len;
    let hop = p.hop;
    let window = dsp::hann_periodic(n);
    let keep = lifter_len(sr);
    let voicing_len = n.max(min_voicing_frame(sr));

    let fixed: Vec<f64> = (0..=n / 2)
        .map(|k| {
            let f = k as f64 * sr as f64 / n as f64;
            10f64.powf(p.fixed_gain_db(f) / 20.0)
        })
        .collect();

    let mut planner = FftPlanner::new();
    let mut acc = vec![0.0; len];
    let mut wsum = vec![0.0; len];
    let sample = |i: i64| -> f64 { if i >= 0 && (i as usize) < len { x[i as usize] } else { 0.0 } };

    let mut start = -((n - hop) as i64);
    while start < len as i64 {
        let frame: Vec<f64> = (0..n).map(|j| sample(start + j as i64) * window[j]).collect();
        let mut spec = dsp::fft_real(&mut planner, &frame);

        let mut gains = fixed.clone();
        if p.sharpening_strength > 0.0 {
            let centre = start + (n / 2) as i64;
            let vstart = centre - (voicing_len / 2) as i64;
            let vframe: Vec<f64> = (0..voicing_len).map(|j| sample(vstart + j as i64)).collect();
            let pv = voicing_probability(&vframe, sr)?;
            let exponent = p.sharpening_strength * pv;
            if exponent > 0.0 {
                let mags: Vec<f64> = spec.iter().map(|c| c.norm()).collect();
                let log_env = cepstral_log_envelope(&mut planner, &mags, keep);
                let mean_log = log_env.iter().sum::<f64>() / log_env.len() as f64;
                for (g, le) in gains.iter_mut().zip(&log_env) {
                    *g *= (exponent * (le - mean_log)).exp();
                }
            }
        }

        for k in 0..=n / 2 {
            spec[k] *= gains[k];
            if k != 0 && k != n / 2 {
                spec[n - k] *= gains[k];
            }
        }
        let y = dsp::ifft_real(&mut planner, &mut spec);
        for j in 0..n {
            let i = start + j as i64;
            if i >= 0 && (i as usize) < len {
                acc[i as usize] += y[j] * window[j];
                wsum[i as usize] += window[j] * window[j];
            }
        }
        start += hop as i64;
    }

    let out = acc.iter().zip(&wsum).map(|(a, s)| if *s > 1e-12 { a / s } else { 0.0 }).collect();
    Ok(w.with_samples(out)?)
}

const LEVEL_FLOOR: f64 = 1e-10;
const CALIBRATION_HZ: f64 = 1000.0;

fn follow(x: impl Iterator<Item = f64>, a_att: f64, a_rel: f64) -> impl Iterator<Item = f64> {
    let mut env = 0.0;
    x.map(move |v| {
        let r = v.abs();
        let a = if r > env { a_att } else { a_rel };
        env = a * env + (1.0 - a) * r;
        env
    })
}

/// Scale that makes the follower read the RMS of a steady 1 kHz sine.
fn detector_calibration(sr: f64, a_att: f64, a_rel: f64) -> f64 {
    let settle = (0.1 * sr) as usize;
    let measure = (0.1 * sr) as usize;
    let unit_rms = (0..settle + measure)
        .map(|i| std::f64::consts::SQRT_2 * (2.0 * std::f64::consts::PI * CALIBRATION_HZ * i as f64 / sr).sin());
    let mean = follow(unit_rms, a_att, a_rel).skip(settle).sum::<f64>() / measure as f64;
    1.0 / mean
}

/// One-pole attack/release follower on the rectified signal (attack while the
/// rectified input exceeds the envelope), calibrated to read the RMS of a
/// steady 1 kHz sine. Returns the level in dBFS per sample.
pub fn envelope_db(x: &[f64], sample_rate_hz: u32, attack_ms: f64, release_ms: f64) -> Vec<f64> {
    let sr = sample_rate_hz as f64;
    let a_att = (-1.0 / (attack_ms * 1e-3 * sr)).exp();
    let a_rel = (-1.0 / (release_ms * 1e-3 * sr)).exp();
    let cal = detector_calibration(sr, a_att, a_rel);
    follow(x.iter().copied(), a_att, a_rel).map(|env| 20.0 * (env * cal).max(LEVEL_FLOOR).log10()).collect()
}

/// Per-sample gain compression driven by [`envelope_db`].
pub fn drc(w: &Waveform, p: &SsdrcParams) -> Result<Waveform> {
    p.validate()?;
    if w.is_empty() {
        return Err(AudioError::Empty.into());
    }
    if p.comp_ratio == 0.0 {
        return Ok(w.clone());
    }
    let levels = envelope_db(w.samples(), w.sample_rate_hz(), p.env_attack_ms, p.env_release_ms);
    let out = w
        .samples()
        .iter()
        .zip(&levels)
        .map(|(&s, &l)| {
            let g = (p.comp_ratio * (p.comp_ref_dbfs - l)).clamp(-p.gain_clamp_db, p.gain_clamp_db);
            s * 10f64.powf(g / 20.0)
        })
        .collect();
    Ok(w.with_samples(out)?)
}

/// Full teacher: shaping, compression, then (by default) energy restoration.
pub fn ssdrc_enhance(w: &Waveform, p: &SsdrcParams) -> Result<Waveform> {
    if w.sample_rate_hz() != SAMPLE_RATE_HZ {
        return Err(SsdrcError::WrongSampleRate(w.sample_rate_hz()));
    }
    if w.energy() == 0.0 {
        return Err(SsdrcError::ZeroEnergy);
    }
    let shaped = spectral_shaping(w, p)?;
    let compressed = drc(&shaped, p)?;
    if !p.equal_energy {
        return Ok(compressed);
    }
    audio::scale_to_energy(&compressed, w).map_err(|e| match e {
        AudioError::ZeroEnergy => SsdrcError::ZeroEnergy,
        other => other.into(),
    })
}

/// Spectral tilt metric: energy in 1–4 kHz over energy in 0–0.5 kHz.
pub fn tilt_ratio(w: &Waveform) -> f64 {
    let sr = w.sample_rate_hz();
    let hi = dsp::band_energy(w.samples(), sr, 1000.0, 4000.0);
    let lo = dsp::band_energy(w.samples(), sr, 0.0, 500.0);
    hi / lo
}

/// Standard deviation of the default-detector envelope in dB, floored at −90 dBFS.
pub fn envelope_db_std(w: &Waveform) -> f64 {
    let d = SsdrcParams::default();
    let env = envelope_db(w.samples(), w.sample_rate_hz(), d.env_attack_ms, d.env_release_ms);
    let vals: Vec<f64> = env.iter().map(|v| v.max(-90.0)).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
}
