//! Speech-shaped noise and exact-SNR mixing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioError, LevelSpec, Waveform};
use crate::dsp::{self, WelchAccumulator};

pub const LTASS_FFT_SIZE: usize = 512;
pub const SSN_FIR_TAPS: usize = 512;
pub const DEFAULT_SPEECH_RMS_DBFS: f64 = -23.0;

#[derive(Debug, Error)]
pub enum MaskingError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("mixed sample rates in corpus ({0} Hz and {1} Hz)")]
    MixedRates(u32, u32),
    #[error("noise ({noise} samples) is shorter than speech ({speech} samples)")]
    NoiseTooShort { noise: usize, speech: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero-energy {0}")]
    ZeroEnergy(&'static str),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub type Result<T> = std::result::Result<T, MaskingError>;

/// Long-term average magnitude spectrum (bins `0..=fft_size/2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ltass {
    pub magnitude: Vec<f64>,
    pub fft_size: usize,
    pub sample_rate_hz: u32,
}

impl Ltass {
    pub fn power(&self) -> Vec<f64> {
        self.magnitude.iter().map(|m| m * m).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCondition {
    pub snr_db: f64,
    pub seed: u64,
    #[serde(default = "default_speech_rms")]
    pub speech_rms_dbfs: f64,
}

fn default_speech_rms() -> f64 {
    DEFAULT_SPEECH_RMS_DBFS
}

impl NoiseCondition {
    pub fn new(snr_db: f64, seed: u64) -> Self {
        Self { snr_db, seed, speech_rms_dbfs: DEFAULT_SPEECH_RMS_DBFS }
    }
}

/// Welch-averaged magnitude spectrum pooled over every frame of the corpus.
pub fn estimate_ltass(corpus: &[Waveform]) -> Result<Ltass> {
    let first = corpus.first().ok_or(MaskingError::EmptyCorpus)?;
    let sr = first.sample_rate_hz();
    let mut acc = WelchAccumulator::new(LTASS_FFT_SIZE);
    for w in corpus {
        if w.sample_rate_hz() != sr {
            return Err(MaskingError::MixedRates(sr, w.sample_rate_hz()));
        }
        acc.add_signal(w.samples());
    }
    let magnitude = acc.mean_power().into_iter().map(f64::sqrt).collect();
    Ok(Ltass { magnitude, fft_size: LTASS_FFT_SIZE, sample_rate_hz: sr })
}

/// Linear-phase FIR whose magnitude response samples `l` on its bin grid.
pub fn ssn_fir(l: &Ltass) -> Vec<f64> {
    let n = SSN_FIR_TAPS;
    let half = n / 2;
    // resample the LTASS grid onto the FIR grid if sizes differ
    let mag_at = |k: usize| -> f64 {
        let pos = k as f64 * (l.magnitude.len() - 1) as f64 / half as f64;
        let i = pos.floor() as usize;
        if i + 1 >= l.magnitude.len() {
            return *l.magnitude.last().unwrap();
        }
        let f = pos - i as f64;
        l.magnitude[i] * (1.0 - f) + l.magnitude[i + 1] * f
    };
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    for k in 0..=half {
        spec[k] = Complex::new(mag_at(k), 0.0);
        if k > 0 && k < half {
            spec[n - k] = spec[k];
        }
    }
    let zero_phase = dsp::ifft_real(&mut FftPlanner::new(), &mut spec);
    let window = dsp::hann_periodic(n);
    (0..n).map(|i| zero_phase[(i + half) % n] * window[i]).collect()
}

fn fft_convolve_valid(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len() + h.len() - 1;
    let mut planner = FftPlanner::new();
    let mut xa: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    xa.resize(n, Complex::new(0.0, 0.0));
    let mut ha: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    ha.resize(n, Complex::new(0.0, 0.0));
    let fwd = planner.plan_fft_forward(n);
    fwd.process(&mut xa);
    fwd.process(&mut ha);
    for (a, b) in xa.iter_mut().zip(&ha) {
        *a *= b;
    }
    let full = dsp::ifft_real(&mut planner, &mut xa);
    full[h.len() - 1..x.len()].to_vec()
}

/// Seeded Gaussian noise shaped by the LTASS FIR, at `cond.speech_rms_dbfs`.
pub fn synth_ssn(l: &Ltass, duration_s: f64, cond: &NoiseCondition) -> Result<Waveform> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(MaskingError::Invalid(format!("duration {duration_s}")));
    }
    let len = ((duration_s * l.sample_rate_hz as f64).round() as usize).max(1);
    let h = ssn_fir(l);
    let mut rng = ChaCha8Rng::seed_from_u64(cond.seed);
    let white: Vec<f64> = (0..len + h.len() - 1).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let shaped = fft_convolve_valid(&white, &h);
    let w = Waveform::new(shaped, l.sample_rate_hz)?;
    Ok(audio::normalize_rms(&w, LevelSpec::Dbfs(cond.speech_rms_dbfs))?)
}

/// A seeded crop offset into a noise recording of `noise_len` samples.
pub fn crop_offset(noise_len: usize, speech_len: usize, seed: u64) -> Result<usize> {
    if noise_len < speech_len {
        return Err(MaskingError::NoiseTooShort { noise: noise_len, speech: speech_len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rng.random_range(0..=noise_len - speech_len))
}

#[derive(Debug, Clone)]
pub struct Mixture {
    pub mixture: Waveform,
    pub scaled_noise: Waveform,
}

/// Adds `noise[offset..offset + len]`, scaled to hit `snr_db`, to `speech`.
/// The speech samples are left as they are.
pub fn mix_at_snr_with_offset(speech: &Waveform, noise: &Waveform, snr_db: f64, offset: usize) -> Result<Mixture> {
    if !snr_db.is_finite() {
        return Err(MaskingError::Invalid(format!("snr {snr_db}")));
    }
    let n = speech.len();
    if offset + n > noise.len() {
        return Err(MaskingError::NoiseTooShort { noise: noise.len().saturating_sub(offset), speech: n });
    }
    let seg = &noise.samples()[offset..offset + n];
    let e_noise: f64 = seg.iter().map(|v| v * v).sum();
    if e_noise <= 0.0 {
        return Err(MaskingError::ZeroEnergy("noise"));
    }
    if speech.energy() <= 0.0 {
        return Err(MaskingError::ZeroEnergy("speech"));
    }
    let rms_s = (speech.energy() / n as f64).sqrt();
    let rms_n = (e_noise / n as f64).sqrt();
    let g = rms_s / (rms_n * 10f64.powf(snr_db / 20.0));
    let scaled: Vec<f64> = seg.iter().map(|v| v * g).collect();
    let mixed: Vec<f64> = speech.samples().iter().zip(&scaled).map(|(s, v)| s + v).collect();
    Ok(Mixture { mixture: speech.with_samples(mixed)?, scaled_noise: speech.with_samples(scaled)? })
}

/// Mixes using the start of `noise`.
pub fn mix_at_snr(speech: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Mixture> {
    mix_at_snr_with_offset(speech, noise, snr_db, 0)
}

/// `20·log10(rms(speech) / rms(noise))`.
pub fn measure_snr(speech: &Waveform, scaled_noise: &Waveform) -> Result<f64> {
    if speech.len() != scaled_noise.len() {
        return Err(MaskingError::LengthMismatch(speech.len(), scaled_noise.len()));
    }
    if speech.energy() <= 0.0 {
        return Err(MaskingError::ZeroEnergy("speech"));
    }
    if scaled_noise.energy() <= 0.0 {
        return Err(MaskingError::ZeroEnergy("noise"));
    }
    Ok(10.0 * (speech.energy() / scaled_noise.energy()).log10())
}

/// Cache file name for a pre-mixed stimulus.
pub fn stimulus_file_name(utt_id: &str, condition: &str, snr_db: f64) -> String {
    format!("{utt_id}_{condition}_{snr_db}dB.wav")
}
