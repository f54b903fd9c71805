//! Mono waveforms, WAV I/O, resampling and level arithmetic.
//!
//! Everything downstream (teacher, student, masking) works on [`Waveform`]
//! values holding `f64` samples nominally in `[-1, 1]`.

use std::io::{Cursor, Seek, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil;

/// Errors raised by waveform construction, I/O and level operations.
#[derive(Debug, Error)]
pub enum AudioError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("non-mono audio: {channels} channels")]
    NonMono { channels: u16 },
    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("empty waveform")]
    Empty,
    #[error("zero-energy input")]
    ZeroEnergy,
    #[error("invalid level: {0}")]
    InvalidLevel(f64),
    #[error("malformed wav: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AudioError>;

/// Mono sampled audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(AudioError::InvalidSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    /// Same rate, new samples. Finite-ness is re-checked.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sample_rate_hz)
    }

    fn scaled(&self, gain: f64) -> Self {
        Self { samples: self.samples.iter().map(|s| s * gain).collect(), sample_rate_hz: self.sample_rate_hz }
    }
}

/// Target RMS, either as a linear amplitude or in dB re full scale 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelSpec {
    Linear(f64),
    Dbfs(f64),
}

impl LevelSpec {
    /// RMS level the student network is trained and run at.
    pub const NETWORK_INPUT: LevelSpec = LevelSpec::Linear(0.06);
    /// Speech presentation level before masking.
    pub const PRESENTATION: LevelSpec = LevelSpec::Dbfs(-23.0);

    pub fn target_rms_linear(&self) -> f64 {
        match *self {
            LevelSpec::Linear(v) => v,
            LevelSpec::Dbfs(db) => dbfs_to_linear(db),
        }
    }
}

pub fn dbfs_to_linear(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn linear_to_dbfs(v: f64) -> f64 {
    20.0 * v.log10()
}

/// Reads a mono 16-bit PCM or 32-bit float WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(AudioError::MissingFile(path.display().to_string()));
    }
    let reader = hound::WavReader::open(path).map_err(map_hound)?;
    decode(reader)
}

/// Decodes WAV bytes held in memory.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    decode(reader)
}

fn decode<R: std::io::Read>(reader: hound::WavReader<R>) -> Result<Waveform> {
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::NonMono { channels: spec.channels });
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedCodec(format!("{fmt:?} {bits}-bit")));
        }
    };
    Waveform::new(samples, spec.sample_rate)
}

fn map_hound(e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io) => AudioError::Io(io),
        hound::Error::Unsupported => AudioError::UnsupportedCodec("unsupported wav format".into()),
        other => AudioError::Malformed(other.to_string()),
    }
}

fn quantize(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn encode_into<W: Write + Seek>(w: &Waveform, sink: W) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::new(sink, spec).map_err(map_hound)?;
    for &s in &w.samples {
        writer.write_sample(quantize(s)).map_err(map_hound)?;
    }
    writer.finalize().map_err(map_hound)
}

/// Encodes as 16-bit PCM without dither. Samples outside full scale clip.
pub fn encode_wav(w: &Waveform) -> Result<Vec<u8>> {
    let mut cur = Cursor::new(Vec::with_capacity(44 + 2 * w.len()));
    encode_into(w, &mut cur)?;
    Ok(cur.into_inner())
}

/// Writes 16-bit PCM atomically (temp file in the target directory, then rename).
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let bytes = encode_wav(w)?;
    fsutil::write_atomic(path.as_ref(), &bytes)?;
    Ok(())
}

pub fn rms(w: &Waveform) -> Result<f64> {
    if w.is_empty() {
        return Err(AudioError::Empty);
    }
    Ok((w.energy() / w.len() as f64).sqrt())
}

/// Scales `w` so its RMS equals the requested level.
pub fn normalize_rms(w: &Waveform, level: LevelSpec) -> Result<Waveform> {
    let target = level.target_rms_linear();
    if !(target.is_finite() && target > 0.0) {
        return Err(AudioError::InvalidLevel(target));
    }
    let current = rms(w)?;
    if current == 0.0 {
        return Err(AudioError::ZeroEnergy);
    }
    Ok(w.scaled(target / current))
}

/// Scales `w` so its total energy equals that of `reference`.
pub fn scale_to_energy(w: &Waveform, reference: &Waveform) -> Result<Waveform> {
    let e = w.energy();
    if e == 0.0 {
        return Err(AudioError::ZeroEnergy);
    }
    Ok(w.scaled((reference.energy() / e).sqrt()))
}

/// Energy ratio in dB, `10·log10(E_out / E_in)`.
pub fn energy_ratio_db(out: &Waveform, input: &Waveform) -> f64 {
    10.0 * (out.energy() / input.energy()).log10()
}

const TAPS_PER_PHASE: usize = 64;
const KAISER_BETA: f64 = 8.0;
const ROLLOFF: f64 = 0.92;

/// Band-limited rational resampling with a Kaiser-windowed sinc kernel,
/// 64 taps per output phase.
///
/// When downsampling, the cutoff sits just below the output Nyquist frequency.
pub fn resample(w: &Waveform, target_hz: u32) -> Result<Waveform> {
    if target_hz == 0 {
        return Err(AudioError::InvalidSampleRate);
    }
    let src_hz = w.sample_rate_hz;
    if src_hz == target_hz {
        return Ok(w.clone());
    }
    let g = gcd(src_hz as u64, target_hz as u64);
    let up = target_hz as u64 / g;
    let down = src_hz as u64 / g;
    let n_in = w.len() as u64;
    let n_out = ((n_in * target_hz as u64 + src_hz as u64 / 2) / src_hz as u64) as usize;

    // cutoff as a fraction of the input sample rate's Nyquist band
    let cutoff = ROLLOFF * (target_hz as f64 / src_hz as f64).min(1.0);
    let half = (TAPS_PER_PHASE / 2) as i64;
    let kaiser_norm = bessel_i0(KAISER_BETA);
    let x = &w.samples;

    // one kernel per phase, built lazily so odd ratios with huge `up` stay cheap
    let mut kernels: std::collections::HashMap<u64, Vec<f64>> = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let kernel = kernels.entry(phase).or_insert_with(|| {
            let frac = phase as f64 / up as f64;
            (0..TAPS_PER_PHASE as i64)
                .map(|i| {
                    let offset = (i - half + 1) as f64 - frac;
                    let window_arg = offset / (half as f64);
                    let win = if window_arg.abs() >= 1.0 {
                        0.0
                    } else {
                        bessel_i0(KAISER_BETA * (1.0 - window_arg * window_arg).sqrt()) / kaiser_norm
                    };
                    cutoff * sinc(cutoff * offset) * win
                })
                .collect()
        });
        let mut acc = 0.0;
        for (i, &k) in kernel.iter().enumerate() {
            let idx = base + i as i64 - half + 1;
            if idx >= 0 && (idx as usize) < x.len() {
                acc += k * x[idx as usize];
            }
        }
        out.push(acc);
    }
    Waveform::new(out, target_hz)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, amp: f64, sr: u32, n: usize) -> Waveform {
        let s = (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / sr as f64).sin()).collect();
        Waveform::new(s, sr).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(Waveform::new(vec![0.0], 0), Err(AudioError::InvalidSampleRate)));
        assert!(matches!(Waveform::new(vec![0.0, f64::NAN], 16000), Err(AudioError::NonFinite(1))));
    }

    #[test]
    fn rms_examples() {
        let w = Waveform::new(vec![0.5, -0.5, 0.5, -0.5], 16000).unwrap();
        assert_eq!(rms(&w).unwrap(), 0.5);
        let z = Waveform::new(vec![0.0; 10], 16000).unwrap();
        assert_eq!(rms(&z).unwrap(), 0.0);
        // 100 Hz at 16 kHz: 160 samples per period, 50 whole periods
        let s = sine(100.0, 1.0, 16000, 8000);
        assert!((rms(&s).unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-6);
        let e = Waveform::new(vec![], 16000).unwrap();
        assert!(matches!(rms(&e), Err(AudioError::Empty)));
    }

    #[test]
    fn normalize_square_wave_to_network_level() {
        let w = Waveform::new(vec![0.5, -0.5, 0.5, -0.5], 16000).unwrap();
        let out = normalize_rms(&w, LevelSpec::NETWORK_INPUT).unwrap();
        for (o, i) in out.samples().iter().zip(w.samples()) {
            assert!((o - 0.06 * i.signum()).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_to_dbfs() {
        let w = sine(440.0, 0.3, 16000, 16000);
        let out = normalize_rms(&w, LevelSpec::PRESENTATION).unwrap();
        let expected = 10f64.powf(-23.0 / 20.0);
        assert!((expected - 0.070_794_578).abs() < 1e-8);
        assert!((rms(&out).unwrap() / expected - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalize_identity_and_errors() {
        let w = Waveform::new(vec![0.06, -0.06, 0.06, -0.06], 16000).unwrap();
        let out = normalize_rms(&w, LevelSpec::Linear(0.06)).unwrap();
        assert_eq!(out.samples(), w.samples());
        let z = Waveform::new(vec![0.0; 4], 16000).unwrap();
        assert!(matches!(normalize_rms(&z, LevelSpec::Linear(0.06)), Err(AudioError::ZeroEnergy)));
        assert!(matches!(normalize_rms(&w, LevelSpec::Linear(-1.0)), Err(AudioError::InvalidLevel(_))));
    }

    #[test]
    fn scale_to_energy_examples() {
        let reference = Waveform::new(vec![0.1, -0.2, 0.3], 16000).unwrap();
        let doubled = reference.scaled(2.0);
        let out = scale_to_energy(&doubled, &reference).unwrap();
        for (o, r) in out.samples().iter().zip(reference.samples()) {
            assert!((o - r).abs() < 1e-15);
        }
        let same = scale_to_energy(&reference, &reference).unwrap();
        assert_eq!(same.samples(), reference.samples());
        let z = Waveform::new(vec![0.0; 3], 16000).unwrap();
        assert!(matches!(scale_to_energy(&z, &reference), Err(AudioError::ZeroEnergy)));
    }

    #[test]
    fn wav_roundtrip_within_one_lsb() {
        let ramp: Vec<f64> = (0..16000).map(|i| -1.0 + 2.0 * i as f64 / 16000.0).collect();
        let w = Waveform::new(ramp, 16000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ramp.wav");
        write_wav(&path, &w).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate_hz(), 16000);
        assert_eq!(back.len(), w.len());
        for (a, b) in back.samples().iter().zip(w.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn reads_float_and_preserves_rate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 44100,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut wr = hound::WavWriter::create(&path, spec).unwrap();
        for i in 0..441 {
            wr.write_sample(i as f32 / 441.0).unwrap();
        }
        wr.finalize().unwrap();
        let w = read_wav(&path).unwrap();
        assert_eq!(w.sample_rate_hz(), 44100);
        assert!((w.samples()[440] - 440.0 / 441.0).abs() < 1e-7);
    }

    #[test]
    fn read_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_wav(dir.path().join("nope.wav")), Err(AudioError::MissingFile(_))));

        let stereo = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut wr = hound::WavWriter::create(&stereo, spec).unwrap();
        for _ in 0..20 {
            wr.write_sample(0i16).unwrap();
        }
        wr.finalize().unwrap();
        assert!(matches!(read_wav(&stereo), Err(AudioError::NonMono { channels: 2 })));

        let pcm24 = dir.path().join("pcm24.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut wr = hound::WavWriter::create(&pcm24, spec).unwrap();
        wr.write_sample(5i32).unwrap();
        wr.finalize().unwrap();
        assert!(matches!(read_wav(&pcm24), Err(AudioError::UnsupportedCodec(_))));
    }

    #[test]
    fn resample_identity_and_length() {
        let w = sine(1000.0, 0.5, 16000, 1000);
        assert_eq!(resample(&w, 16000).unwrap(), w);
        let one_sec = sine(1000.0, 0.5, 44100, 44100);
        let down = resample(&one_sec, 16000).unwrap();
        assert_eq!(down.sample_rate_hz(), 16000);
        assert!((down.len() as i64 - 16000).abs() <= 1);
        assert!(matches!(resample(&w, 0), Err(AudioError::InvalidSampleRate)));
    }

    #[test]
    fn resample_keeps_2khz_tone() {
        use rustfft::{FftPlanner, num_complex::Complex};
        let amp = 0.5;
        let src = sine(2000.0, amp, 44100, 44100);
        let out = resample(&src, 16000).unwrap();
        // analyse the steady-state middle second-half with an integer number of periods
        let seg = &out.samples()[4000..12000];
        let n = seg.len();
        let mut buf: Vec<Complex<f64>> = seg.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (peak_bin, peak) = buf[..n / 2]
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        let peak_hz = peak_bin as f64 * 16000.0 / n as f64;
        assert!((peak_hz - 2000.0).abs() < 16000.0 / n as f64);
        let measured_amp = 2.0 * peak / n as f64;
        let err_db = 20.0 * (measured_amp / amp).log10();
        assert!(err_db.abs() < 0.5, "amplitude error {err_db} dB");
    }

    #[test]
    fn resample_rejects_aliasing_tone() {
        // 12 kHz is above the 8 kHz output Nyquist and must be suppressed
        let src = sine(12000.0, 0.5, 44100, 44100);
        let out = resample(&src, 16000).unwrap();
        let r = rms(&Waveform::new(out.samples()[100..15900].to_vec(), 16000).unwrap()).unwrap();
        assert!(r < 0.5 / 2f64.sqrt() * 0.01, "residual rms {r}");
    }
}
