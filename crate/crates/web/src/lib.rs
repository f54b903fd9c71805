//! Browser demo bindings: SSDRC on a clip with before/after spectra, the
//! psychometric fit, and one-way ANOVA.
//!
//! Each operation is a plain Rust function returning `Result<_, String>` so
//! it can be tested natively; the `#[wasm_bindgen]` wrappers only convert
//! errors and JSON.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use wssdrc_core::audio::{self, Waveform};
use wssdrc_core::dsp::{self, WelchAccumulator};
use wssdrc_core::evaluation::{self, AnovaResult, logistic};
use wssdrc_core::ssdrc::{self, SAMPLE_RATE_HZ, SsdrcParams};
use wssdrc_core::synth;

const FFT_SIZE: usize = 512;

#[derive(Debug, Serialize)]
pub struct Spectrum {
    pub freq_hz: Vec<f64>,
    pub level_db: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Enhanced {
    pub samples: Vec<f64>,
    pub input_spectrum: Spectrum,
    pub output_spectrum: Spectrum,
    pub third_octave_hz: Vec<f64>,
    pub input_bands_db: Vec<f64>,
    pub output_bands_db: Vec<f64>,
    pub tilt_gain: f64,
    pub envelope_std_in_db: f64,
    pub envelope_std_out_db: f64,
    pub energy_change_db: f64,
}

fn db(p: f64) -> f64 {
    10.0 * p.max(1e-20).log10()
}

pub fn spectrum(w: &Waveform) -> Spectrum {
    let mut acc = WelchAccumulator::new(FFT_SIZE);
    acc.add_signal(w.samples());
    let power = acc.mean_power();
    let bin = w.sample_rate_hz() as f64 / FFT_SIZE as f64;
    Spectrum {
        freq_hz: (0..power.len()).map(|k| k as f64 * bin).collect(),
        level_db: power.iter().map(|&p| db(p)).collect(),
    }
}

fn bands(w: &Waveform, centres: &[f64]) -> Vec<f64> {
    let mut acc = WelchAccumulator::new(FFT_SIZE);
    acc.add_signal(w.samples());
    dsp::third_octave_band_powers(&acc.mean_power(), w.sample_rate_hz(), centres).into_iter().map(db).collect()
}

/// Brings any rate to 16 kHz, the rate SSDRC is defined at.
pub fn to_16k(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Waveform, String> {
    let w = Waveform::new(samples, sample_rate_hz).map_err(|e| e.to_string())?;
    if sample_rate_hz == SAMPLE_RATE_HZ {
        Ok(w)
    } else {
        audio::resample(&w, SAMPLE_RATE_HZ).map_err(|e| e.to_string())
    }
}

pub fn enhance(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Enhanced, String> {
    let input = to_16k(samples, sample_rate_hz)?;
    let out = ssdrc::ssdrc_enhance(&input, &SsdrcParams::default()).map_err(|e| e.to_string())?;
    let centres = dsp::third_octave_centres(100.0, 8000.0 / 1.13);
    Ok(Enhanced {
        input_spectrum: spectrum(&input),
        output_spectrum: spectrum(&out),
        input_bands_db: bands(&input, &centres),
        output_bands_db: bands(&out, &centres),
        third_octave_hz: centres,
        tilt_gain: ssdrc::tilt_ratio(&out) / ssdrc::tilt_ratio(&input),
        envelope_std_in_db: ssdrc::envelope_db_std(&input),
        envelope_std_out_db: ssdrc::envelope_db_std(&out),
        energy_change_db: audio::energy_ratio_db(&out, &input),
        samples: out.into_samples(),
    })
}

#[derive(Debug, Deserialize)]
pub struct FitRequest {
    /// `(snr_db, proportion_correct)` pairs.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize)]
pub struct FitResponse {
    pub srt_db: f64,
    pub midpoint_db: f64,
    pub slope: f64,
    pub curve: Vec<(f64, f64)>,
}

pub fn fit(req: &FitRequest) -> Result<FitResponse, String> {
    let f = evaluation::fit_psychometric(&req.points).map_err(|e| e.to_string())?;
    let lo = req.points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - 3.0;
    let hi = req.points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + 3.0;
    let curve = (0..=100)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / 100.0;
            (x, logistic(x, f.midpoint_db, f.slope))
        })
        .collect();
    Ok(FitResponse { srt_db: f.srt_db, midpoint_db: f.midpoint_db, slope: f.slope, curve })
}

pub fn anova(groups: &[Vec<f64>]) -> Result<AnovaResult, String> {
    evaluation::anova_oneway(groups).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// JS bindings

fn js<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

/// Decodes a WAV file to mono f64 samples at 16 kHz.
#[wasm_bindgen(js_name = decodeWav)]
pub fn decode_wav_js(bytes: &[u8]) -> Result<Vec<f64>, JsError> {
    let w = audio::decode_wav(bytes).map_err(|e| JsError::new(&e.to_string()))?;
    let rate = w.sample_rate_hz();
    Ok(to_16k(w.into_samples(), rate).map_err(|e| JsError::new(&e))?.into_samples())
}

/// Synthetic vowel-like utterance, for trying the demo without a file.
#[wasm_bindgen(js_name = synthUtterance)]
pub fn synth_utterance_js(seed: u32, duration_s: f64) -> Vec<f64> {
    synth::utterance(seed as u64, duration_s, SAMPLE_RATE_HZ).into_samples()
}

/// Runs SSDRC and returns a JSON [`Enhanced`].
#[wasm_bindgen(js_name = enhanceSsdrc)]
pub fn enhance_js(samples: Vec<f64>, sample_rate_hz: u32) -> Result<String, JsError> {
    js(&enhance(samples, sample_rate_hz).map_err(|e| JsError::new(&e))?)
}

/// `{"points": [[snr, p], ...]}` in, JSON [`FitResponse`] out.
#[wasm_bindgen(js_name = fitPsychometric)]
pub fn fit_js(request_json: &str) -> Result<String, JsError> {
    let req: FitRequest = serde_json::from_str(request_json).map_err(|e| JsError::new(&e.to_string()))?;
    js(&fit(&req).map_err(|e| JsError::new(&e))?)
}

/// `[[...], [...], ...]` in, JSON ANOVA table out.
#[wasm_bindgen(js_name = anovaOneway)]
pub fn anova_js(groups_json: &str) -> Result<String, JsError> {
    let groups: Vec<Vec<f64>> = serde_json::from_str(groups_json).map_err(|e| JsError::new(&e.to_string()))?;
    js(&anova(&groups).map_err(|e| JsError::new(&e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enhance_boosts_tilt_and_keeps_energy() {
        let x = synth::utterance(3, 1.0, SAMPLE_RATE_HZ).into_samples();
        let r = enhance(x.clone(), SAMPLE_RATE_HZ).unwrap();
        assert_eq!(r.samples.len(), x.len());
        assert!(r.tilt_gain > 1.0);
        assert!(r.envelope_std_out_db < r.envelope_std_in_db);
        assert!(r.energy_change_db.abs() < 1e-9);
        assert_eq!(r.input_spectrum.freq_hz.len(), FFT_SIZE / 2 + 1);
        assert_eq!(r.third_octave_hz.len(), r.output_bands_db.len());
        assert!(serde_json::to_string(&r).is_ok());
    }

    #[test]
    fn other_rates_are_resampled() {
        let x = synth::utterance(4, 0.5, 32_000).into_samples();
        let n = x.len() as i64;
        let r = enhance(x, 32_000).unwrap();
        assert!((r.samples.len() as i64 - n / 2).abs() <= 1);
    }

    #[test]
    fn fit_recovers_a_logistic() {
        let pts: Vec<(f64, f64)> = [-9.0, -6.0, -3.0, 0.0, 3.0].iter().map(|&x| (x, logistic(x, -4.0, 0.8))).collect();
        let r = fit(&FitRequest { points: pts }).unwrap();
        assert!((r.midpoint_db + 4.0).abs() < 1e-4);
        assert!((r.slope - 0.8).abs() < 1e-4);
        assert_eq!(r.srt_db, -3.0);
        assert_eq!(r.curve.len(), 101);
    }

    #[test]
    fn fit_reports_bad_input() {
        assert!(fit(&FitRequest { points: vec![(0.0, 0.9), (3.0, 1.0), (6.0, 1.0)] }).is_err());
    }

    #[test]
    fn anova_matches_hand_computation() {
        // grand mean 5.2: between 76.8 on 1 df, within 4 on 3 df
        let r = anova(&[vec![1.0, 2.0, 3.0], vec![9.0, 11.0]]).unwrap();
        assert!((r.f_value - 57.6).abs() < 1e-12);
        assert_eq!((r.df_between, r.df_within), (1, 3));
        assert!(anova(&[vec![1.0]]).is_err());
    }
}
