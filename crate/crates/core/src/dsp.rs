//! Spectral helpers: windows, real FFTs, Welch averaging and band energies.

use rustfft::FftPlanner;
use rustfft::num_complex::Complex;

/// Periodic Hann window (sums to a constant under 50% and 75% overlap).
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

/// Forward FFT of a real frame, returning all `n` complex bins.
pub fn fft_real(planner: &mut FftPlanner<f64>, frame: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = frame.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Inverse FFT (normalised by `1/n`) keeping the real part.
pub fn ifft_real(planner: &mut FftPlanner<f64>, spectrum: &mut [Complex<f64>]) -> Vec<f64> {
    let n = spectrum.len();
    planner.plan_fft_inverse(n).process(spectrum);
    spectrum.iter().map(|c| c.re / n as f64).collect()
}

/// Welch power spectral estimate accumulator (Hann window, 50% overlap).
///
/// Frames from several signals may be pooled; [`WelchAccumulator::mean_power`]
/// returns the frame-averaged power per bin `0..=fft_size/2`.
pub struct WelchAccumulator {
    fft_size: usize,
    window: Vec<f64>,
    power: Vec<f64>,
    frames: usize,
    planner: FftPlanner<f64>,
}

impl WelchAccumulator {
    pub fn new(fft_size: usize) -> Self {
        Self {
            fft_size,
            window: hann_periodic(fft_size),
            power: vec![0.0; fft_size / 2 + 1],
            frames: 0,
            planner: FftPlanner::new(),
        }
    }

    /// Adds all full frames of `x`. A signal shorter than one frame contributes
    /// a single zero-padded frame.
    pub fn add_signal(&mut self, x: &[f64]) {
        let n = self.fft_size;
        let hop = n / 2;
        if x.len() < n {
            let mut frame = vec![0.0; n];
            frame[..x.len()].copy_from_slice(x);
            self.add_frame(&frame);
            return;
        }
        let mut start = 0;
        while start + n <= x.len() {
            let frame = x[start..start + n].to_vec();
            self.add_frame(&frame);
            start += hop;
        }
    }

    fn add_frame(&mut self, frame: &[f64]) {
        let windowed: Vec<f64> = frame.iter().zip(&self.window).map(|(a, w)| a * w).collect();
        let spec = fft_real(&mut self.planner, &windowed);
        for (p, c) in self.power.iter_mut().zip(&spec) {
            *p += c.norm_sqr();
        }
        self.frames += 1;
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn mean_power(&self) -> Vec<f64> {
        let k = self.frames.max(1) as f64;
        self.power.iter().map(|p| p / k).collect()
    }
}

/// Energy of `x` between `lo_hz` (inclusive) and `hi_hz` (exclusive), from a
/// single full-length FFT.
pub fn band_energy(x: &[f64], sample_rate_hz: u32, lo_hz: f64, hi_hz: f64) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let spec = fft_real(&mut FftPlanner::new(), x);
    let bin_hz = sample_rate_hz as f64 / n as f64;
    spec[..=n / 2]
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * bin_hz;
            f >= lo_hz && f < hi_hz
        })
        .map(|(_, c)| c.norm_sqr())
        .sum()
}

/// Centre frequencies of the 1/3-octave bands (base-10 series, 1 kHz reference)
/// whose centres fall within `[lo_hz, hi_hz]`.
pub fn third_octave_centres(lo_hz: f64, hi_hz: f64) -> Vec<f64> {
    (-30..=20)
        .map(|i| 1000.0 * 10f64.powf(i as f64 / 10.0))
        // 1% slack so nominal centres such as 200 Hz (199.5 exact) are included
        .filter(|&f| f >= lo_hz * 0.99 && f <= hi_hz * 1.01)
        .collect()
}

/// Sums a one-sided power spectrum (`fft_size/2 + 1` bins) over each 1/3-octave band.
pub fn third_octave_band_powers(power: &[f64], sample_rate_hz: u32, centres: &[f64]) -> Vec<f64> {
    let fft_size = (power.len() - 1) * 2;
    let bin_hz = sample_rate_hz as f64 / fft_size as f64;
    let edge = 10f64.powf(1.0 / 20.0);
    centres
        .iter()
        .map(|&fc| {
            let (lo, hi) = (fc / edge, fc * edge);
            power
                .iter()
                .enumerate()
                .filter(|(k, _)| {
                    let f = *k as f64 * bin_hz;
                    f >= lo && f < hi
                })
                .map(|(_, p)| *p)
                .sum()
        })
        .collect()
}
