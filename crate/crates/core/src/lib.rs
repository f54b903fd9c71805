//! Waveform-domain speech intelligibility enhancement and its evaluation bench.
//!
//! * [`audio`]: WAV I/O, resampling and level arithmetic.
//! * [`ssdrc`]: the spectral shaping + dynamic range compression teacher.
//! * [`neural`]: the non-causal dilated-convolution student, trained to mimic the teacher.
//! * [`masking`]: speech-shaped noise synthesis and exact-SNR mixing.
//! * [`evaluation`]: keyword scoring, SRT fitting, box statistics and one-way ANOVA.
//! * [`bench`]: listening-test sessions with an append-only event log.
//! * [`simulate`]: logistic synthetic listeners driving full sessions.

pub mod audio;
pub mod bench;
pub mod corpus;
pub mod dsp;
pub mod evaluation;
pub mod fsutil;
pub mod masking;
pub mod neural;
pub mod simulate;
pub mod ssdrc;
pub mod synth;
