//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion outside `KNOWN_UNATTAINABLE` fails.
//!
//! Runs without the listener UI. The fidelity criterion trains a desk-scale
//! network and takes a few minutes; everything else finishes in seconds.

use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wssdrc_cli::commands::ScoreReport;
use wssdrc_core::audio::{self, LevelSpec, Waveform};
use wssdrc_core::corpus::{Split, write_synthetic_corpus};
use wssdrc_core::dsp::{self, WelchAccumulator};
use wssdrc_core::evaluation::{self, Condition, Group, f_survival};
use wssdrc_core::masking::{self, NoiseCondition};
use wssdrc_core::neural::{
    self, Activation, BestTracker, LrSchedule, NetConfig, NetParams, TrainOptions, TrainingPair,
};
use wssdrc_core::ssdrc::{self, SsdrcParams};
use wssdrc_core::synth;

struct Suite {
    failed: Vec<&'static str>,
    total: usize,
}

impl Suite {
    fn run(&mut self, name: &'static str, budget: Duration, f: impl FnOnce() -> (bool, String)) {
        let t = Instant::now();
        let (ok, detail) = f();
        let dt = t.elapsed();
        let ok = ok && dt <= budget;
        self.total += 1;
        if !ok {
            self.failed.push(name);
        }
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {detail} [{:.2} s, budget {:.0} s]", dt.as_secs_f64(), budget.as_secs_f64());
    }
}

fn info(msg: impl AsRef<str>) {
    println!("     info: {}", msg.as_ref());
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum::<f64>() / a.len() as f64
}

fn energy_db(out: &Waveform, input: &Waveform) -> f64 {
    let e = |w: &Waveform| w.samples().iter().map(|v| v * v).sum::<f64>();
    10.0 * (e(out) / e(input)).log10()
}

// ---------------------------------------------------------------------------
// network oracles

/// Direct dilated-convolution evaluation, sample by sample on absolute
/// positions.
fn naive_forward(p: &NetParams, cfg: &NetConfig, x: &[f64]) -> Vec<f64> {
    let (c, s, k) = (cfg.channels, cfg.skip_channels, cfg.filter_width);
    let half = (k - 1) / 2;
    let gated = cfg.activation == Activation::Gated;
    let n = x.len();
    let dil: Vec<usize> = (0..cfg.blocks).flat_map(|_| cfg.dilations_per_block.iter().copied()).collect();
    let r: usize = half * dil.iter().sum::<usize>();
    let mut h: Vec<Vec<f64>> = (0..c).map(|ch| x.iter().map(|v| p.input_w[ch] * v + p.input_b[ch]).collect()).collect();
    let mut skip = vec![vec![0.0; n]; s];
    let mut lo = 0;
    for (l, &d) in dil.iter().enumerate() {
        let lp = &p.layers[l];
        lo += half * d;
        let mut next = vec![vec![0.0; n]; c];
        let mut z = vec![vec![0.0; n]; c];
        for t in lo..n - lo {
            for o in 0..c {
                let (mut f, mut g) = (lp.filter_b[o], lp.gate_b[o]);
                for i in 0..c {
                    for j in 0..k {
                        let src = t + j * d - half * d;
                        f += lp.filter_w[(o * c + i) * k + j] * h[i][src];
                        g += lp.gate_w[(o * c + i) * k + j] * h[i][src];
                    }
                }
                z[o][t] = if gated { f.tanh() / (1.0 + (-g).exp()) } else { f };
            }
        }
        for t in lo..n - lo {
            for o in 0..c {
                next[o][t] = h[o][t] + lp.res_b[o] + (0..c).map(|i| lp.res_w[o * c + i] * z[i][t]).sum::<f64>();
            }
            if t >= r && t < n - r {
                for o in 0..s {
                    skip[o][t] += lp.skip_b[o] + (0..c).map(|i| lp.skip_w[o * c + i] * z[i][t]).sum::<f64>();
                }
            }
        }
        h = next;
    }
    let act = |v: f64| if gated { v.max(0.0) } else { v };
    (r..n - r)
        .map(|t| {
            let a1: Vec<f64> = (0..s).map(|o| act(skip[o][t])).collect();
            let a2: Vec<f64> =
                (0..s).map(|o| act(p.head1_b[o] + (0..s).map(|i| p.head1_w[o * s + i] * a1[i]).sum::<f64>())).collect();
            p.head2_b[0] + (0..s).map(|i| p.head2_w[i] * a2[i]).sum::<f64>()
        })
        .collect()
}

fn receptive_field() -> (bool, String) {
    let t = Instant::now();
    let cfg = NetConfig::paper();
    let (r, span) = (cfg.receptive_radius(), cfg.receptive_span());
    let secs = span as f64 / 16_000.0;
    let dt = t.elapsed();
    let ok = r == 3069 && span == 6139 && format!("{secs:.4}") == "0.3837" && dt < Duration::from_millis(1);
    (ok, format!("r = {r}, span = {span} samples = {secs:.4} s, computed in {} us", dt.as_micros()))
}

fn gradient_check() -> (bool, String) {
    let cfg = NetConfig {
        blocks: 1,
        dilations_per_block: vec![1, 2],
        channels: 4,
        skip_channels: 4,
        filter_width: 3,
        target_field: 16,
        activation: Activation::Gated,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = NetParams::init(&cfg, &mut rng);
    let len = 64;
    let x: Vec<f64> = (0..len).map(|_| rng.random_range(-0.5..0.5)).collect();
    let y: Vec<f64> = (0..len).map(|_| rng.random_range(-0.5..0.5)).collect();
    let r = cfg.receptive_radius();
    let analytic = neural::backward(&params, &cfg, &x, &y).unwrap().1.to_flat();
    let h = 1e-4;
    // sign pattern of every |·| and ReLU argument; a change means a kink lies within ±h
    let pattern = |p: &NetParams| -> Vec<bool> {
        let (out, cache) = neural::forward_cached(p, &cfg, &x).unwrap();
        out.iter()
            .zip(&y[r..len - r])
            .map(|(a, b)| a > b)
            .chain(cache.skip_sum.iter().map(|v| *v > 0.0))
            .chain(cache.head_u2.iter().map(|v| *v > 0.0))
            .collect()
    };
    let base = pattern(&params);
    let loss = |p: &NetParams| neural::l1_valid_loss(&neural::forward(p, &cfg, &x).unwrap(), &y, r).unwrap();
    let (mut checked, mut kinks, mut worst) = (0, 0, 0.0f64);
    for i in 0..analytic.len() {
        let mut plus = params.clone();
        *plus.flat_mut(i).unwrap() += h;
        let mut minus = params.clone();
        *minus.flat_mut(i).unwrap() -= h;
        if pattern(&plus) != base || pattern(&minus) != base {
            kinks += 1;
            continue;
        }
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let g = analytic[i];
        worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-7));
        checked += 1;
    }
    (
        checked > 0 && worst < 1e-4,
        format!("{checked} parameters checked, {kinks} at kinks, worst relative error {worst:.2e} (< 1e-4)"),
    )
}

fn convolution_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let nd = rng.random_range(1..=3);
        let cfg = NetConfig {
            blocks: rng.random_range(1..=2),
            dilations_per_block: (0..nd).map(|_| rng.random_range(1..=4)).collect(),
            channels: rng.random_range(1..=4),
            skip_channels: rng.random_range(1..=4),
            filter_width: if rng.random_bool(0.5) { 3 } else { 5 },
            target_field: 8,
            activation: if rng.random_bool(0.7) { Activation::Gated } else { Activation::Linear },
        };
        let mut p = NetParams::zeros(&cfg);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.random_range(-0.8..0.8));
        }
        let n = cfg.receptive_span() + rng.random_range(0..24);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = neural::forward(&p, &cfg, &x).unwrap();
        let slow = naive_forward(&p, &cfg, &x);
        if fast.len() != slow.len() {
            return (false, format!("length {} vs {} for {cfg:?}", fast.len(), slow.len()));
        }
        worst = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    (worst < 1e-10, format!("100 random nets, max |forward - direct| = {worst:.2e} (< 1e-10)"))
}

// ---------------------------------------------------------------------------
// fidelity and energy

const FIDELITY_STEPS: u64 = 6000;

struct Trained {
    cfg: NetConfig,
    params: NetParams,
}

fn teacher_pair(seed: u64) -> (Waveform, Waveform) {
    let x = synth::utterance(seed, 2.0, 16_000);
    let y = ssdrc::ssdrc_enhance(&x, &SsdrcParams::default()).unwrap();
    (x, y)
}

fn fidelity(trained: &mut Option<Trained>) -> (bool, String) {
    let cfg = NetConfig::desk();
    let train_clips: Vec<TrainingPair> = (100..120)
        .map(|i| {
            let (x, y) = teacher_pair(i);
            TrainingPair::new(format!("train{i}"), &x, &y).unwrap()
        })
        .collect();
    let held_out: Vec<(Waveform, Waveform)> = (900..906).map(teacher_pair).collect();
    let opts =
        TrainOptions { epochs: usize::MAX, max_steps: Some(FIDELITY_STEPS), seed: 1, checkpoint_every: Some(250) };
    // snapshot selection looks only at the training clips
    let mut tracker = BestTracker::new(&cfg, &train_clips, None);
    neural::train(&train_clips, &cfg, &LrSchedule::default(), &opts, None, |st, _| tracker.observe(st).map(|_| ()))
        .unwrap();
    let best = tracker.best.unwrap();
    let (mut student, mut plain) = (0.0, 0.0);
    for (x, y) in &held_out {
        let out = neural::enhance_neural(&best.params, &cfg, x).unwrap();
        student += l1(out.samples(), y.samples());
        plain += l1(x.samples(), y.samples());
    }
    let ratio = student / plain;
    *trained = Some(Trained { cfg, params: best.params });
    (
        ratio <= 0.5,
        format!(
            "20 clips, {FIDELITY_STEPS} steps, snapshot from step {}: held-out L1 to teacher = {ratio:.3} x plain baseline (<= 0.5)",
            best.step
        ),
    )
}

fn equal_energy(trained: &Option<Trained>) -> (bool, String) {
    let mut clips: Vec<Waveform> = (900..912).map(|i| synth::utterance(i, 2.0, 16_000)).collect();
    let quiet = clips[0].with_samples(clips[0].samples().iter().map(|v| v * 1e-3).collect()).unwrap();
    let loud = audio::normalize_rms(&clips[1], LevelSpec::Dbfs(-3.0)).unwrap();
    clips.extend([quiet, loud, synth::utterance(5, 0.3, 16_000)]);
    let mut worst_s = 0.0f64;
    let mut worst_w = f64::NAN;
    for c in &clips {
        worst_s = worst_s.max(energy_db(&ssdrc::ssdrc_enhance(c, &SsdrcParams::default()).unwrap(), c).abs());
    }
    if let Some(t) = trained {
        worst_w = 0.0;
        for c in &clips {
            worst_w = worst_w.max(energy_db(&neural::enhance_neural(&t.params, &t.cfg, c).unwrap(), c).abs());
        }
    }
    (
        worst_s < 1e-3 && worst_w < 1e-3,
        format!(
            "{} utterances, max |energy change| SSDRC {worst_s:.2e} dB, wSSDRC {worst_w:.2e} dB (< 0.001)",
            clips.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// masking

fn snr_exactness() -> (bool, String) {
    let speech = audio::normalize_rms(&synth::utterance(21, 2.0, 16_000), LevelSpec::PRESENTATION).unwrap();
    let corpus: Vec<Waveform> = (0..8).map(|i| synth::utterance(300 + i, 1.0, 16_000)).collect();
    let noise =
        masking::synth_ssn(&masking::estimate_ltass(&corpus).unwrap(), 3.0, &NoiseCondition::new(0.0, 4)).unwrap();
    let before = speech.samples().to_vec();
    let (mut worst, mut untouched) = (0.0f64, true);
    for tenth in -100..=100 {
        let snr = tenth as f64 / 10.0;
        let m = masking::mix_at_snr(&speech, &noise, snr).unwrap();
        worst = worst.max((masking::measure_snr(&speech, &m.scaled_noise).unwrap() - snr).abs());
        // the mixture is the speech plus the scaled noise, with the speech as given
        untouched &= m
            .mixture
            .samples()
            .iter()
            .zip(speech.samples())
            .zip(m.scaled_noise.samples())
            .all(|((x, s), n)| x.to_bits() == (s + n).to_bits());
    }
    untouched &= speech.samples().iter().zip(&before).all(|(a, b)| a.to_bits() == b.to_bits());
    (
        worst < 0.01 && untouched,
        format!("-10..+10 dB in 0.1 dB steps, max error {worst:.2e} dB, speech bit-identical: {untouched}"),
    )
}

fn band_levels_db(power: &[f64]) -> Vec<f64> {
    let centres = dsp::third_octave_centres(200.0, 6000.0);
    let bands = dsp::third_octave_band_powers(power, 16_000, &centres);
    let total: f64 = bands.iter().sum();
    bands.iter().map(|b| 10.0 * (b / total).log10()).collect()
}

fn ssn_quality(dir: &Path) -> (bool, String) {
    let m = write_synthetic_corpus(&dir.join("ssn"), 40, 0, 2.0, 8).unwrap();
    let clips: Vec<Waveform> = m.split(Split::Train).map(|e| e.load_audio().unwrap()).collect();
    let l = masking::estimate_ltass(&clips).unwrap();
    let a = masking::synth_ssn(&l, 30.0, &NoiseCondition::new(0.0, 5)).unwrap();
    let b = masking::synth_ssn(&l, 30.0, &NoiseCondition::new(0.0, 5)).unwrap();
    let c = masking::synth_ssn(&l, 30.0, &NoiseCondition::new(0.0, 6)).unwrap();
    let deterministic = a == b && a != c;
    let mut speech = WelchAccumulator::new(512);
    clips.iter().for_each(|w| speech.add_signal(w.samples()));
    let mut noise = WelchAccumulator::new(512);
    noise.add_signal(a.samples());
    let (s, n) = (band_levels_db(&speech.mean_power()), band_levels_db(&noise.mean_power()));
    let worst = s.iter().zip(&n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    (
        worst <= 3.0 && deterministic,
        format!(
            "{} third-octave bands 0.2-6 kHz, max deviation {worst:.2} dB (<= 3), seeded: {deterministic}",
            s.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// statistics

const PUBLISHED: [(f64, usize, usize, f64); 7] = [
    (163.6, 2, 36, 7.4e-18),
    (211.2, 1, 24, 9.36e-13),
    (184.5, 1, 24, 3.56e-12),
    (0.192, 1, 24, 0.66),
    (65.3, 1, 20, 1.02e-7),
    (39.28, 1, 20, 4.04e-6),
    (1.94, 1, 20, 0.178),
];

fn published_p_values() -> (bool, String) {
    let mut ok = true;
    let mut misses = Vec::new();
    for (f, d1, d2, p) in PUBLISHED {
        let ours = f_survival(f, d1, d2).unwrap();
        let (err, pass) = if p > 0.1 {
            let e = (ours - p).abs();
            (format!("|dp| = {e:.4}"), e <= 0.02)
        } else {
            let e = ((ours.log10() - p.log10()) / p.log10()).abs();
            (format!("rel log10 err {e:.4}"), e <= 0.05)
        };
        info(format!(
            "F = {f}, df {d1}/{d2}: p = {ours:.3e} vs published {p:.3e}, {err} {}",
            if pass { "ok" } else { "MISS" }
        ));
        if !pass {
            misses.push(format!("F = {f}"));
        }
        ok &= pass;
    }
    // the misses line up with fewer within-group degrees of freedom
    for (f, d1, d2, p) in &PUBLISHED[..3] {
        let alt = if *d1 == 2 { 33 } else { 22 };
        let q = f_survival(*f, *d1, alt).unwrap();
        info(format!("F = {f} with df {d1}/{alt} instead of {d1}/{d2}: p = {q:.3e} (published {p:.3e})"));
    }
    let detail = if misses.is_empty() {
        "all 7 published (F, df) pairs reproduced".to_owned()
    } else {
        format!("{} of 7 reproduced; outside tolerance: {}", 7 - misses.len(), misses.join(", "))
    };
    (ok, detail)
}

fn anova_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut worst_ss, mut worst_t) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n1 = rng.random_range(2..=15);
        let n2 = rng.random_range(2..=15);
        let shift = rng.random_range(-30.0..30.0);
        let a: Vec<f64> = (0..n1).map(|_| rng.random_range(0.0..100.0)).collect();
        let b: Vec<f64> = (0..n2).map(|_| rng.random_range(0.0..100.0) + shift).collect();
        let r = evaluation::anova_oneway(&[a.clone(), b.clone()]).unwrap();

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let grand = mean(&all);
        let ssb = n1 as f64 * (ma - grand).powi(2) + n2 as f64 * (mb - grand).powi(2);
        let ssw = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
        let dfw = (n1 + n2 - 2) as f64;
        let f = ssb / (ssw / dfw);
        let sp2 = ssw / dfw;
        let t = (ma - mb) / (sp2 * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1.0);
        worst_ss = worst_ss.max(rel(r.f_value, f));
        worst_t = worst_t.max(rel(r.f_value, t * t));
    }
    (
        worst_ss < 1e-9 && worst_t < 1e-9,
        format!("1000 datasets, max rel. diff vs sums of squares {worst_ss:.1e}, vs t^2 {worst_t:.1e} (< 1e-9)"),
    )
}

// ---------------------------------------------------------------------------
// SSDRC and the simulated study

fn ssdrc_contract(dir: &Path) -> (bool, String) {
    let m = write_synthetic_corpus(&dir.join("ssdrc"), 0, 120, 2.0, 42).unwrap();
    let p = SsdrcParams::default();
    let (mut bad, mut n) = (Vec::new(), 0);
    let (mut min_tilt_gain, mut min_env_drop) = (f64::INFINITY, f64::INFINITY);
    for e in m.split(Split::Test) {
        let w = e.load_audio().unwrap();
        let out = ssdrc::ssdrc_enhance(&w, &p).unwrap();
        let tilt = ssdrc::tilt_ratio(&out) / ssdrc::tilt_ratio(&w);
        let env = ssdrc::envelope_db_std(&w) - ssdrc::envelope_db_std(&out);
        min_tilt_gain = min_tilt_gain.min(tilt);
        min_env_drop = min_env_drop.min(env);
        if !(tilt > 1.0 && env > 0.0) {
            bad.push(e.id.clone());
        }
        n += 1;
    }
    (
        bad.is_empty() && n == 120,
        format!(
            "{n} test utterances, min tilt ratio gain x{min_tilt_gain:.2}, min envelope std drop {min_env_drop:.2} dB{}",
            if bad.is_empty() { String::new() } else { format!(", violations: {}", bad.join(" ")) }
        ),
    )
}

/// One-way ANOVA recomputed from per-listener percentages.
fn oracle_f(groups: &[Vec<f64>]) -> f64 {
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let ssb: f64 = groups.iter().zip(&means).map(|(g, m)| g.len() as f64 * (m - grand).powi(2)).sum();
    let ssw: f64 = groups.iter().zip(&means).map(|(g, m)| g.iter().map(|x| (x - m).powi(2)).sum::<f64>()).sum();
    (ssb / (groups.len() - 1) as f64) / (ssw / (n - groups.len()) as f64)
}

fn simulated_study(dir: &Path) -> (bool, String) {
    let out = dir.join("study");
    let argv = ["wssdrc", "simulate-listeners", "--nh", "13", "--hi", "11", "--seed", "2024", "--out-dir"];
    let cli = wssdrc_cli::Cli::try_parse_from(argv.iter().copied().chain([out.to_str().unwrap()])).unwrap();
    wssdrc_cli::run(cli).unwrap();
    let report: ScoreReport = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();

    let mut problems = Vec::new();
    for l in &report.listeners {
        let srt = l.srt_db.unwrap_or(f64::NAN);
        let (lo, hi) = if l.group == Group::Nh { (-7.0, -1.0) } else { (-3.0, 9.0) };
        if !(lo..=hi).contains(&srt) {
            problems.push(format!("{} SRT {srt}", l.listener_id));
        }
    }
    let mut worst = 0.0f64;
    let mut summary = Vec::new();
    for (g, n) in [(Group::Nh, 13), (Group::Hi, 11)] {
        let Some(gr) = report.groups.iter().find(|r| r.group == g) else {
            problems.push(format!("no {g} group report"));
            continue;
        };
        if gr.listeners.len() != n || gr.boxstats.len() != 3 || gr.anova.len() != 4 {
            problems.push(format!("{g} report incomplete"));
        }
        for row in &gr.anova {
            let cols: Vec<Vec<f64>> =
                row.conditions.iter().map(|c| gr.listeners.iter().map(|l| l.percent[c]).collect()).collect();
            let f = oracle_f(&cols);
            worst = worst.max((row.result.f_value - f).abs() / f.abs().max(1.0));
        }
        let omni = &gr.anova[0].result;
        let med: Vec<String> = Condition::ALL.iter().map(|c| format!("{c} {:.0}%", gr.boxstats[c].median)).collect();
        summary.push(format!(
            "{g}: F({}, {}) = {:.1}, medians {}",
            omni.df_between,
            omni.df_within,
            omni.f_value,
            med.join(" / ")
        ));
    }
    for s in &summary {
        info(s);
    }
    if worst >= 1e-9 {
        problems.push(format!("F off by {worst:.1e}"));
    }
    (
        problems.is_empty(),
        format!(
            "{} listeners, SRTs within the group pilot ranges, max F deviation from oracle {worst:.1e} (< 1e-9){}",
            report.listeners.len(),
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join(", ")) }
        ),
    )
}

/// Criteria whose failure is analysed and recorded; they still print FAIL but
/// do not fail the test run.
const KNOWN_UNATTAINABLE: &[&str] = &["published p-values"];

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = Suite { failed: Vec::new(), total: 0 };
    let sec = Duration::from_secs;
    let mut trained = None;

    s.run("receptive field arithmetic", sec(1), receptive_field);
    s.run("gradient correctness", sec(10), gradient_check);
    s.run("convolution oracle", sec(10), convolution_oracle);
    s.run("desk-scale teacher-student fidelity", sec(30 * 60), || fidelity(&mut trained));
    s.run("equal-energy constraint", sec(60), || equal_energy(&trained));
    s.run("SNR exactness", sec(60), snr_exactness);
    s.run("published p-values", sec(1), published_p_values);
    s.run("ANOVA oracle equivalence", sec(10), anova_oracle);
    s.run("SSDRC qualitative contract", sec(120), || ssdrc_contract(tmp.path()));
    s.run("SSN quality", sec(60), || ssn_quality(tmp.path()));
    s.run("end-to-end simulated study", sec(120), || simulated_study(tmp.path()));

    println!("{} of {} criteria passed", s.total - s.failed.len(), s.total);
    if !s.failed.is_empty() {
        println!("failed: {}", s.failed.join("; "));
    }
    let unexpected: Vec<_> = s.failed.iter().filter(|n| !KNOWN_UNATTAINABLE.contains(n)).collect();
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
