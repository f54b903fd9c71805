//! Synthetic speech-like material for fixtures, demos and the end-to-end suite.
//!
//! Utterances are built from voiced syllables (a glottal pulse train through a
//! cascade of formant resonators) and unvoiced fricatives, separated by short
//! pauses over a faint noise floor. They have the properties the rest of the
//! pipeline cares about: a falling long-term spectrum, strong syllabic level
//! modulation and a clear voiced/unvoiced structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::Waveform;

/// A few vowel formant triples (F1, F2, F3 in Hz).
const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [530.0, 1840.0, 2480.0],
    [270.0, 2290.0, 3010.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
];

/// Content words used as keywords.
const CONTENT_WORDS: [&str; 40] = [
    "καυτός",
    "ατμός",
    "ξέφυγε",
    "σπασμένη",
    "βαλβίδα",
    "ξύλο",
    "άριστο",
    "υλικό",
    "παιχνίδια",
    "κύβους",
    "γάτα",
    "πήδηξε",
    "φράχτη",
    "βράδυ",
    "κόκκινο",
    "μήλο",
    "έπεσε",
    "δέντρο",
    "παιδί",
    "διάβασε",
    "βιβλίο",
    "θάλασσα",
    "κύμα",
    "βάρκα",
    "ψαράς",
    "έπιασε",
    "ψάρι",
    "ήλιος",
    "έλαμψε",
    "βουνό",
    "χιόνι",
    "έλιωσε",
    "δρόμο",
    "αυτοκίνητο",
    "σταμάτησε",
    "πόρτα",
    "άνοιξε",
    "αέρας",
    "φύσηξε",
    "παράθυρο",
];

const FUNCTION_WORDS: [&str; 8] = ["το", "τη", "και", "από", "στο", "για", "με", "ένα"];

struct Resonator {
    b0: f64,
    a1: f64,
    a2: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64, sr: f64) -> Self {
        let r = (-std::f64::consts::PI * bandwidth / sr).exp();
        let theta = 2.0 * std::f64::consts::PI * freq / sr;
        Self { b0: 1.0 - r, a1: 2.0 * r * theta.cos(), a2: -r * r, y1: 0.0, y2: 0.0 }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn voiced(formants: &[f64], f0: impl Fn(f64) -> f64, n: usize, sr: f64) -> Vec<f64> {
    let mut res: Vec<Resonator> =
        formants.iter().enumerate().map(|(i, &f)| Resonator::new(f, 60.0 + 30.0 * i as f64, sr)).collect();
    // two one-pole lowpasses give the glottal source its spectral roll-off
    let (mut lp1, mut lp2) = (0.0, 0.0);
    let mut phase = 0.0;
    let mut prev = 0.0;
    (0..n)
        .map(|i| {
            phase += f0(i as f64 / sr) / sr;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            lp1 = 0.9 * lp1 + 0.1 * pulse;
            lp2 = 0.9 * lp2 + 0.1 * lp1;
            let mut v = lp2;
            for r in res.iter_mut() {
                v = r.tick(v) * 4.0;
            }
            // lip radiation
            let out = v - prev;
            prev = v;
            out
        })
        .collect()
}

fn normalise_peak(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

/// A steady vowel with the given formants, 16 kHz-style sample rate `sr`.
pub fn vowel(formants: &[f64], f0_hz: f64, duration_s: f64, sr: u32) -> Waveform {
    let n = (duration_s * sr as f64) as usize;
    let mut x = voiced(formants, |_| f0_hz, n, sr as f64);
    normalise_peak(&mut x, 0.5);
    Waveform::new(x, sr).expect("finite synthesis")
}

fn raised_cosine_envelope(n: usize, ramp: usize) -> impl Fn(usize) -> f64 {
    let ramp = ramp.min(n / 2).max(1);
    move |i| {
        let edge = i.min(n.saturating_sub(1 + i));
        if edge >= ramp { 1.0 } else { 0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / ramp as f64).cos() }
    }
}

/// A speech-like utterance of roughly `duration_s` seconds.
pub fn utterance(seed: u64, duration_s: f64, sr: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let srf = sr as f64;
    let total = (duration_s * srf) as usize;
    let mut x = Vec::with_capacity(total + sr as usize);
    let speaker_f0: f64 = rng.random_range(95.0..210.0);

    // leading silence
    x.extend(std::iter::repeat_n(0.0, (0.05 * srf) as usize));
    while x.len() < total {
        // optional fricative onset
        if rng.random_bool(0.5) {
            let n = (rng.random_range(0.04..0.11) * srf) as usize;
            let centre = rng.random_range(3000.0..6000.0);
            let mut res = Resonator::new(centre, 1800.0, srf);
            let level = rng.random_range(0.02..0.06);
            let env = raised_cosine_envelope(n, n / 4);
            let noise: Vec<f64> = (0..n)
                .map(|i| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    res.tick(v) * level * env(i) * 6.0
                })
                .collect();
            x.extend(noise);
        }
        let n = (rng.random_range(0.10..0.24) * srf) as usize;
        let formants = VOWELS[rng.random_range(0..VOWELS.len())];
        let start_f0 = speaker_f0 * rng.random_range(0.9..1.15);
        let glide = rng.random_range(-0.15..0.1);
        let dur = n as f64 / srf;
        let mut v = voiced(&formants, |t| start_f0 * (1.0 + glide * t / dur), n, srf);
        normalise_peak(&mut v, 1.0);
        let level = rng.random_range(0.15..0.5);
        let env = raised_cosine_envelope(n, n / 3);
        x.extend(v.iter().enumerate().map(|(i, s)| s * level * env(i)));
        // word gap
        if rng.random_bool(0.6) {
            let gap = (rng.random_range(0.03..0.12) * srf) as usize;
            x.extend(std::iter::repeat_n(0.0, gap));
        }
    }
    x.extend(std::iter::repeat_n(0.0, (0.05 * srf) as usize));
    // faint noise floor, about -70 dBFS
    for v in x.iter_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += 3e-4 * e;
    }
    Waveform::new(x, sr).expect("finite synthesis")
}

/// A sentence of 5 keywords plus up to two function words, with its keywords.
pub fn sentence(seed: u64) -> (String, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_5e47);
    let mut keywords = Vec::with_capacity(5);
    while keywords.len() < 5 {
        let w = CONTENT_WORDS[rng.random_range(0..CONTENT_WORDS.len())];
        if !keywords.contains(&w) {
            keywords.push(w);
        }
    }
    let extra = rng.random_range(0..=2);
    let mut words: Vec<&str> = keywords.clone();
    for _ in 0..extra {
        let pos = rng.random_range(0..=words.len());
        words.insert(pos, FUNCTION_WORDS[rng.random_range(0..FUNCTION_WORDS.len())]);
    }
    let mut text = words.join(" ");
    text.push('.');
    (text, keywords.into_iter().map(String::from).collect())
}
