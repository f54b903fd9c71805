//! Synthetic listeners with logistic intelligibility curves, run through full
//! bench sessions so the scoring and statistics path can be tested end to end.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bench::{Bench, Next, Result, TestItem, TranscriptOnly};
use crate::evaluation::{Condition, Group, GroupReport, logistic};
use crate::synth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListenerModel {
    pub listener_id: String,
    pub group: Group,
    /// SNR of 50% keyword recall for plain speech.
    pub threshold_db: f64,
    pub slope_per_db: f64,
    /// Effective SNR benefit of each condition.
    pub benefit_db: BTreeMap<Condition, f64>,
}

impl ListenerModel {
    pub fn p_correct(&self, condition: Condition, snr_db: f64) -> f64 {
        let b = self.benefit_db.get(&condition).copied().unwrap_or(0.0);
        logistic(snr_db + b, self.threshold_db, self.slope_per_db)
    }
}

/// Draws `n` listeners for a group. NH thresholds fall inside the NH pilot
/// range and HI thresholds inside the HI range.
pub fn cohort(group: Group, n: usize, seed: u64) -> Vec<ListenerModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (thr, slope, benefit) = match group {
        Group::Nh => ((-5.5, -2.5), (0.6, 1.2), (8.0, 7.5)),
        Group::Hi => ((0.0, 6.0), (0.35, 0.7), (6.5, 5.5)),
    };
    (0..n)
        .map(|i| {
            let spread = Normal::new(0.0, 1.5).expect("valid sd");
            let mut benefit_db = BTreeMap::new();
            benefit_db.insert(Condition::Plain, 0.0);
            benefit_db.insert(Condition::Ssdrc, benefit.0 + spread.sample(&mut rng));
            benefit_db.insert(Condition::Wssdrc, benefit.1 + spread.sample(&mut rng));
            ListenerModel {
                listener_id: format!("{}{:02}", group.as_str().to_lowercase(), i + 1),
                group,
                threshold_db: rng.random_range(thr.0..thr.1),
                slope_per_db: rng.random_range(slope.0..slope.1),
                benefit_db,
            }
        })
        .collect()
}

/// Transcript naming `hits` of the keywords; some are typed without accents
/// or in capitals, the way listeners do.
pub fn transcript(keywords: &[String], hits: usize, rng: &mut impl Rng) -> String {
    let mut chosen: Vec<String> = keywords.to_vec();
    chosen.shuffle(rng);
    chosen.truncate(hits);
    let mut words: Vec<String> = chosen
        .into_iter()
        .map(|k| match rng.random_range(0..3) {
            0 => k,
            1 => k.to_uppercase(),
            _ => crate::evaluation::normalize_text(&k).join(" "),
        })
        .collect();
    words.push("και".into());
    words.shuffle(rng);
    words.join(" ")
}

/// Runs one listener through a complete session and returns its id.
pub fn run_session(bench: &Bench, model: &ListenerModel, seed: u64) -> Result<String> {
    let sid = bench.create_session(&model.listener_id, model.group, seed)?.session_id;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    loop {
        match bench.next_stimulus(&sid)? {
            Next::Stimulus { stimulus_id, .. } => {
                let p = bench.planned(&stimulus_id)?;
                let prob = model.p_correct(p.condition, p.snr_db.expect("served with SNR"));
                let hits = Binomial::new(p.keywords.len() as u64, prob).expect("valid p").sample(&mut rng) as usize;
                let text = transcript(&p.keywords, hits, &mut rng);
                bench.submit_response(&sid, &stimulus_id, &text)?;
            }
            Next::Notice { phase: crate::bench::Phase::Done, .. } => return Ok(sid),
            Next::Notice { .. } => {}
        }
    }
}

/// Synthetic sentence pool large enough for any session.
pub fn sentence_pool(n: usize, seed: u64) -> Vec<TestItem> {
    (0..n as u64)
        .map(|i| {
            let (text, keywords) = synth::sentence(seed.wrapping_mul(7919).wrapping_add(i));
            TestItem { utt_id: format!("s{i:04}"), keywords, word_count: text.split_whitespace().count() }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub listeners: Vec<ListenerModel>,
    pub session_ids: Vec<String>,
    pub groups: Vec<GroupReport>,
}

/// Simulates a full study on `bench` (a fresh in-memory bench when `None`).
pub fn simulate_study(n_nh: usize, n_hi: usize, seed: u64, bench: Option<&Bench>) -> Result<StudyReport> {
    let owned;
    let bench = match bench {
        Some(b) => b,
        None => {
            owned = Bench::in_memory(Arc::new(TranscriptOnly::new(sentence_pool(120, seed))));
            &owned
        }
    };
    let mut listeners = cohort(Group::Nh, n_nh, seed);
    listeners.extend(cohort(Group::Hi, n_hi, seed.wrapping_add(1)));
    let mut session_ids = Vec::new();
    for (i, l) in listeners.iter().enumerate() {
        session_ids.push(run_session(bench, l, seed.wrapping_mul(31).wrapping_add(i as u64))?);
    }
    let mut groups = Vec::new();
    for (g, n) in [(Group::Nh, n_nh), (Group::Hi, n_hi)] {
        if n >= 2 {
            groups.push(bench.group_report(g)?);
        }
    }
    Ok(StudyReport { listeners, session_ids, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::normalize_text;

    #[test]
    fn cohorts_are_seeded() {
        assert_eq!(cohort(Group::Nh, 5, 1), cohort(Group::Nh, 5, 1));
        assert_ne!(cohort(Group::Nh, 5, 1), cohort(Group::Nh, 5, 2));
        for l in cohort(Group::Hi, 20, 3) {
            assert!((0.0..6.0).contains(&l.threshold_db));
            assert!((l.p_correct(Condition::Plain, l.threshold_db) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn transcripts_score_their_hits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, kw) = synth::sentence(3);
        for hits in 0..=5 {
            let t = transcript(&kw, hits, &mut rng);
            assert_eq!(crate::evaluation::score_keywords(&t, &kw).unwrap() as usize, hits);
            assert!(normalize_text(&t).contains(&"και".to_string()));
        }
    }

    #[test]
    fn small_study_runs() {
        let r = simulate_study(3, 2, 4, None).unwrap();
        assert_eq!(r.session_ids.len(), 5);
        assert_eq!(r.groups.len(), 2);
        assert_eq!(r.groups[0].listeners.len(), 3);
        assert_eq!(simulate_study(3, 2, 4, None).unwrap(), r);
    }
}
