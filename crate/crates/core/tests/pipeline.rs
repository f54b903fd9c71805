use std::collections::BTreeMap;
use std::sync::Arc;

use wssdrc_core::audio;
use wssdrc_core::bench::{Bench, CorpusStimuli, Next, sentences_needed};
use wssdrc_core::corpus::{Split, write_synthetic_corpus};
use wssdrc_core::evaluation::{Condition, Group};
use wssdrc_core::masking::{self, NoiseCondition};
use wssdrc_core::neural::{self, Checkpoint, LrSchedule, NetConfig, TrainOptions, TrainingPair};
use wssdrc_core::simulate;
use wssdrc_core::ssdrc::{self, SsdrcParams};
use wssdrc_core::synth;

#[test]
fn desk_net_overfits_one_pair() {
    let cfg = NetConfig::desk();
    let x = synth::utterance(12, 1.0, 16_000);
    let y = ssdrc::ssdrc_enhance(&x, &SsdrcParams::default()).unwrap();
    let pairs = [TrainingPair::new("one", &x, &y).unwrap()];
    let opts = TrainOptions { epochs: usize::MAX, max_steps: Some(2000), seed: 3, checkpoint_every: None };
    let out = neural::train(&pairs, &cfg, &LrSchedule::default(), &opts, None, |_, _| Ok(())).unwrap();
    let mean = |r: &[neural::LossRecord]| r.iter().map(|l| l.loss).sum::<f64>() / r.len() as f64;
    let (head, tail) = (mean(&out.history[..10]), mean(&out.history[1950..]));
    assert!(tail * 10.0 <= head, "loss {head:.5} -> {tail:.5}");
}

/// Corpus on disk, both enhancers, stimulus rendering and one scored session.
#[test]
fn corpus_to_session_report() {
    let tmp = tempfile::tempdir().unwrap();
    let n_test = sentences_needed(Group::Nh);
    let m = write_synthetic_corpus(&tmp.path().join("corpus"), 4, n_test, 0.6, 21).unwrap();

    let cfg = NetConfig::desk();
    let pairs: Vec<TrainingPair> = m
        .split(Split::Train)
        .map(|e| {
            let x = e.load_audio().unwrap();
            TrainingPair::new(&e.id, &x, &ssdrc::ssdrc_enhance(&x, &SsdrcParams::default()).unwrap()).unwrap()
        })
        .collect();
    let opts = TrainOptions { epochs: 10, max_steps: Some(20), seed: 1, checkpoint_every: None };
    let out = neural::train(&pairs, &cfg, &LrSchedule::default(), &opts, None, |_, _| Ok(())).unwrap();
    let ck_path = tmp.path().join("ck.json");
    Checkpoint::new(cfg.clone(), LrSchedule::default(), out.state).save(&ck_path).unwrap();
    let ck = Checkpoint::load(&ck_path).unwrap();

    let mut dirs = BTreeMap::new();
    for c in [Condition::Ssdrc, Condition::Wssdrc] {
        let dir = tmp.path().join(c.to_string());
        std::fs::create_dir_all(&dir).unwrap();
        for e in m.split(Split::Test) {
            let x = e.load_audio().unwrap();
            let y = match c {
                Condition::Ssdrc => ssdrc::ssdrc_enhance(&x, &SsdrcParams::default()).unwrap(),
                _ => neural::enhance_neural(ck.inference_params(), &ck.config, &x).unwrap(),
            };
            assert!(audio::energy_ratio_db(&y, &x).abs() < 1e-9);
            audio::write_wav(dir.join(format!("{}.wav", e.id)), &y).unwrap();
        }
        dirs.insert(c, dir);
    }

    let train: Vec<_> = m.split(Split::Train).map(|e| e.load_audio().unwrap()).collect();
    let noise =
        masking::synth_ssn(&masking::estimate_ltass(&train).unwrap(), 2.0, &NoiseCondition::new(0.0, 9)).unwrap();
    let source = CorpusStimuli::new(&m, dirs, noise, None);
    let bench = Bench::open(tmp.path().join("data"), Arc::new(source)).unwrap();

    let listener = simulate::cohort(Group::Nh, 1, 5).remove(0);
    let sid = bench.create_session(&listener.listener_id, Group::Nh, 5).unwrap().session_id;
    let Next::Stimulus { stimulus_id, .. } = bench.next_stimulus(&sid).unwrap() else { panic!("expected a stimulus") };
    let planned = bench.planned(&stimulus_id).unwrap();
    let rendered = bench.stimulus_audio(&stimulus_id).unwrap();
    let plain = m.get(&planned.utt_id).unwrap().load_audio().unwrap();
    assert_eq!(rendered.len(), plain.len());
    bench.submit_response(&sid, &stimulus_id, &planned.keywords.join(" ")).unwrap();

    // a noiseless listener model answers the rest
    loop {
        match bench.next_stimulus(&sid).unwrap() {
            Next::Stimulus { stimulus_id, .. } => {
                let p = bench.planned(&stimulus_id).unwrap();
                bench.stimulus_audio(&stimulus_id).unwrap();
                let hits = if listener.p_correct(p.condition, p.snr_db.unwrap()) > 0.5 { p.keywords.len() } else { 0 };
                bench.submit_response(&sid, &stimulus_id, &p.keywords[..hits].join(" ")).unwrap();
            }
            Next::Notice { phase: wssdrc_core::bench::Phase::Done, .. } => break,
            Next::Notice { .. } => {}
        }
    }
    let r = bench.finalize_report(&sid).unwrap();
    assert_eq!(r.listener.percent.len(), 3);
    let srt = r.listener.srt_db.unwrap();
    assert!((-7.0..=-1.0).contains(&srt), "SRT {srt}");
    assert!(r.group.is_none());
}
