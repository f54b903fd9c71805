use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result, anyhow, bail};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use wssdrc_core::audio::{self, Waveform};
use wssdrc_core::bench::{Bench, Phase, TranscriptOnly};
use wssdrc_core::corpus::{CorpusEntry, Manifest, Split};
use wssdrc_core::evaluation::{self, Condition, Group, GroupReport, ListenerReport};
use wssdrc_core::fsutil::write_atomic;
use wssdrc_core::masking::{self, NoiseCondition};
use wssdrc_core::neural::{self, BestTracker, Checkpoint, LrSchedule, NetConfig, TrainOptions, TrainingPair};
use wssdrc_core::simulate;
use wssdrc_core::ssdrc::{self, SAMPLE_RATE_HZ, SsdrcParams};

use crate::{AnovaArgs, EnhanceArgs, MakeSsnArgs, Method, MixArgs, Preset, ScoreArgs, SimulateArgs, TrainArgs};

/// Reads a WAV and resamples it to the pipeline rate if needed.
pub fn load_16k(path: &Path) -> Result<Waveform> {
    let w = audio::read_wav(path).with_context(|| format!("reading {}", path.display()))?;
    if w.sample_rate_hz() == SAMPLE_RATE_HZ {
        return Ok(w);
    }
    info!("resampling {} from {} Hz", path.display(), w.sample_rate_hz());
    Ok(audio::resample(&w, SAMPLE_RATE_HZ)?)
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?)
}

fn load_manifest(path: &Path) -> Result<Manifest> {
    Manifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

pub fn load_ssdrc_params(path: Option<&Path>) -> Result<SsdrcParams> {
    let p = match path {
        Some(path) => SsdrcParams::from_json(&std::fs::read_to_string(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => SsdrcParams::default(),
    };
    p.validate()?;
    Ok(p)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

// ---------------------------------------------------------------------------
// enhance

enum Enhancer {
    Ssdrc(SsdrcParams),
    Neural { ck: Checkpoint, equal_energy: bool },
}

impl Enhancer {
    fn apply(&self, w: &Waveform) -> Result<Waveform> {
        Ok(match self {
            Enhancer::Ssdrc(p) => ssdrc::ssdrc_enhance(w, p)?,
            Enhancer::Neural { ck, equal_energy } => {
                neural::enhance_neural_with(ck.inference_params(), &ck.config, w, *equal_energy)?
            }
        })
    }
}

fn wav_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = e?.path();
        if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
            let stem =
                p.file_stem().and_then(|s| s.to_str()).ok_or_else(|| anyhow!("bad file name {}", p.display()))?;
            out.push((stem.to_owned(), p.clone()));
        }
    }
    out.sort();
    Ok(out)
}

pub fn enhance(a: &EnhanceArgs) -> Result<()> {
    let enhancer = match a.method {
        Method::Ssdrc => {
            let mut p = load_ssdrc_params(a.ssdrc_config.as_deref())?;
            if a.no_equal_energy {
                p.equal_energy = false;
            }
            Enhancer::Ssdrc(p)
        }
        Method::Wssdrc => {
            let path = a.checkpoint.as_ref().ok_or_else(|| anyhow!("--method wssdrc needs --checkpoint"))?;
            let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            Enhancer::Neural { ck, equal_energy: !a.no_equal_energy }
        }
    };
    let inputs = match (&a.in_dir, &a.manifest) {
        (Some(d), _) => wav_files(d)?,
        (None, Some(m)) => {
            load_manifest(m)?.split(a.split.into()).map(|e| (e.id.clone(), e.wav_path.clone())).collect()
        }
        (None, None) => bail!("give --in-dir or --manifest"),
    };
    if inputs.is_empty() {
        bail!("no input files");
    }
    std::fs::create_dir_all(&a.out_dir)?;
    pool(a.jobs)?.install(|| {
        inputs.par_iter().try_for_each(|(id, path)| -> Result<()> {
            let w = load_16k(path)?;
            let out = enhancer.apply(&w).with_context(|| format!("enhancing {id}"))?;
            audio::write_wav(a.out_dir.join(format!("{id}.wav")), &out)?;
            Ok(())
        })
    })?;
    info!("enhanced {} files into {}", inputs.len(), a.out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub net: Option<NetConfig>,
    pub schedule: LrSchedule,
    pub ssdrc: SsdrcParams,
}

fn teacher_pairs(entries: &[&CorpusEntry], p: &SsdrcParams) -> Result<Vec<TrainingPair>> {
    entries
        .par_iter()
        .map(|e| {
            let plain = load_16k(&e.wav_path)?;
            let teacher = ssdrc::ssdrc_enhance(&plain, p).with_context(|| format!("teacher for {}", e.id))?;
            Ok(TrainingPair::new(e.id.clone(), &plain, &teacher)?)
        })
        .collect()
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let tc: TrainConfig = match &a.config {
        Some(p) => {
            serde_json::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    let cfg = tc.net.clone().unwrap_or_else(|| match a.preset {
        Preset::Desk => NetConfig::desk(),
        Preset::Paper => NetConfig::paper(),
    });
    cfg.validate()?;
    tc.schedule.validate()?;
    tc.ssdrc.validate()?;

    let manifest = load_manifest(&a.manifest)?;
    let entries: Vec<&CorpusEntry> = manifest.split(Split::Train).collect();
    if entries.len() <= a.validation_count {
        bail!("{} training utterances, cannot hold out {}", entries.len(), a.validation_count);
    }
    let pairs = pool(a.jobs)?.install(|| teacher_pairs(&entries, &tc.ssdrc))?;
    let (train_set, val_set) = pairs.split_at(pairs.len() - a.validation_count);
    info!("training on {} utterances, validating on {}", train_set.len(), val_set.len());

    let (resume, previous_best) = if a.resume && a.checkpoint_out.exists() {
        let ck = Checkpoint::load(&a.checkpoint_out)?;
        if ck.config != cfg || ck.schedule != tc.schedule {
            bail!("{} was trained with a different configuration", a.checkpoint_out.display());
        }
        info!("resuming from step {}", ck.state.step);
        (Some(ck.state), ck.best)
    } else {
        (None, None)
    };

    let opts = TrainOptions {
        epochs: a.epochs,
        max_steps: a.max_steps,
        seed: a.seed,
        checkpoint_every: Some(a.checkpoint_every),
    };
    let mut tracker = BestTracker::new(&cfg, val_set, previous_best);
    let validate = !val_set.is_empty();
    let out = neural::train(train_set, &cfg, &tc.schedule, &opts, resume, |st, _| {
        if validate {
            tracker.observe(st)?;
        }
        Checkpoint::new(cfg.clone(), tc.schedule, st.clone()).with_best(tracker.best.clone()).save(&a.checkpoint_out)
    })?;
    if validate && tracker.best.as_ref().is_none_or(|b| b.step != out.state.step) {
        tracker.observe(&out.state)?;
    }
    let best = tracker.best.clone();
    Checkpoint::new(cfg.clone(), tc.schedule, out.state.clone()).with_best(best.clone()).save(&a.checkpoint_out)?;
    if let Some(p) = &a.loss_csv {
        write_atomic(p, neural::loss_history_csv(&out.history).as_bytes())?;
    }
    match best {
        Some(b) => info!("step {}; best validation L1 {:.6} at step {}", out.state.step, b.validation_l1, b.step),
        None => info!("step {}", out.state.step),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// masking

fn corpus_ltass(manifest: &Manifest, split: Split) -> Result<masking::Ltass> {
    let entries: Vec<&CorpusEntry> = manifest.split(split).collect();
    let clips: Vec<Waveform> = entries.par_iter().map(|e| load_16k(&e.wav_path)).collect::<Result<_>>()?;
    Ok(masking::estimate_ltass(&clips)?)
}

pub fn make_ssn(a: &MakeSsnArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let l = corpus_ltass(&manifest, a.split.into())?;
    let cond = NoiseCondition { snr_db: 0.0, seed: a.seed, speech_rms_dbfs: a.level_dbfs };
    let noise = masking::synth_ssn(&l, a.duration_s, &cond)?;
    audio::write_wav(&a.out, &noise)?;
    Ok(())
}

pub fn mix(a: &MixArgs) -> Result<()> {
    let condition = Condition::parse(&a.condition).ok_or_else(|| anyhow!("unknown condition {}", a.condition))?;
    let manifest = load_manifest(&a.manifest)?;
    let entries: Vec<&CorpusEntry> = manifest.split(a.split.into()).collect();
    let mut dirs = BTreeMap::new();
    match (&a.enhanced_dir, condition) {
        (Some(d), c) => {
            dirs.insert(c, d.clone());
        }
        (None, Condition::Plain) => {}
        (None, c) => bail!("condition {c} needs --enhanced-dir"),
    }
    let noise = match &a.noise_wav {
        Some(p) => load_16k(p)?,
        None => {
            let longest = entries.iter().map(|e| load_16k(&e.wav_path).map(|w| w.len())).collect::<Result<Vec<_>>>()?;
            let dur = longest.into_iter().max().unwrap_or(0) as f64 / SAMPLE_RATE_HZ as f64 + 1.0;
            let split = if manifest.split(Split::Train).next().is_some() { Split::Train } else { a.split.into() };
            masking::synth_ssn(&corpus_ltass(&manifest, split)?, dur, &NoiseCondition::new(0.0, a.seed))?
        }
    };
    std::fs::create_dir_all(&a.out_dir)?;
    let source = wssdrc_core::bench::CorpusStimuli::new(&manifest, dirs, noise, Some(a.out_dir.clone()));
    let jobs: Vec<(&CorpusEntry, f64)> = entries.iter().flat_map(|e| a.snr.iter().map(move |&s| (*e, s))).collect();
    pool(a.jobs)?.install(|| {
        jobs.par_iter().try_for_each(|(e, snr)| -> Result<()> {
            use wssdrc_core::bench::StimulusSource;
            source.render(&e.id, condition, *snr).with_context(|| format!("mixing {} at {snr} dB", e.id))?;
            Ok(())
        })
    })?;
    info!("{} stimuli in {}", jobs.len(), a.out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub session_ids: Vec<String>,
    pub listeners: Vec<ListenerReport>,
    pub groups: Vec<GroupReport>,
}

/// Reports for every finished session in `bench`; groups with fewer than
/// two included listeners are left out.
pub fn collect_report(bench: &Bench) -> Result<ScoreReport> {
    let mut session_ids = Vec::new();
    let mut listeners = Vec::new();
    for id in bench.session_ids() {
        let s = bench.session(&id)?;
        if s.phase != Phase::Done {
            warn!("session {id} ({}) is still in phase {:?}", s.listener_id, s.phase);
            continue;
        }
        listeners.push(s.listener_report()?);
        session_ids.push(id);
    }
    let mut groups = Vec::new();
    for g in [Group::Nh, Group::Hi] {
        let members: Vec<ListenerReport> = listeners.iter().filter(|l| l.group == g).cloned().collect();
        if members.iter().filter(|l| !l.excluded).count() >= 2 {
            groups.push(evaluation::group_report(g, &members)?);
        }
    }
    Ok(ScoreReport { session_ids, listeners, groups })
}

fn write_report(dir: &Path, r: &ScoreReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), r)?;
    write_atomic(&dir.join("listeners.csv"), evaluation::listeners_csv(&r.listeners).as_bytes())?;
    for g in &r.groups {
        write_atomic(&dir.join(format!("group_{}.csv", g.group)), evaluation::group_csv(g).as_bytes())?;
    }
    Ok(())
}

fn emit(out_dir: Option<&Path>, r: &ScoreReport) -> Result<()> {
    match out_dir {
        Some(d) => write_report(d, r),
        None => {
            println!("{}", serde_json::to_string_pretty(r)?);
            Ok(())
        }
    }
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    if !a.data_dir.join("sessions").is_dir() {
        bail!("no sessions directory under {}", a.data_dir.display());
    }
    let bench = Bench::open(&a.data_dir, Arc::new(TranscriptOnly::new(Vec::new())))?;
    emit(a.out_dir.as_deref(), &collect_report(&bench)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaOutput {
    pub columns: Vec<String>,
    pub n: Vec<usize>,
    pub f_value: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// Rows with `excluded` set to true are always skipped; `group` keeps only
/// rows whose `group` column matches.
pub fn anova_columns(path: &Path, wanted: &[String], group: Option<&str>) -> Result<AnovaOutput> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    let col = |c: &str| header.iter().position(|h| h == c);
    let columns: Vec<String> = if wanted.is_empty() { header.clone() } else { wanted.to_vec() };
    let idx: Vec<usize> =
        columns.iter().map(|c| col(c).ok_or_else(|| anyhow!("no column {c}"))).collect::<Result<_>>()?;
    let group_col = match group {
        Some(_) => Some(col("group").ok_or_else(|| anyhow!("--group needs a `group` column"))?),
        None => None,
    };
    let excluded_col = col("excluded");
    let mut groups = vec![Vec::new(); idx.len()];
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        if excluded_col.and_then(|i| rec.get(i)) == Some("true") {
            continue;
        }
        if let (Some(i), Some(g)) = (group_col, group)
            && rec.get(i) != Some(g)
        {
            continue;
        }
        for (g, &i) in groups.iter_mut().zip(&idx) {
            match rec.get(i) {
                Some(v) if !v.is_empty() => {
                    g.push(v.parse::<f64>().with_context(|| format!("row {}: {v:?} is not a number", row + 2))?)
                }
                _ => {}
            }
        }
    }
    let r = evaluation::anova_oneway(&groups)?;
    Ok(AnovaOutput {
        columns,
        n: groups.iter().map(Vec::len).collect(),
        f_value: r.f_value,
        p_value: r.p_value,
        df_between: r.df_between,
        df_within: r.df_within,
    })
}

pub fn anova(a: &AnovaArgs) -> Result<()> {
    let out = anova_columns(&a.csv, &a.columns, a.group.as_deref())?;
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let source = Arc::new(TranscriptOnly::new(simulate::sentence_pool(120, a.seed)));
    let bench = match &a.data_dir {
        Some(d) => Bench::open(d, source)?,
        None => Bench::in_memory(source),
    };
    let study = simulate::simulate_study(a.nh, a.hi, a.seed, Some(&bench))?;
    let report = collect_report(&bench)?;
    if let Some(d) = &a.out_dir {
        std::fs::create_dir_all(d)?;
        write_json(&d.join("listeners.json"), &study.listeners)?;
    }
    emit(a.out_dir.as_deref(), &report)
}
