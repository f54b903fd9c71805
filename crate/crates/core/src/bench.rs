//! Listening-test sessions: pilot SRT estimation, the main three-condition
//! test, response scoring and reports.
//!
//! Every mutation is appended to a per-session JSONL event log before it is
//! applied, so a restarted [`Bench`] replays to the same state.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::{self, AudioError, LevelSpec, Waveform};
use crate::corpus::{MAX_TEST_WORDS, Manifest};
use crate::evaluation::{
    self, Condition, EvalError, Group, GroupReport, KEYWORDS_PER_SENTENCE, ListenerReport, PsychometricFit,
    SENTENCES_PER_CONDITION, ScoredResponse,
};
use crate::masking::{self, MaskingError};

pub const NH_PILOT_GRID: [f64; 4] = [-7.0, -5.0, -3.0, -1.0];
pub const HI_PILOT_GRID: [f64; 5] = [-3.0, 0.0, 3.0, 6.0, 9.0];
pub const PILOT_SENTENCES_PER_POINT: usize = 4;

pub fn pilot_grid(group: Group) -> &'static [f64] {
    match group {
        Group::Nh => &NH_PILOT_GRID,
        Group::Hi => &HI_PILOT_GRID,
    }
}

/// Sentences one session consumes for `group`.
pub fn sentences_needed(group: Group) -> usize {
    pilot_grid(group).len() * PILOT_SENTENCES_PER_POINT + Condition::ALL.len() * SENTENCES_PER_CONDITION
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown stimulus {0}")]
    UnknownStimulus(String),
    #[error("session is done")]
    SessionDone,
    #[error("previous stimulus has not been answered")]
    ResponsePending,
    #[error("already answered")]
    AlreadyAnswered,
    #[error("stimulus audio was already delivered")]
    AlreadyPlayed,
    #[error("session incomplete (phase {0:?})")]
    Incomplete(Phase),
    #[error("insufficient test-split sentences: need {needed}, have {available}")]
    InsufficientSentences { needed: usize, available: usize },
    #[error("this stimulus source has no audio")]
    NoAudio,
    #[error("missing audio for {utt_id} ({condition})")]
    MissingAudio { utt_id: String, condition: Condition },
    #[error("corrupt session log {path}: {reason}")]
    CorruptLog { path: PathBuf, reason: String },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Masking(#[from] MaskingError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

// ---------------------------------------------------------------------------
// stimulus sources

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestItem {
    pub utt_id: String,
    pub keywords: Vec<String>,
    pub word_count: usize,
}

/// Supplies the sentence pool and renders masked stimuli.
pub trait StimulusSource: Send + Sync {
    fn items(&self) -> &[TestItem];
    fn render(&self, utt_id: &str, condition: Condition, snr_db: f64) -> Result<Waveform>;
}

/// Sentence pool without audio, for simulations.
pub struct TranscriptOnly {
    items: Vec<TestItem>,
}

impl TranscriptOnly {
    pub fn new(items: Vec<TestItem>) -> Self {
        Self { items }
    }

    pub fn from_manifest(m: &Manifest) -> Self {
        Self::new(manifest_items(m))
    }
}

impl StimulusSource for TranscriptOnly {
    fn items(&self) -> &[TestItem] {
        &self.items
    }

    fn render(&self, _: &str, _: Condition, _: f64) -> Result<Waveform> {
        Err(BenchError::NoAudio)
    }
}

pub fn manifest_items(m: &Manifest) -> Vec<TestItem> {
    m.listening_test_items()
        .into_iter()
        .filter(|e| e.keywords.len() == KEYWORDS_PER_SENTENCE && e.word_count() <= MAX_TEST_WORDS)
        .map(|e| TestItem { utt_id: e.id.clone(), keywords: e.keywords.clone(), word_count: e.word_count() })
        .collect()
}

/// Stimuli mixed on demand from corpus WAVs, per-condition enhanced WAVs
/// (`{dir}/{utt_id}.wav`) and a masker.
pub struct CorpusStimuli {
    items: Vec<TestItem>,
    plain: HashMap<String, PathBuf>,
    enhanced: BTreeMap<Condition, PathBuf>,
    noise: Waveform,
    cache_dir: Option<PathBuf>,
}

impl CorpusStimuli {
    pub fn new(
        manifest: &Manifest,
        enhanced_dirs: BTreeMap<Condition, PathBuf>,
        noise: Waveform,
        cache_dir: Option<PathBuf>,
    ) -> Self {
        let items = manifest_items(manifest);
        let plain = manifest.entries.iter().map(|e| (e.id.clone(), e.wav_path.clone())).collect();
        Self { items, plain, enhanced: enhanced_dirs, noise, cache_dir }
    }

    fn source_path(&self, utt_id: &str, condition: Condition) -> Result<PathBuf> {
        let missing = || BenchError::MissingAudio { utt_id: utt_id.to_owned(), condition };
        match (condition, self.enhanced.get(&condition)) {
            (_, Some(dir)) => Ok(dir.join(format!("{utt_id}.wav"))),
            (Condition::Plain, None) => self.plain.get(utt_id).cloned().ok_or_else(missing),
            _ => Err(missing()),
        }
    }
}

fn noise_seed(utt_id: &str, condition: Condition, snr_db: f64) -> u64 {
    let h = Sha256::digest(format!("{utt_id}|{condition}|{snr_db}").as_bytes());
    u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

impl StimulusSource for CorpusStimuli {
    fn items(&self) -> &[TestItem] {
        &self.items
    }

    fn render(&self, utt_id: &str, condition: Condition, snr_db: f64) -> Result<Waveform> {
        let cached =
            self.cache_dir.as_ref().map(|d| d.join(masking::stimulus_file_name(utt_id, condition.as_str(), snr_db)));
        if let Some(p) = cached.as_ref().filter(|p| p.exists()) {
            return Ok(audio::read_wav(p)?);
        }
        let path = self.source_path(utt_id, condition)?;
        let speech = match audio::read_wav(&path) {
            Err(AudioError::MissingFile(_)) => {
                return Err(BenchError::MissingAudio { utt_id: utt_id.to_owned(), condition });
            }
            r => r?,
        };
        let speech = audio::normalize_rms(&speech, LevelSpec::PRESENTATION)?;
        let offset = masking::crop_offset(self.noise.len(), speech.len(), noise_seed(utt_id, condition, snr_db))?;
        let mixed = masking::mix_at_snr_with_offset(&speech, &self.noise, snr_db, offset)?.mixture;
        if let Some(p) = cached {
            audio::write_wav(&p, &mixed)?;
        }
        Ok(mixed)
    }
}

// ---------------------------------------------------------------------------
// sessions

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pilot,
    Main,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedStimulus {
    pub utt_id: String,
    pub keywords: Vec<String>,
    pub condition: Condition,
    /// Pilot SNRs are fixed at creation; main SNRs are set from the SRT.
    pub snr_db: Option<f64>,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Served {
    pub stimulus_id: String,
    pub played: bool,
    pub response: Option<ScoredResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub listener_id: String,
    pub group: Group,
    pub seed: u64,
    pub phase: Phase,
    pub pilot_grid: Vec<f64>,
    pub srt_db: Option<f64>,
    pub fit: Option<PsychometricFit>,
    /// True when the pilot data could not be fitted and the grid point
    /// closest to 50% was used instead.
    pub srt_fallback: bool,
    pub plan: Vec<PlannedStimulus>,
    pub served: Vec<Served>,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session_id: String,
        listener_id: String,
        group: Group,
        seed: u64,
        pilot_grid: Vec<f64>,
        plan: Vec<PlannedStimulus>,
    },
    Served {
        index: usize,
        stimulus_id: String,
    },
    Played {
        stimulus_id: String,
    },
    Responded {
        stimulus_id: String,
        response_text: String,
    },
    PhaseChanged {
        phase: Phase,
        srt_db: Option<f64>,
    },
    Excluded {
        excluded: bool,
    },
}

/// What `next_stimulus` hands back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Next {
    Stimulus { stimulus_id: String, phase: Phase, index: usize, total: usize },
    Notice { phase: Phase, srt_db: Option<f64> },
}

/// Builds the seeded plan: pilot sentences in Plain at the grid SNRs, then
/// eight sentences per condition with conditions interleaved.
pub fn build_plan(items: &[TestItem], group: Group, seed: u64) -> Result<Vec<PlannedStimulus>> {
    let grid = pilot_grid(group);
    let needed = sentences_needed(group);
    let pool: Vec<&TestItem> =
        items.iter().filter(|i| i.keywords.len() == KEYWORDS_PER_SENTENCE && i.word_count <= MAX_TEST_WORDS).collect();
    if pool.len() < needed {
        return Err(BenchError::InsufficientSentences { needed, available: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<&TestItem> = pool;
    order.shuffle(&mut rng);
    let mut snrs: Vec<f64> = grid.iter().flat_map(|&s| [s; PILOT_SENTENCES_PER_POINT]).collect();
    snrs.shuffle(&mut rng);
    let mut conds: Vec<Condition> = Condition::ALL.iter().flat_map(|&c| [c; SENTENCES_PER_CONDITION]).collect();
    conds.shuffle(&mut rng);

    let mut plan = Vec::with_capacity(needed);
    let mut it = order.into_iter();
    for snr in snrs {
        let item = it.next().expect("pool checked");
        plan.push(PlannedStimulus {
            utt_id: item.utt_id.clone(),
            keywords: item.keywords.clone(),
            condition: Condition::Plain,
            snr_db: Some(snr),
            phase: Phase::Pilot,
        });
    }
    for c in conds {
        let item = it.next().expect("pool checked");
        plan.push(PlannedStimulus {
            utt_id: item.utt_id.clone(),
            keywords: item.keywords.clone(),
            condition: c,
            snr_db: None,
            phase: Phase::Main,
        });
    }
    Ok(plan)
}

pub fn stimulus_id(session_id: &str, index: usize) -> String {
    let h = Sha256::digest(format!("{session_id}#{index}").as_bytes());
    h[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Proportion correct per tested pilot SNR, in grid order.
pub fn pilot_points(s: &Session) -> Vec<(f64, f64)> {
    s.pilot_grid
        .iter()
        .map(|&g| {
            let (hits, total) = s
                .plan
                .iter()
                .zip(&s.served)
                .filter(|(p, _)| p.phase == Phase::Pilot && p.snr_db == Some(g))
                .filter_map(|(_, sv)| sv.response.as_ref())
                .fold((0u32, 0u32), |(h, t), r| (h + r.hits as u32, t + KEYWORDS_PER_SENTENCE as u32));
            (g, if total == 0 { 0.0 } else { hits as f64 / total as f64 })
        })
        .collect()
}

/// SRT from the pilot: the logistic fit snapped to a tested SNR, or the grid
/// point nearest 50% correct when the data do not bracket 50%.
pub fn choose_srt(points: &[(f64, f64)]) -> (f64, Option<PsychometricFit>, bool) {
    match evaluation::fit_psychometric(points) {
        Ok(fit) => (fit.srt_db, Some(fit), false),
        Err(_) => {
            let best = points
                .iter()
                .fold(None::<(f64, f64)>, |acc, &(x, p)| match acc {
                    Some((_, bp)) if (bp - 0.5).abs() <= (p - 0.5).abs() => acc,
                    _ => Some((x, p)),
                })
                .map(|(x, _)| x)
                .unwrap_or(0.0);
            (best, None, true)
        }
    }
}

impl Session {
    fn from_created(ev: &Event) -> Option<Self> {
        match ev {
            Event::Created { session_id, listener_id, group, seed, pilot_grid, plan } => Some(Self {
                session_id: session_id.clone(),
                listener_id: listener_id.clone(),
                group: *group,
                seed: *seed,
                phase: Phase::Pilot,
                pilot_grid: pilot_grid.clone(),
                srt_db: None,
                fit: None,
                srt_fallback: false,
                plan: plan.clone(),
                served: Vec::new(),
                excluded: false,
            }),
            _ => None,
        }
    }

    fn index_of(&self, stimulus_id: &str) -> Option<usize> {
        self.served.iter().position(|s| s.stimulus_id == stimulus_id)
    }

    fn pilot_len(&self) -> usize {
        self.plan.iter().filter(|p| p.phase == Phase::Pilot).count()
    }

    /// Applies one logged event. Events are validated before logging, so
    /// application only fails on a corrupt log.
    fn apply(&mut self, ev: &Event) -> std::result::Result<(), String> {
        match ev {
            Event::Created { .. } => return Err("duplicate creation event".into()),
            Event::Served { index, stimulus_id } => {
                if *index != self.served.len() || *index >= self.plan.len() {
                    return Err(format!("out-of-order serve {index}"));
                }
                self.served.push(Served { stimulus_id: stimulus_id.clone(), played: false, response: None });
            }
            Event::Played { stimulus_id } => {
                let i = self.index_of(stimulus_id).ok_or("play of unknown stimulus")?;
                self.served[i].played = true;
            }
            Event::Responded { stimulus_id, response_text } => {
                let i = self.index_of(stimulus_id).ok_or("response to unknown stimulus")?;
                let p = &self.plan[i];
                let scored = ScoredResponse::score(&p.utt_id, p.condition, &p.keywords, response_text)
                    .map_err(|e| e.to_string())?;
                self.served[i].response = Some(scored);
            }
            Event::PhaseChanged { phase, srt_db } => {
                if *phase == Phase::Main {
                    let srt = srt_db.ok_or("main phase without SRT")?;
                    let (_, fit, fallback) = choose_srt(&pilot_points(self));
                    self.fit = fit;
                    self.srt_fallback = fallback;
                    self.srt_db = Some(srt);
                    for p in self.plan.iter_mut().filter(|p| p.phase == Phase::Main) {
                        p.snr_db = Some(srt);
                    }
                }
                self.phase = *phase;
            }
            Event::Excluded { excluded } => self.excluded = *excluded,
        }
        Ok(())
    }

    pub fn responses(&self) -> Vec<ScoredResponse> {
        self.served.iter().filter_map(|s| s.response.clone()).collect()
    }

    /// Responses of the main phase only.
    pub fn main_responses(&self) -> Vec<ScoredResponse> {
        self.plan
            .iter()
            .zip(&self.served)
            .filter(|(p, _)| p.phase == Phase::Main)
            .filter_map(|(_, s)| s.response.clone())
            .collect()
    }

    pub fn listener_report(&self) -> Result<ListenerReport> {
        if self.phase != Phase::Done {
            return Err(BenchError::Incomplete(self.phase));
        }
        let mut r = ListenerReport::from_responses(&self.listener_id, self.group, self.srt_db, &self.main_responses())?;
        r.excluded = self.excluded;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub listener: ListenerReport,
    pub pilot_points: Vec<(f64, f64)>,
    pub fit: Option<PsychometricFit>,
    pub srt_fallback: bool,
    /// Present once the listener's group has at least two finished sessions.
    pub group: Option<GroupReport>,
}

/// Blinded summary of a scored response, safe to show the participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Receipt {
    pub stimulus_id: String,
    pub hits: u8,
    pub answered: usize,
    pub total: usize,
}

type SessionCell = Arc<Mutex<Session>>;

/// The session store. Sessions are independent; each one's mutations are
/// serialised by its own lock.
pub struct Bench {
    data_dir: Option<PathBuf>,
    source: Arc<dyn StimulusSource>,
    sessions: RwLock<BTreeMap<String, SessionCell>>,
    stimuli: RwLock<HashMap<String, (String, usize)>>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Bench {
    /// A store without persistence.
    pub fn in_memory(source: Arc<dyn StimulusSource>) -> Self {
        Self { data_dir: None, source, sessions: RwLock::default(), stimuli: RwLock::default() }
    }

    /// Opens (or creates) a store under `data_dir`, replaying every session log.
    pub fn open(data_dir: impl Into<PathBuf>, source: Arc<dyn StimulusSource>) -> Result<Self> {
        let data_dir = data_dir.into();
        let dir = data_dir.join("sessions");
        std::fs::create_dir_all(&dir)?;
        let bench = Self { data_dir: Some(data_dir), source, sessions: RwLock::default(), stimuli: RwLock::default() };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for p in paths {
            let s = replay(&p)?;
            bench.register(s);
        }
        Ok(bench)
    }

    pub fn source(&self) -> &Arc<dyn StimulusSource> {
        &self.source
    }

    fn register(&self, s: Session) {
        let id = s.session_id.clone();
        {
            let mut st = self.stimuli.write().unwrap_or_else(|e| e.into_inner());
            for (i, sv) in s.served.iter().enumerate() {
                st.insert(sv.stimulus_id.clone(), (id.clone(), i));
            }
        }
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, Arc::new(Mutex::new(s)));
    }

    fn log_path(&self, session_id: &str) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join("sessions").join(format!("{session_id}.jsonl")))
    }

    fn persist(&self, session_id: &str, ev: &Event) -> Result<()> {
        if let Some(p) = self.log_path(session_id) {
            let mut f = OpenOptions::new().create(true).append(true).open(p)?;
            let mut line = serde_json::to_vec(ev)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        Ok(())
    }

    /// Logs then applies.
    fn commit(&self, s: &mut Session, ev: Event) -> Result<()> {
        self.persist(&s.session_id, &ev)?;
        s.apply(&ev).map_err(|reason| BenchError::CorruptLog { path: PathBuf::new(), reason })
    }

    fn cell(&self, session_id: &str) -> Result<SessionCell> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(session_id)
            .cloned()
            .ok_or_else(|| BenchError::UnknownSession(session_id.to_owned()))
    }

    pub fn create_session(&self, listener_id: &str, group: Group, seed: u64) -> Result<Session> {
        let plan = build_plan(self.source.items(), group, seed)?;
        let mut sessions = self.sessions.write().unwrap_or_else(|e| e.into_inner());
        let mut n = sessions.len() as u64;
        let session_id = loop {
            let h = Sha256::digest(format!("{listener_id}|{group}|{seed}|{n}").as_bytes());
            let id: String = h[..6].iter().map(|b| format!("{b:02x}")).collect();
            if !sessions.contains_key(&id) {
                break id;
            }
            n += 1;
        };
        let ev = Event::Created {
            session_id: session_id.clone(),
            listener_id: listener_id.to_owned(),
            group,
            seed,
            pilot_grid: pilot_grid(group).to_vec(),
            plan,
        };
        self.persist(&session_id, &ev)?;
        let s = Session::from_created(&ev).expect("creation event");
        sessions.insert(session_id, Arc::new(Mutex::new(s.clone())));
        Ok(s)
    }

    pub fn session(&self, session_id: &str) -> Result<Session> {
        let cell = self.cell(session_id)?;
        let s = lock(&cell).clone();
        Ok(s)
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect()
    }

    pub fn next_stimulus(&self, session_id: &str) -> Result<Next> {
        let cell = self.cell(session_id)?;
        let mut s = lock(&cell);
        if s.phase == Phase::Done {
            return Err(BenchError::SessionDone);
        }
        if s.served.last().is_some_and(|v| v.response.is_none()) {
            return Err(BenchError::ResponsePending);
        }
        let cursor = s.served.len();
        if s.phase == Phase::Pilot && cursor == s.pilot_len() {
            let (srt, _, _) = choose_srt(&pilot_points(&s));
            self.commit(&mut s, Event::PhaseChanged { phase: Phase::Main, srt_db: Some(srt) })?;
            return Ok(Next::Notice { phase: Phase::Main, srt_db: Some(srt) });
        }
        if cursor == s.plan.len() {
            let srt_db = s.srt_db;
            self.commit(&mut s, Event::PhaseChanged { phase: Phase::Done, srt_db })?;
            return Ok(Next::Notice { phase: Phase::Done, srt_db });
        }
        let id = stimulus_id(session_id, cursor);
        self.commit(&mut s, Event::Served { index: cursor, stimulus_id: id.clone() })?;
        self.stimuli.write().unwrap_or_else(|e| e.into_inner()).insert(id.clone(), (session_id.to_owned(), cursor));
        Ok(Next::Stimulus { stimulus_id: id, phase: s.phase, index: cursor, total: s.plan.len() })
    }

    pub fn submit_response(&self, session_id: &str, stimulus_id: &str, response_text: &str) -> Result<ScoredResponse> {
        let cell = self.cell(session_id)?;
        let mut s = lock(&cell);
        let i = s.index_of(stimulus_id).ok_or_else(|| BenchError::UnknownStimulus(stimulus_id.to_owned()))?;
        if s.served[i].response.is_some() {
            return Err(BenchError::AlreadyAnswered);
        }
        self.commit(
            &mut s,
            Event::Responded { stimulus_id: stimulus_id.to_owned(), response_text: response_text.to_owned() },
        )?;
        Ok(s.served[i].response.clone().expect("just applied"))
    }

    /// Blinded receipt for a submitted response.
    pub fn receipt(&self, session_id: &str, stimulus_id: &str) -> Result<Receipt> {
        let s = self.session(session_id)?;
        let i = s.index_of(stimulus_id).ok_or_else(|| BenchError::UnknownStimulus(stimulus_id.to_owned()))?;
        let hits = s.served[i].response.as_ref().map(|r| r.hits).unwrap_or(0);
        Ok(Receipt {
            stimulus_id: stimulus_id.to_owned(),
            hits,
            answered: s.served.iter().filter(|v| v.response.is_some()).count(),
            total: s.plan.len(),
        })
    }

    /// Session owning a stimulus id.
    pub fn stimulus_owner(&self, stimulus_id: &str) -> Result<String> {
        self.stimuli
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(stimulus_id)
            .map(|(s, _)| s.clone())
            .ok_or_else(|| BenchError::UnknownStimulus(stimulus_id.to_owned()))
    }

    /// Planned condition and SNR behind a stimulus. For administration and
    /// simulation only; never exposed to participants.
    pub fn planned(&self, stimulus_id: &str) -> Result<PlannedStimulus> {
        let (sid, i) = self
            .stimuli
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(stimulus_id)
            .cloned()
            .ok_or_else(|| BenchError::UnknownStimulus(stimulus_id.to_owned()))?;
        Ok(self.session(&sid)?.plan[i].clone())
    }

    /// Renders a stimulus once. A second request for the same id fails, so a
    /// sentence is heard only once.
    pub fn stimulus_audio(&self, stimulus_id: &str) -> Result<Waveform> {
        let sid = self.stimulus_owner(stimulus_id)?;
        let cell = self.cell(&sid)?;
        let planned = {
            let mut s = lock(&cell);
            let i = s.index_of(stimulus_id).ok_or_else(|| BenchError::UnknownStimulus(stimulus_id.to_owned()))?;
            if s.served[i].played {
                return Err(BenchError::AlreadyPlayed);
            }
            let p = s.plan[i].clone();
            // render before committing so a failed render can be retried
            let snr = p.snr_db.expect("served stimuli have an SNR");
            let w = self.source.render(&p.utt_id, p.condition, snr)?;
            self.commit(&mut s, Event::Played { stimulus_id: stimulus_id.to_owned() })?;
            w
        };
        Ok(planned)
    }

    pub fn set_excluded(&self, session_id: &str, excluded: bool) -> Result<()> {
        let cell = self.cell(session_id)?;
        let mut s = lock(&cell);
        self.commit(&mut s, Event::Excluded { excluded })
    }

    fn finished(&self, group: Group) -> Result<Vec<ListenerReport>> {
        let cells: Vec<SessionCell> =
            self.sessions.read().unwrap_or_else(|e| e.into_inner()).values().cloned().collect();
        let mut out = Vec::new();
        for c in cells {
            let s = lock(&c).clone();
            if s.group == group && s.phase == Phase::Done {
                out.push(s.listener_report()?);
            }
        }
        Ok(out)
    }

    pub fn finalize_report(&self, session_id: &str) -> Result<SessionReport> {
        let s = self.session(session_id)?;
        let listener = s.listener_report()?;
        let group = self.group_report(s.group).ok();
        Ok(SessionReport {
            session_id: s.session_id.clone(),
            listener,
            pilot_points: pilot_points(&s),
            fit: s.fit.clone(),
            srt_fallback: s.srt_fallback,
            group,
        })
    }

    pub fn group_report(&self, group: Group) -> Result<GroupReport> {
        Ok(evaluation::group_report(group, &self.finished(group)?)?)
    }
}

/// Rebuilds one session from its event log.
pub fn replay(path: &Path) -> Result<Session> {
    let corrupt = |reason: String| BenchError::CorruptLog { path: path.to_owned(), reason };
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first: Event = serde_json::from_str(lines.next().ok_or_else(|| corrupt("empty log".into()))?)
        .map_err(|e| corrupt(e.to_string()))?;
    let mut s = Session::from_created(&first).ok_or_else(|| corrupt("log does not start with creation".into()))?;
    for (n, line) in lines.enumerate() {
        let ev: Event = match serde_json::from_str(line) {
            Ok(ev) => ev,
            // a torn final line from a crash mid-append is dropped
            Err(_) if n + 2 == text.lines().filter(|l| !l.trim().is_empty()).count() => break,
            Err(e) => return Err(corrupt(e.to_string())),
        };
        s.apply(&ev).map_err(corrupt)?;
    }
    Ok(s)
}
