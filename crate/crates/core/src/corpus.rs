//! Corpus manifests: one JSON record per utterance, one record per line.
//!
//! ```json
//! {"id": "u001", "wav_path": "wav/u001.wav", "text": "...", "keywords": ["a","b","c","d","e"], "split": "test"}
//! ```
//!
//! Relative `wav_path`s are resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioError, Waveform};
use crate::fsutil;
use crate::synth;

pub const KEYWORDS_PER_SENTENCE: usize = 5;
/// Longest sentence (in words) admitted to listening tests.
pub const MAX_TEST_WORDS: usize = 7;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("utterance {id}: expected {KEYWORDS_PER_SENTENCE} keywords, found {found}")]
    KeywordCount { id: String, found: usize },
    #[error("duplicate utterance id {0}")]
    DuplicateId(String),
    #[error("empty corpus")]
    Empty,
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub wav_path: PathBuf,
    pub text: String,
    pub keywords: Vec<String>,
    pub split: Split,
}

impl CorpusEntry {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }

    pub fn load_audio(&self) -> Result<Waveform, AudioError> {
        audio::read_wav(&self.wav_path)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub entries: Vec<CorpusEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut e: CorpusEntry =
                serde_json::from_str(line).map_err(|source| CorpusError::Parse { line: i + 1, source })?;
            if e.keywords.len() != KEYWORDS_PER_SENTENCE {
                return Err(CorpusError::KeywordCount { id: e.id, found: e.keywords.len() });
            }
            if !seen.insert(e.id.clone()) {
                return Err(CorpusError::DuplicateId(e.id));
            }
            if e.wav_path.is_relative() {
                e.wav_path = base.join(&e.wav_path);
            }
            entries.push(e);
        }
        if entries.is_empty() {
            return Err(CorpusError::Empty);
        }
        Ok(Self { entries })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Test-split sentences short enough for listening tests.
    pub fn listening_test_items(&self) -> Vec<&CorpusEntry> {
        self.split(Split::Test).filter(|e| e.word_count() <= MAX_TEST_WORDS).collect()
    }

    pub fn get(&self, id: &str) -> Option<&CorpusEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Serialises with paths relative to `base` where possible.
    pub fn to_jsonl(&self, base: &Path) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let mut e = e.clone();
            if let Ok(rel) = e.wav_path.strip_prefix(base) {
                e.wav_path = rel.to_path_buf();
            }
            out.push_str(&serde_json::to_string(&e).expect("serialisable entry"));
            out.push('\n');
        }
        out
    }
}

/// Writes a synthetic corpus (16 kHz WAVs plus `manifest.jsonl`) into `dir`.
pub fn write_synthetic_corpus(
    dir: &Path,
    n_train: usize,
    n_test: usize,
    duration_s: f64,
    seed: u64,
) -> Result<Manifest, CorpusError> {
    let wav_dir = dir.join("wav");
    std::fs::create_dir_all(&wav_dir)?;
    let mut entries = Vec::with_capacity(n_train + n_test);
    for i in 0..n_train + n_test {
        let split = if i < n_train { Split::Train } else { Split::Test };
        let id = format!("utt{i:04}");
        let item_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let w = synth::utterance(item_seed, duration_s, 16_000);
        let wav_path = wav_dir.join(format!("{id}.wav"));
        audio::write_wav(&wav_path, &w)?;
        let (text, keywords) = synth::sentence(item_seed);
        entries.push(CorpusEntry { id, wav_path, text, keywords, split });
    }
    let manifest = Manifest { entries };
    fsutil::write_atomic(&dir.join("manifest.jsonl"), manifest.to_jsonl(dir).as_bytes())?;
    Ok(manifest)
}
