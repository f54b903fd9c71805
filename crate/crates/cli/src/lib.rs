//! Command-line front end: batch enhancement, training, masking, scoring and
//! the listening-test server.

pub mod commands;
pub mod server;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "wssdrc", version, about = "SSDRC / wSSDRC speech intelligibility pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance a directory or manifest split with SSDRC or the trained network.
    Enhance(EnhanceArgs),
    /// Train the student network on SSDRC targets of the manifest's training split.
    Train(TrainArgs),
    /// Synthesize speech-shaped noise from the corpus LTASS.
    MakeSsn(MakeSsnArgs),
    /// Pre-mix masked stimuli into a cache directory.
    Mix(MixArgs),
    /// Build listener and group reports from session logs.
    Score(ScoreArgs),
    /// One-way ANOVA over the columns of a CSV file.
    Anova(AnovaArgs),
    /// Run synthetic listeners through full sessions and report.
    SimulateListeners(SimulateArgs),
    /// Start the listening-test HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Ssdrc,
    Wssdrc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for wssdrc_core::corpus::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Self::Train,
            SplitArg::Test => Self::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["in_dir", "manifest"])))]
pub struct EnhanceArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Directory of WAV files; outputs keep the file stem.
    #[arg(long)]
    pub in_dir: Option<PathBuf>,
    /// Corpus manifest (JSON lines); outputs are named `{id}.wav`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Trained checkpoint, required for `--method wssdrc`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// JSON file with SSDRC parameters.
    #[arg(long)]
    pub ssdrc_config: Option<PathBuf>,
    /// Skip the equal-energy rescaling.
    #[arg(long)]
    pub no_equal_energy: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// JSON with optional `net`, `schedule` and `ssdrc` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Network used when the config has no `net` section.
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    #[arg(long)]
    pub checkpoint_out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long, default_value_t = 250)]
    pub checkpoint_every: u64,
    /// Hold out the last N training utterances to select the best snapshot.
    #[arg(long, default_value_t = 0)]
    pub validation_count: usize,
    /// Continue from `--checkpoint-out` if it exists.
    #[arg(long)]
    pub resume: bool,
    /// Write the loss history of this run as CSV.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MakeSsnArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 60.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = wssdrc_core::masking::DEFAULT_SPEECH_RMS_DBFS, allow_hyphen_values = true)]
    pub level_dbfs: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Plain, SSDRC or wSSDRC.
    #[arg(long, default_value = "Plain")]
    pub condition: String,
    /// Enhanced `{id}.wav` files for a non-plain condition.
    #[arg(long)]
    pub enhanced_dir: Option<PathBuf>,
    /// SNR in dB; repeat for several.
    #[arg(long, required = true, allow_hyphen_values = true)]
    pub snr: Vec<f64>,
    /// Use this masker instead of synthesized SSN.
    #[arg(long)]
    pub noise_wav: Option<PathBuf>,
    /// Seed of the synthesized SSN.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, env = "WSSDRC_DATA_DIR")]
    pub data_dir: PathBuf,
    /// Writes report.json, listeners.csv and group_{NH,HI}.csv; JSON goes to
    /// stdout otherwise.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnovaArgs {
    /// CSV with a header row; each column is one group, blank cells skipped.
    pub csv: PathBuf,
    /// Columns to compare (default: all).
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
    /// Only rows whose `group` column has this value, e.g. NH in `listeners.csv`.
    #[arg(long)]
    pub group: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 13)]
    pub nh: usize,
    #[arg(long, default_value_t = 11)]
    pub hi: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Persist the simulated sessions here so `score` can read them.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Same layout as `score --out-dir`, plus listeners.json with the models.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, env = "WSSDRC_DATA_DIR")]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// CONDITION=DIR of enhanced `{id}.wav` files; repeat per condition.
    #[arg(long, value_parser = parse_enhanced)]
    pub enhanced: Vec<(wssdrc_core::evaluation::Condition, PathBuf)>,
    #[arg(long)]
    pub noise_wav: Option<PathBuf>,
    /// Seed of the synthesized SSN when no noise WAV is given.
    #[arg(long, default_value_t = 0)]
    pub ssn_seed: u64,
    /// Allow cross-origin requests from any origin.
    #[arg(long)]
    pub cors: bool,
}

fn parse_enhanced(s: &str) -> Result<(wssdrc_core::evaluation::Condition, PathBuf), String> {
    let (c, d) = s.split_once('=').ok_or("expected CONDITION=DIR")?;
    let c = wssdrc_core::evaluation::Condition::parse(c).ok_or_else(|| format!("unknown condition {c}"))?;
    Ok((c, PathBuf::from(d)))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Enhance(a) => commands::enhance(&a),
        Command::Train(a) => commands::train(&a),
        Command::MakeSsn(a) => commands::make_ssn(&a),
        Command::Mix(a) => commands::mix(&a),
        Command::Score(a) => commands::score(&a),
        Command::Anova(a) => commands::anova(&a),
        Command::SimulateListeners(a) => commands::simulate(&a),
        Command::Serve(a) => server::serve(&a),
    }
}
