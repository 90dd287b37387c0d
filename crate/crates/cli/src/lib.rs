//! Subcommands of the `cantus` tool. Each `cmd_*` function writes its files
//! and returns a JSON summary that the binary prints on stdout.

use cantus_core::dataset::{self, DatasetError, DatasetVariant, TrainingCorpus, Vocabulary};
use cantus_core::metrics::{self, MetricError, MetricReport, MetricStats, SpanConfig};
use cantus_core::midi::{self, MidiError};
use cantus_core::rnn::{self, CellKind, LearningCurve, ModelConfig, ModelState, RnnError, SampleMode, TrainConfig};
use cantus_core::song::Song;
use cantus_core::tensor::AdamConfig;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    Dataset {
        context: String,
        #[source]
        source: DatasetError,
    },
    #[error("{path}: {source}")]
    Midi {
        path: PathBuf,
        #[source]
        source: MidiError,
    },
    #[error(transparent)]
    Model(#[from] RnnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Dataset { .. } => "dataset",
            CliError::Midi { .. } => "midi",
            CliError::Model(e) => match e {
                RnnError::CorpusTooSmall { .. } => "corpus_too_small",
                RnnError::UnknownSeedToken(_) => "unknown_seed_token",
                RnnError::Song(_) => "pitch_out_of_range",
                RnnError::Checkpoint(_) => "checkpoint",
                _ => "model",
            },
            CliError::Metric(MetricError::SongTooShort { .. }) => "song_too_short",
            CliError::Metric(_) => "metric",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "cantus", version, about = "Melody generation with gated recurrent networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a training corpus from songs.
    Dataset(DatasetArgs),
    /// Train one model and write its checkpoint and learning curve.
    Train(TrainArgs),
    /// Train every (cell, depth) pair and tabulate final losses.
    Sweep(SweepArgs),
    /// Generate songs from a checkpoint.
    Sample(SampleArgs),
    /// Score songs with the tonality metrics.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// JSON Lines songs or a directory of MIDI files; the bundled corpus if omitted.
    #[arg(long, env = "CANTUS_INPUT")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "control")]
    pub variant: DatasetVariant,
    #[arg(long, env = "CANTUS_CORPUS")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    #[arg(long, default_value_t = rnn::model::DEFAULT_HIDDEN)]
    pub hidden_size: usize,
    #[arg(long, default_value_t = rnn::model::DEFAULT_EMBEDDING)]
    pub embedding_dim: usize,
    #[arg(long, default_value_t = 50)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 50)]
    pub seq_len: usize,
    /// Defaults to 300, or 50 for DB12 corpora.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long, default_value_t = 0.002)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.97)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Default for TrainOpts {
    fn default() -> Self {
        Self {
            hidden_size: rnn::model::DEFAULT_HIDDEN,
            embedding_dim: rnn::model::DEFAULT_EMBEDDING,
            batch_size: 50,
            seq_len: 50,
            epochs: None,
            max_iterations: None,
            learning_rate: 0.002,
            lr_decay: 0.97,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainOpts {
    pub fn train_config(&self, variant: DatasetVariant) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            seq_len: self.seq_len,
            epochs: self.epochs.unwrap_or(default_epochs(variant)),
            max_iterations: self.max_iterations,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            lr_decay: self.lr_decay,
            clip_norm: self.clip_norm,
            seed: self.seed,
        }
    }

    pub fn model_config(&self, cell: CellKind, layers: usize, variant: DatasetVariant) -> ModelConfig {
        ModelConfig {
            cell,
            layers,
            hidden_size: self.hidden_size,
            embedding_dim: self.embedding_dim,
            variant,
        }
    }
}

pub fn default_epochs(variant: DatasetVariant) -> usize {
    match variant {
        DatasetVariant::Db12 => 50,
        _ => 300,
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, env = "CANTUS_CORPUS")]
    pub corpus: PathBuf,
    #[arg(long, default_value = "lstm")]
    pub cell: CellKind,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long, env = "CANTUS_CHECKPOINT")]
    pub checkpoint: PathBuf,
    /// Learning-curve CSV; next to the checkpoint if omitted.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, env = "CANTUS_CORPUS")]
    pub corpus: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "lstm,ugrnn")]
    pub cells: Vec<CellKind>,
    #[arg(long, default_value_t = 1)]
    pub min_layers: usize,
    #[arg(long, default_value_t = rnn::MAX_LAYERS)]
    pub max_layers: usize,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long, env = "CANTUS_OUTPUT_DIR")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SampleOpts {
    /// Comma-separated MIDI note numbers fed before generation.
    #[arg(long, value_delimiter = ',', default_value = "60,62,64,62")]
    pub seed_notes: Vec<i32>,
    #[arg(long, default_value_t = rnn::DEFAULT_GENERATED)]
    pub notes: usize,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 1.0, conflicts_with = "greedy")]
    pub temperature: f64,
    /// Always take the most probable next token.
    #[arg(long)]
    pub greedy: bool,
    /// Master seed; song `i` draws from stream `i` of it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Default for SampleOpts {
    fn default() -> Self {
        Self {
            seed_notes: rnn::DEFAULT_SEED.iter().map(|&n| n as i32).collect(),
            notes: rnn::DEFAULT_GENERATED,
            count: 100,
            temperature: 1.0,
            greedy: false,
            seed: 0,
        }
    }
}

impl SampleOpts {
    pub fn mode(&self) -> SampleMode {
        if self.greedy {
            SampleMode::Greedy
        } else {
            SampleMode::Temperature(self.temperature)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[arg(long, env = "CANTUS_CHECKPOINT")]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub sample: SampleOpts,
    #[arg(long, env = "CANTUS_OUTPUT_DIR")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// JSON Lines songs to score.
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pub songs: Option<PathBuf>,
    /// Sample from this checkpoint first, then score the samples.
    #[arg(long, env = "CANTUS_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub sample: SampleOpts,
    #[arg(long, default_value_t = 12)]
    pub span: usize,
    #[arg(long, default_value_t = 5)]
    pub lower_bound: usize,
    #[arg(long, default_value_t = 8)]
    pub upper_bound: usize,
    #[arg(long, env = "CANTUS_OUTPUT_DIR")]
    pub output_dir: PathBuf,
}

pub fn run(cli: Cli) -> Result<Value> {
    match cli.command {
        Command::Dataset(a) => cmd_dataset(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Sample(a) => cmd_sample(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Songs from a JSON Lines file, every `.mid`/`.midi` file of a directory
/// (in file-name order), or the bundled corpus.
pub fn load_songs(input: Option<&Path>) -> Result<Vec<Song>> {
    let Some(path) = input else {
        return Ok(dataset::bundled_corpus());
    };
    if path.is_dir() {
        let entries = fs::read_dir(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
            })
            .collect();
        files.sort();
        files
            .iter()
            .map(|f| {
                midi::parse_midi(&read(f)?).map_err(|source| CliError::Midi {
                    path: f.clone(),
                    source,
                })
            })
            .collect()
    } else {
        dataset::parse_songs_jsonl(&read_text(path)?).map_err(|source| CliError::Dataset {
            context: path.display().to_string(),
            source,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorpusFile {
    format_version: u32,
    variant: DatasetVariant,
    song_count: usize,
    x: Vec<usize>,
    y: Vec<usize>,
}

pub fn vocabulary_path(corpus: &Path) -> PathBuf {
    corpus.with_extension("vocab.json")
}

pub fn write_corpus(path: &Path, corpus: &TrainingCorpus, song_count: usize) -> Result<()> {
    let file = CorpusFile {
        format_version: CORPUS_FORMAT_VERSION,
        variant: corpus.variant,
        song_count,
        x: corpus.x.clone(),
        y: corpus.y.clone(),
    };
    write(path, serde_json::to_vec(&file).expect("serializable"))?;
    write(&vocabulary_path(path), to_json_bytes(&corpus.vocabulary))
}

pub fn read_corpus(path: &Path) -> Result<TrainingCorpus> {
    let file: CorpusFile = from_json(path)?;
    if file.format_version != CORPUS_FORMAT_VERSION {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            message: format!("unsupported corpus format version {}", file.format_version),
        });
    }
    let vocab_path = vocabulary_path(path);
    let vocabulary: Vocabulary = from_json(&vocab_path)?;
    let bad = |message: &str| CliError::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if file.x.len() != file.y.len() || file.x.is_empty() {
        return Err(bad("x and y must be non-empty and equally long"));
    }
    if file.x.iter().chain(&file.y).any(|&id| id >= vocabulary.len()) {
        return Err(bad("token id outside the vocabulary"));
    }
    Ok(TrainingCorpus {
        variant: file.variant,
        vocabulary,
        x: file.x,
        y: file.y,
    })
}

pub fn cmd_dataset(args: &DatasetArgs) -> Result<Value> {
    let songs = load_songs(args.input.as_deref())?;
    let kept = dataset::clean_corpus(&songs);
    let corpus = dataset::build_corpus(&kept, args.variant).map_err(|source| CliError::Dataset {
        context: args
            .input
            .as_ref()
            .map_or("bundled corpus".to_string(), |p| p.display().to_string()),
        source,
    })?;
    write_corpus(&args.output, &corpus, kept.len())?;
    Ok(json!({
        "variant": args.variant,
        "songs_read": songs.len(),
        "songs_kept": kept.len(),
        "songs_dropped": songs.len() - kept.len(),
        "tokens": corpus.len() + 1,
        "pairs": corpus.len(),
        "vocab_size": corpus.vocabulary.len(),
        "output": args.output,
    }))
}

fn default_curve_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("curve.csv")
}

pub fn cmd_train(args: &TrainArgs) -> Result<Value> {
    let corpus = read_corpus(&args.corpus)?;
    let model_cfg = args.train.model_config(args.cell, args.layers, corpus.variant);
    let train_cfg = args.train.train_config(corpus.variant);
    let (model, curve) = rnn::train(&corpus, model_cfg, &train_cfg)?;
    write(&args.checkpoint, rnn::save_checkpoint(&model))?;
    let curve_path = args.curve.clone().unwrap_or_else(|| default_curve_path(&args.checkpoint));
    write(&curve_path, curve.to_csv())?;
    Ok(json!({
        "cell": args.cell,
        "layers": args.layers,
        "epochs": train_cfg.epochs,
        "iterations": curve.len(),
        "initial_loss": curve.first_loss(),
        "final_loss": curve.last_loss(),
        "param_count": model.param_count(),
        "checkpoint": args.checkpoint,
        "curve": curve_path,
    }))
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub cell: CellKind,
    pub layers: usize,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    /// `ok`, or the error that stopped the run.
    pub status: String,
}

/// Mean loss over the last epoch's iterations.
pub fn final_epoch_loss(curve: &LearningCurve, windows_per_epoch: usize) -> Option<f64> {
    curve.tail_mean(windows_per_epoch)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    let mut out = String::from("cell,layers,initial_loss,final_loss,status\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.cell,
            r.layers,
            opt(r.initial_loss),
            opt(r.final_loss),
            r.status.replace(',', ";")
        ));
    }
    out
}

/// Depth with the lowest final loss for each cell among the successful runs; the shallower wins ties.
pub fn sweep_argmin(rows: &[SweepRow], cells: &[CellKind]) -> Vec<(CellKind, Option<usize>)> {
    cells
        .iter()
        .map(|&cell| {
            let best = rows
                .iter()
                .filter(|r| r.cell == cell)
                .filter_map(|r| r.final_loss.map(|l| (r.layers, l)))
                .fold(None, |acc: Option<(usize, f64)>, (layers, l)| match acc {
                    Some((_, bl)) if bl <= l => acc,
                    _ => Some((layers, l)),
                });
            (cell, best.map(|(l, _)| l))
        })
        .collect()
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Value> {
    if args.min_layers == 0 || args.min_layers > args.max_layers || args.max_layers > rnn::MAX_LAYERS {
        return Err(CliError::Usage(format!(
            "layer range must lie within 1..={}",
            rnn::MAX_LAYERS
        )));
    }
    let corpus = read_corpus(&args.corpus)?;
    let train_cfg = args.train.train_config(corpus.variant);
    let windows = rnn::LaneLayout::new(corpus.len(), train_cfg.batch_size, train_cfg.seq_len)
        .map(|l| l.windows_per_epoch)
        .unwrap_or(1);
    create_dir(&args.output_dir)?;

    let runs: Vec<(CellKind, usize)> = args
        .cells
        .iter()
        .flat_map(|&c| (args.min_layers..=args.max_layers).map(move |l| (c, l)))
        .collect();
    let results: Vec<(SweepRow, Option<String>)> = runs
        .par_iter()
        .map(|&(cell, layers)| {
            let cfg = args.train.model_config(cell, layers, corpus.variant);
            match rnn::train(&corpus, cfg, &train_cfg) {
                Ok((_, curve)) => (
                    SweepRow {
                        cell,
                        layers,
                        initial_loss: curve.first_loss(),
                        final_loss: final_epoch_loss(&curve, windows),
                        status: "ok".to_string(),
                    },
                    Some(curve.to_csv()),
                ),
                Err(e) => (
                    SweepRow {
                        cell,
                        layers,
                        initial_loss: None,
                        final_loss: None,
                        status: format!("error: {e}"),
                    },
                    None,
                ),
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    for (row, csv) in results {
        if let Some(csv) = csv {
            write(&args.output_dir.join(format!("curve_{}_{}.csv", row.cell, row.layers)), csv)?;
        }
        rows.push(row);
    }
    write(&args.output_dir.join("summary.csv"), sweep_csv(&rows))?;
    let argmin = sweep_argmin(&rows, &args.cells);
    let mut best_csv = String::from("cell,best_layers\n");
    for (cell, best) in &argmin {
        best_csv.push_str(&format!("{cell},{}\n", best.map_or(String::new(), |l| l.to_string())));
    }
    write(&args.output_dir.join("best_layers.csv"), best_csv)?;

    Ok(json!({
        "runs": rows,
        "best_layers": argmin.iter().map(|(c, l)| json!({"cell": c, "layers": l})).collect::<Vec<_>>(),
        "failed": rows.iter().filter(|r| r.status != "ok").count(),
        "output_dir": args.output_dir,
    }))
}

pub fn load_model(path: &Path) -> Result<ModelState> {
    Ok(rnn::load_checkpoint(&read(path)?)?)
}

/// Generates `opts.count` songs; song `i` uses RNG stream `i` of the master seed.
pub fn generate(model: &ModelState, opts: &SampleOpts) -> Result<Vec<Song>> {
    let seed = Song::from_pitches(&opts.seed_notes)
        .map_err(|e| CliError::Usage(format!("bad seed notes: {e}")))?;
    let mode = opts.mode();
    (0..opts.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rnn::song_rng(opts.seed, i as u64);
            Ok(rnn::sample_with_rng(model, &seed, opts.notes, mode, &mut rng)?)
        })
        .collect()
}

fn write_songs(dir: &Path, songs: &[Song]) -> Result<()> {
    create_dir(dir)?;
    write(&dir.join("songs.jsonl"), dataset::songs_to_jsonl(songs))?;
    for (i, s) in songs.iter().enumerate() {
        write(&dir.join(format!("song_{i:03}.mid")), midi::write_midi(s))?;
    }
    Ok(())
}

pub fn cmd_sample(args: &SampleArgs) -> Result<Value> {
    let model = load_model(&args.checkpoint)?;
    let songs = generate(&model, &args.sample)?;
    write_songs(&args.output_dir, &songs)?;
    Ok(json!({
        "count": songs.len(),
        "notes_per_song": songs.first().map(Song::len),
        "variant": model.config.variant,
        "output_dir": args.output_dir,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub span: SpanConfig,
    pub reports: Vec<MetricReport>,
    pub stats: MetricStats,
    pub representative: usize,
}

pub fn evaluate(songs: &[Song], span: &SpanConfig) -> Result<EvalReport> {
    let reports = metrics::evaluate_songs(songs, span)?;
    let stats = MetricStats::from_reports(&reports)?;
    let representative = metrics::representative_song(&reports, &stats.centroid())?;
    Ok(EvalReport {
        span: *span,
        reports,
        stats,
        representative,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Value> {
    let span = SpanConfig::new(args.span, args.lower_bound, args.upper_bound)?;
    let songs = match (&args.songs, &args.checkpoint) {
        (Some(path), _) => load_songs(Some(path))?,
        (None, Some(ckpt)) => {
            let songs = generate(&load_model(ckpt)?, &args.sample)?;
            write_songs(&args.output_dir, &songs)?;
            songs
        }
        (None, None) => return Err(CliError::Usage("pass --songs or --checkpoint".to_string())),
    };
    let report = evaluate(&songs, &span)?;
    create_dir(&args.output_dir)?;
    write(&args.output_dir.join("reports.json"), to_json_bytes(&report))?;
    write(&args.output_dir.join("stats.json"), to_json_bytes(&report.stats))?;
    write(&args.output_dir.join("stats.csv"), report.stats.to_csv())?;
    write(
        &args.output_dir.join("representative.mid"),
        midi::write_midi(&songs[report.representative]),
    )?;
    Ok(json!({
        "count": songs.len(),
        "stats": report.stats,
        "representative": report.representative,
        "representative_song": songs[report.representative].pitches(),
        "output_dir": args.output_dir,
    }))
}
