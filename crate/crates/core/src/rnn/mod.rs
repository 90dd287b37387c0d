//! Stacked recurrent language models over melody tokens.

pub mod cell;
pub mod checkpoint;
pub mod model;
pub mod sample;
pub mod train;

pub use cell::{lstm_step, ugrnn_step, CellKind, CellParams, CellState, GateParams};
pub use checkpoint::{load_checkpoint, read_header, save_checkpoint, CheckpointHeader};
pub use model::{ModelConfig, ModelState, WindowResult, MAX_LAYERS};
pub use sample::{choose, sample, sample_with_rng, song_rng, SampleMode, DEFAULT_GENERATED, DEFAULT_SEED};
pub use train::{train, train_model, LaneLayout, LearningCurve, TrainConfig};

use crate::dataset::DatasetError;
use crate::song::SongError;
use crate::tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RnnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Song(#[from] SongError),
    #[error("token id {id} out of range for a vocabulary of {vocab}")]
    BadToken { id: usize, vocab: usize },
    #[error("corpus has {tokens} tokens but one batch window needs {needed}")]
    CorpusTooSmall { tokens: usize, needed: usize },
    #[error("seed token {0} is not in the model vocabulary")]
    UnknownSeedToken(i32),
    #[error("seed of {0} notes is too short for an interval model")]
    SeedTooShort(usize),
    #[error("layer count {0} outside 1..={MAX_LAYERS}")]
    BadLayerCount(usize),
    #[error("hidden and embedding sizes must be positive")]
    BadDimension,
    #[error("recurrent state does not match the model")]
    BadState,
    #[error("inputs and targets must be non-empty windows of equal shape")]
    BadWindow,
    #[error("expected {expected} parameters, got {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("corpus vocabulary differs from the model vocabulary")]
    VocabularyMismatch,
    #[error("LSTM step without a memory cell")]
    MissingCellState,
    #[error("expected {expected} parameters, found {found}")]
    WrongCellKind { expected: CellKind, found: CellKind },
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
