//! Melody generation with gated recurrent networks.
//!
//! The crate covers the whole desk-scale pipeline: turning songs into
//! transposition-aware training corpora, training stacked LSTM/UGRNN models
//! with learned embeddings, sampling new melodies from a seed, reading and
//! writing MIDI, and scoring melodies with three tonality metrics.

pub mod dataset;
pub mod metrics;
pub mod midi;
pub mod rnn;
pub mod song;
pub mod tensor;

pub use dataset::{DatasetVariant, TrainingCorpus, Vocabulary};
pub use metrics::{MetricReport, MetricStats, SpanConfig};
pub use song::{IntervalSequence, Song};
