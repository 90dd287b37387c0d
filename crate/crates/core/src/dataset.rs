//! Corpus cleaning, the transposition-aware dataset transformations and
//! assembly of shift-by-one training corpora.

use crate::song::{song_to_interval, Song, SongError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Songs must have strictly more notes than this to survive cleaning.
pub const MIN_CLEAN_LEN: usize = 3;

const CENTRAL_C: i32 = 60;
const DB12_COPIES: usize = 12;

static BUNDLED_CORPUS: &str = include_str!("../data/mini_corpus.jsonl");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Song(#[from] SongError),
    #[error("transposing by {shift:+} semitones leaves the MIDI range: {source}")]
    TranspositionOutOfRange { shift: i32, source: SongError },
    #[error("corpus has fewer than 2 tokens")]
    EmptyCorpus,
    #[error("line {line}: {message}")]
    BadLine { line: usize, message: String },
    #[error("token {0} is not in the vocabulary")]
    UnknownToken(i32),
    #[error("vocabulary tokens must be strictly ascending")]
    UnsortedVocabulary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetVariant {
    Control,
    Interval,
    Db12,
}

impl DatasetVariant {
    pub const ALL: [DatasetVariant; 3] = [Self::Control, Self::Interval, Self::Db12];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Control => "control",
            Self::Interval => "interval",
            Self::Db12 => "db12",
        }
    }

    /// True when tokens are signed semitone deltas rather than pitches.
    pub fn uses_intervals(self) -> bool {
        matches!(self, Self::Interval)
    }
}

impl fmt::Display for DatasetVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "control" => Ok(Self::Control),
            "interval" | "intervals" => Ok(Self::Interval),
            "db12" => Ok(Self::Db12),
            other => Err(format!(
                "unknown dataset variant `{other}` (expected control, interval or db12)"
            )),
        }
    }
}

/// Keeps the songs with more than three notes, preserving order.
pub fn clean_corpus(songs: &[Song]) -> Vec<Song> {
    songs
        .iter()
        .filter(|s| s.len() > MIN_CLEAN_LEN)
        .cloned()
        .collect()
}

/// How many copies are shifted down and up, centered on middle C.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Db12Plan {
    pub middle_point: i32,
    pub central_c_gap: i32,
    pub down: usize,
    pub up: usize,
}

impl Db12Plan {
    pub fn for_song(song: &Song) -> Self {
        let min = song.min_pitch() as i32;
        let max = song.max_pitch() as i32;
        let middle_point = (max - min) / 2 + min;
        let central_c_gap = CENTRAL_C - middle_point;
        let remaining = 11 - central_c_gap.abs();

        let (down, up) = if remaining >= 0 {
            let mut up = (remaining + 1) / 2;
            let mut down = remaining - up;
            if central_c_gap < 0 {
                down += central_c_gap.abs();
            } else {
                up += central_c_gap;
            }
            (down, up)
        } else if central_c_gap <= 0 {
            (11, 0)
        } else {
            (0, 11)
        };

        Self {
            middle_point,
            central_c_gap,
            down: down as usize,
            up: up as usize,
        }
    }

    /// Semitone offsets in output order: the original, then -1..-down, then +1..+up.
    pub fn shifts(&self) -> Vec<i32> {
        let mut shifts = Vec::with_capacity(DB12_COPIES);
        shifts.push(0);
        shifts.extend((1..=self.down as i32).map(|i| -i));
        shifts.extend(1..=self.up as i32);
        shifts
    }
}

/// Spreads one song over twelve transpositions around middle C.
pub fn song_to_db12(song: &Song) -> Result<Vec<Song>, DatasetError> {
    Db12Plan::for_song(song)
        .shifts()
        .into_iter()
        .map(|shift| {
            song.transpose(shift)
                .map_err(|source| DatasetError::TranspositionOutOfRange { shift, source })
        })
        .collect()
}

/// Dense ids for the distinct tokens of a dataset, ascending by token value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<i32>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<i32>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = DatasetError;

    fn try_from(repr: VocabularyRepr) -> Result<Self, Self::Error> {
        Self::from_sorted(repr.tokens)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self { tokens: v.tokens }
    }
}

impl Vocabulary {
    pub fn from_sorted(tokens: Vec<i32>) -> Result<Self, DatasetError> {
        if tokens.is_empty() {
            return Err(DatasetError::EmptyCorpus);
        }
        if tokens.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DatasetError::UnsortedVocabulary);
        }
        Ok(Self { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: i32) -> Option<usize> {
        self.tokens.binary_search(&token).ok()
    }

    pub fn token(&self, id: usize) -> Option<i32> {
        self.tokens.get(id).copied()
    }

    pub fn tokens(&self) -> &[i32] {
        &self.tokens
    }

    pub fn encode(&self, stream: &[i32]) -> Result<Vec<usize>, DatasetError> {
        stream
            .iter()
            .map(|&t| self.id(t).ok_or(DatasetError::UnknownToken(t)))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Option<Vec<i32>> {
        ids.iter().map(|&id| self.token(id)).collect()
    }
}

pub fn build_vocabulary<S: AsRef<[i32]>>(streams: &[S]) -> Result<Vocabulary, DatasetError> {
    let mut tokens: Vec<i32> = streams
        .iter()
        .flat_map(|s| s.as_ref().iter().copied())
        .collect();
    tokens.sort_unstable();
    tokens.dedup();
    if tokens.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    Ok(Vocabulary { tokens })
}

/// Shift-by-one token-id arrays: `y[i] == x[i + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingCorpus {
    pub variant: DatasetVariant,
    pub vocabulary: Vocabulary,
    pub x: Vec<usize>,
    pub y: Vec<usize>,
}

impl TrainingCorpus {
    pub fn from_stream(
        variant: DatasetVariant,
        stream: &[i32],
        vocabulary: Vocabulary,
    ) -> Result<Self, DatasetError> {
        if stream.len() < 2 {
            return Err(DatasetError::EmptyCorpus);
        }
        let ids = vocabulary.encode(stream)?;
        Ok(Self {
            variant,
            vocabulary,
            x: ids[..ids.len() - 1].to_vec(),
            y: ids[1..].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// The full token-id stream, `x` followed by the final target.
    pub fn stream_ids(&self) -> Vec<usize> {
        let mut ids = self.x.clone();
        if let Some(&last) = self.y.last() {
            ids.push(last);
        }
        ids
    }
}

/// The concatenated raw token stream for one dataset variant, in (song, shift) order.
pub fn token_stream(songs: &[Song], variant: DatasetVariant) -> Result<Vec<i32>, DatasetError> {
    let mut stream = Vec::new();
    for song in songs {
        match variant {
            DatasetVariant::Control => stream.extend(song.pitches()),
            DatasetVariant::Interval => stream.extend(song_to_interval(song)?.values()),
            DatasetVariant::Db12 => {
                for copy in song_to_db12(song)? {
                    stream.extend(copy.pitches());
                }
            }
        }
    }
    Ok(stream)
}

pub fn build_corpus(
    songs: &[Song],
    variant: DatasetVariant,
) -> Result<TrainingCorpus, DatasetError> {
    let stream = token_stream(songs, variant)?;
    if stream.len() < 2 {
        return Err(DatasetError::EmptyCorpus);
    }
    let vocabulary = build_vocabulary(&[&stream[..]])?;
    TrainingCorpus::from_stream(variant, &stream, vocabulary)
}

/// Parses JSON Lines, one song per line as an integer array. Blank lines are skipped.
pub fn parse_songs_jsonl(text: &str) -> Result<Vec<Song>, DatasetError> {
    let mut songs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let pitches: Vec<i32> = serde_json::from_str(line).map_err(|e| DatasetError::BadLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        let song = Song::from_pitches(&pitches).map_err(|e| DatasetError::BadLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        songs.push(song);
    }
    Ok(songs)
}

pub fn songs_to_jsonl(songs: &[Song]) -> String {
    let mut out = String::new();
    for song in songs {
        out.push_str(&song.to_string());
        out.push('\n');
    }
    out
}

/// The bundled mini-corpus of public-domain folk and nursery melodies.
pub fn bundled_corpus() -> Vec<Song> {
    parse_songs_jsonl(BUNDLED_CORPUS).expect("bundled corpus is well-formed")
}
