//! Melody representations: absolute MIDI pitches and transposition-free intervals.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Highest valid MIDI note number.
pub const MAX_PITCH: i32 = 127;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SongError {
    #[error("song is empty")]
    Empty,
    #[error("song has {len} notes, at least {min} required")]
    SongTooShort { len: usize, min: usize },
    #[error("pitch {pitch} at position {position} is outside 0..=127")]
    PitchOutOfRange { position: usize, pitch: i32 },
    #[error("interval {value} at position {position} is outside -127..=127")]
    IntervalOutOfRange { position: usize, value: i32 },
}

/// An ordered, non-empty sequence of MIDI note numbers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i32>", into = "Vec<i32>")]
pub struct Song {
    notes: Vec<u8>,
}

impl Song {
    pub fn new(notes: Vec<u8>) -> Result<Self, SongError> {
        if notes.is_empty() {
            return Err(SongError::Empty);
        }
        if let Some((position, &pitch)) = notes.iter().enumerate().find(|(_, &n)| n > 127) {
            return Err(SongError::PitchOutOfRange {
                position,
                pitch: pitch as i32,
            });
        }
        Ok(Self { notes })
    }

    /// Builds a song from wide integers, rejecting anything outside the MIDI range.
    pub fn from_pitches(pitches: &[i32]) -> Result<Self, SongError> {
        let mut notes = Vec::with_capacity(pitches.len());
        for (position, &pitch) in pitches.iter().enumerate() {
            if !(0..=MAX_PITCH).contains(&pitch) {
                return Err(SongError::PitchOutOfRange { position, pitch });
            }
            notes.push(pitch as u8);
        }
        Self::new(notes)
    }

    pub fn notes(&self) -> &[u8] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    /// Always false; kept for the `len`/`is_empty` pairing.
    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn first(&self) -> u8 {
        self.notes[0]
    }

    pub fn last(&self) -> u8 {
        self.notes[self.notes.len() - 1]
    }

    pub fn min_pitch(&self) -> u8 {
        *self.notes.iter().min().expect("non-empty")
    }

    pub fn max_pitch(&self) -> u8 {
        *self.notes.iter().max().expect("non-empty")
    }

    /// Shifts every note by `semitones`.
    pub fn transpose(&self, semitones: i32) -> Result<Self, SongError> {
        let shifted: Vec<i32> = self.notes.iter().map(|&n| n as i32 + semitones).collect();
        Self::from_pitches(&shifted)
    }

    pub fn pitches(&self) -> Vec<i32> {
        self.notes.iter().map(|&n| n as i32).collect()
    }

    pub fn into_notes(self) -> Vec<u8> {
        self.notes
    }
}

impl TryFrom<Vec<i32>> for Song {
    type Error = SongError;

    fn try_from(value: Vec<i32>) -> Result<Self, Self::Error> {
        Self::from_pitches(&value)
    }
}

impl From<Song> for Vec<i32> {
    fn from(song: Song) -> Self {
        song.pitches()
    }
}

impl fmt::Display for Song {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, n) in self.notes.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "]")
    }
}

/// Signed semitone deltas between consecutive notes of a song.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct IntervalSequence {
    intervals: Vec<i8>,
}

impl IntervalSequence {
    pub fn new(values: &[i32]) -> Result<Self, SongError> {
        let mut intervals = Vec::with_capacity(values.len());
        for (position, &value) in values.iter().enumerate() {
            if !(-MAX_PITCH..=MAX_PITCH).contains(&value) {
                return Err(SongError::IntervalOutOfRange { position, value });
            }
            intervals.push(value as i8);
        }
        Ok(Self { intervals })
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn values(&self) -> Vec<i32> {
        self.intervals.iter().map(|&d| d as i32).collect()
    }
}

/// Converts a song into its interval array: `result[i] = song[i+1] - song[i]`.
pub fn song_to_interval(song: &Song) -> Result<IntervalSequence, SongError> {
    if song.len() < 2 {
        return Err(SongError::SongTooShort {
            len: song.len(),
            min: 2,
        });
    }
    let intervals = song
        .notes()
        .windows(2)
        .map(|w| (w[1] as i16 - w[0] as i16) as i8)
        .collect();
    Ok(IntervalSequence { intervals })
}

/// Rebuilds a song from its first note and the interval array.
pub fn interval_to_song(first_note: u8, intervals: &IntervalSequence) -> Result<Song, SongError> {
    if first_note as i32 > MAX_PITCH {
        return Err(SongError::PitchOutOfRange {
            position: 0,
            pitch: first_note as i32,
        });
    }
    let mut notes = Vec::with_capacity(intervals.len() + 1);
    let mut current = first_note as i32;
    notes.push(first_note);
    for (i, &delta) in intervals.as_slice().iter().enumerate() {
        current += delta as i32;
        if !(0..=MAX_PITCH).contains(&current) {
            return Err(SongError::PitchOutOfRange {
                position: i + 1,
                pitch: current,
            });
        }
        notes.push(current as u8);
    }
    Song::new(notes)
}
