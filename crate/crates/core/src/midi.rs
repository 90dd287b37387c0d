//! Standard MIDI File input and output for single-voice melodies.
//!
//! Reading accepts format 0 and 1 files and keeps only the pitch order of
//! sounding notes. Writing always produces a format-0 file in which every note
//! is a quarter note at 120 BPM.

use crate::song::{Song, SongError};
use thiserror::Error;

pub const TICKS_PER_QUARTER: u16 = 480;
/// Microseconds per quarter note at 120 BPM.
pub const TEMPO_120_BPM: u32 = 500_000;
pub const NOTE_VELOCITY: u8 = 90;

const MAX_VLQ: u32 = 0x0FFF_FFFF;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MidiError {
    #[error("malformed MIDI file at byte {offset}: {reason}")]
    MalformedFile { offset: usize, reason: String },
    #[error("unsupported MIDI format {0}")]
    UnsupportedFormat(u16),
    #[error("polyphony detected: note {pitch} starts at tick {tick} while another note sounds")]
    PolyphonyDetected { tick: u64, pitch: u8 },
    #[error("file contains no notes")]
    NoNotes,
    #[error(transparent)]
    Song(#[from] SongError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    NoteOn { pitch: u8, velocity: u8 },
    NoteOff { pitch: u8, velocity: u8 },
    /// Microseconds per quarter note.
    Tempo(u32),
    EndOfTrack,
    /// Any other channel, meta or system-exclusive event.
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MidiEvent {
    pub delta_ticks: u32,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MidiHeader {
    pub format: u16,
    pub tracks: u16,
    pub division: u16,
}

pub fn encode_vlq(value: u32, out: &mut Vec<u8>) {
    assert!(value <= MAX_VLQ, "VLQ value {value} exceeds 28 bits");
    let mut groups = [0u8; 4];
    let mut n = 0;
    let mut v = value;
    loop {
        groups[n] = (v & 0x7F) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        let continuation = if i > 0 { 0x80 } else { 0 };
        out.push(groups[i] | continuation);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn err(&self, reason: impl Into<String>) -> MidiError {
        MidiError::MalformedFile {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| self.err("unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("needs {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, MidiError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, MidiError> {
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7F) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(self.err("variable-length quantity longer than 4 bytes"))
    }

    fn data_byte(&mut self) -> Result<u8, MidiError> {
        let b = self.u8()?;
        if b & 0x80 != 0 {
            self.pos -= 1;
            return Err(self.err(format!("expected data byte, found status 0x{b:02X}")));
        }
        Ok(b)
    }
}

/// Decodes a single variable-length quantity, returning the value and bytes consumed.
pub fn decode_vlq(bytes: &[u8]) -> Result<(u32, usize), MidiError> {
    let mut r = Reader::new(bytes);
    let v = r.vlq()?;
    Ok((v, r.pos))
}

fn parse_track(data: &[u8], base: usize) -> Result<Vec<MidiEvent>, MidiError> {
    let mut r = Reader::new(data);
    let mut events = Vec::new();
    let mut running: Option<u8> = None;
    let rebase = |e: MidiError| match e {
        MidiError::MalformedFile { offset, reason } => MidiError::MalformedFile {
            offset: offset + base,
            reason,
        },
        other => other,
    };

    while !r.at_end() {
        let delta_ticks = r.vlq().map_err(rebase)?;
        let first = r.u8().map_err(rebase)?;
        let status = if first & 0x80 != 0 {
            first
        } else {
            r.pos -= 1;
            running.ok_or_else(|| rebase(r.err("data byte without running status")))?
        };

        let kind = match status {
            0xFF => {
                running = None;
                let meta = r.u8().map_err(rebase)?;
                let len = r.vlq().map_err(rebase)? as usize;
                let payload = r.take(len).map_err(rebase)?;
                match meta {
                    0x2F => EventKind::EndOfTrack,
                    0x51 if len == 3 => EventKind::Tempo(
                        ((payload[0] as u32) << 16) | ((payload[1] as u32) << 8) | payload[2] as u32,
                    ),
                    _ => EventKind::Other,
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = r.vlq().map_err(rebase)? as usize;
                r.take(len).map_err(rebase)?;
                EventKind::Other
            }
            0xF1..=0xFE => {
                return Err(rebase(
                    r.err(format!("system status 0x{status:02X} inside a track")),
                ))
            }
            _ => {
                running = Some(status);
                let a = r.data_byte().map_err(rebase)?;
                match status & 0xF0 {
                    0x80 => EventKind::NoteOff {
                        pitch: a,
                        velocity: r.data_byte().map_err(rebase)?,
                    },
                    0x90 => {
                        let velocity = r.data_byte().map_err(rebase)?;
                        if velocity == 0 {
                            EventKind::NoteOff { pitch: a, velocity }
                        } else {
                            EventKind::NoteOn { pitch: a, velocity }
                        }
                    }
                    0xA0 | 0xB0 | 0xE0 => {
                        r.data_byte().map_err(rebase)?;
                        EventKind::Other
                    }
                    _ => EventKind::Other, // program change, channel pressure
                }
            }
        };
        events.push(MidiEvent { delta_ticks, kind });
        if kind == EventKind::EndOfTrack {
            break;
        }
    }
    Ok(events)
}

/// Parses the header and every track chunk into event lists.
pub fn parse_events(bytes: &[u8]) -> Result<(MidiHeader, Vec<Vec<MidiEvent>>), MidiError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != b"MThd" {
        return Err(MidiError::MalformedFile {
            offset: 0,
            reason: "missing MThd header".into(),
        });
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(r.err("header chunk shorter than 6 bytes"));
    }
    let header = MidiHeader {
        format: r.u16()?,
        tracks: r.u16()?,
        division: r.u16()?,
    };
    r.take(header_len - 6)?;
    if header.format > 1 {
        return Err(MidiError::UnsupportedFormat(header.format));
    }

    let mut tracks = Vec::new();
    while !r.at_end() && tracks.len() < header.tracks as usize {
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        let start = r.pos;
        let body = r.take(len)?;
        if id == b"MTrk" {
            tracks.push(parse_track(body, start)?);
        }
    }
    if tracks.len() != header.tracks as usize {
        return Err(r.err(format!(
            "header declares {} tracks, found {}",
            header.tracks,
            tracks.len()
        )));
    }
    Ok((header, tracks))
}

/// Extracts the time-ordered pitches of a monophonic MIDI file.
pub fn parse_midi(bytes: &[u8]) -> Result<Song, MidiError> {
    let (_, tracks) = parse_events(bytes)?;

    // (tick, on-after-off, track, index, pitch, is_on)
    let mut notes = Vec::new();
    for (track, events) in tracks.iter().enumerate() {
        let mut tick = 0u64;
        for (index, e) in events.iter().enumerate() {
            tick += e.delta_ticks as u64;
            match e.kind {
                EventKind::NoteOn { pitch, .. } => notes.push((tick, 1u8, track, index, pitch, true)),
                EventKind::NoteOff { pitch, .. } => notes.push((tick, 0u8, track, index, pitch, false)),
                _ => {}
            }
        }
    }
    notes.sort_unstable();

    let mut sounding = [false; 128];
    let mut active = 0usize;
    let mut pitches = Vec::new();
    for (tick, _, _, _, pitch, is_on) in notes {
        let slot = &mut sounding[pitch as usize];
        if is_on {
            if active > 0 {
                return Err(MidiError::PolyphonyDetected { tick, pitch });
            }
            *slot = true;
            active += 1;
            pitches.push(pitch);
        } else if *slot {
            *slot = false;
            active -= 1;
        }
    }
    if pitches.is_empty() {
        return Err(MidiError::NoNotes);
    }
    Ok(Song::new(pitches)?)
}

/// The event list `write_midi` emits for a song.
pub fn song_events(song: &Song) -> Vec<MidiEvent> {
    let mut events = Vec::with_capacity(2 * song.len() + 2);
    events.push(MidiEvent {
        delta_ticks: 0,
        kind: EventKind::Tempo(TEMPO_120_BPM),
    });
    for &pitch in song.notes() {
        events.push(MidiEvent {
            delta_ticks: 0,
            kind: EventKind::NoteOn {
                pitch,
                velocity: NOTE_VELOCITY,
            },
        });
        events.push(MidiEvent {
            delta_ticks: TICKS_PER_QUARTER as u32,
            kind: EventKind::NoteOff { pitch, velocity: 0 },
        });
    }
    events.push(MidiEvent {
        delta_ticks: 0,
        kind: EventKind::EndOfTrack,
    });
    events
}

fn encode_events(events: &[MidiEvent]) -> Vec<u8> {
    let mut out = Vec::new();
    for e in events {
        encode_vlq(e.delta_ticks, &mut out);
        match e.kind {
            EventKind::NoteOn { pitch, velocity } => out.extend([0x90, pitch, velocity]),
            EventKind::NoteOff { pitch, velocity } => out.extend([0x80, pitch, velocity]),
            EventKind::Tempo(us) => {
                out.extend([0xFF, 0x51, 0x03]);
                out.extend(&us.to_be_bytes()[1..]);
            }
            EventKind::EndOfTrack => out.extend([0xFF, 0x2F, 0x00]),
            EventKind::Other => {}
        }
    }
    out
}

/// Serializes a song as a single-track, format-0 file of quarter notes at 120 BPM.
pub fn write_midi(song: &Song) -> Vec<u8> {
    let track = encode_events(&song_events(song));
    let mut out = Vec::with_capacity(22 + track.len());
    out.extend(b"MThd");
    out.extend(6u32.to_be_bytes());
    out.extend(0u16.to_be_bytes());
    out.extend(1u16.to_be_bytes());
    out.extend(TICKS_PER_QUARTER.to_be_bytes());
    out.extend(b"MTrk");
    out.extend((track.len() as u32).to_be_bytes());
    out.extend(track);
    out
}

/// Playing time in seconds, honoring the first tempo event (120 BPM if absent).
pub fn duration_seconds(bytes: &[u8]) -> Result<f64, MidiError> {
    let (header, tracks) = parse_events(bytes)?;
    let tempo = tracks
        .iter()
        .flatten()
        .find_map(|e| match e.kind {
            EventKind::Tempo(t) => Some(t),
            _ => None,
        })
        .unwrap_or(TEMPO_120_BPM);
    let ticks = tracks
        .iter()
        .map(|t| t.iter().map(|e| e.delta_ticks as u64).sum::<u64>())
        .max()
        .unwrap_or(0);
    Ok(ticks as f64 / header.division as f64 * tempo as f64 / 1e6)
}
