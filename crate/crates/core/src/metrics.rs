//! Tonality metrics for single-voice melodies.
//!
//! Three span-based measures are computed over every melody of at least
//! [`MIN_EVAL_LEN`] notes:
//!
//! * CMM (conjunct melodic motion): mean absolute semitone step.
//! * LM (limited macroharmony): mean penalty of sliding spans whose count of
//!   distinct notes falls outside `[lb, ub]`.
//! * CENTR (centricity): mean share of the most frequent note per span.
//!
//! Notes in different octaves are distinct; there is no pitch-class folding.

use crate::song::Song;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Melodies shorter than this are not evaluated.
pub const MIN_EVAL_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("song{} has {len} notes, metrics need at least {min}", index.map(|i| format!(" {i}")).unwrap_or_default())]
    SongTooShort {
        index: Option<usize>,
        len: usize,
        min: usize,
    },
    #[error("span has {len} notes, expected {expected}")]
    BadSpanLength { len: usize, expected: usize },
    #[error("invalid span config: need 1 <= lb <= ub <= n, got n={n} lb={lb} ub={ub}")]
    BadSpanConfig { n: usize, lb: usize, ub: usize },
    #[error("no reports to choose from")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanConfig {
    pub n: usize,
    pub lb: usize,
    pub ub: usize,
}

impl Default for SpanConfig {
    fn default() -> Self {
        Self { n: 12, lb: 5, ub: 8 }
    }
}

impl SpanConfig {
    pub fn new(n: usize, lb: usize, ub: usize) -> Result<Self, MetricError> {
        if lb == 0 || lb > ub || ub > n {
            return Err(MetricError::BadSpanConfig { n, lb, ub });
        }
        Ok(Self { n, lb, ub })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cmm: f64,
    pub lm: f64,
    pub centr: f64,
}

impl MetricReport {
    pub fn distance(&self, other: &MetricReport) -> f64 {
        ((self.cmm - other.cmm).powi(2)
            + (self.lm - other.lm).powi(2)
            + (self.centr - other.centr).powi(2))
        .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Arithmetic mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub count: usize,
    pub cmm: MeanStd,
    pub lm: MeanStd,
    pub centr: MeanStd,
}

impl MetricStats {
    pub fn from_reports(reports: &[MetricReport]) -> Result<Self, MetricError> {
        if reports.is_empty() {
            return Err(MetricError::EmptyInput);
        }
        let pick = |f: fn(&MetricReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
        Ok(Self {
            count: reports.len(),
            cmm: MeanStd::of(&pick(|r| r.cmm)),
            lm: MeanStd::of(&pick(|r| r.lm)),
            centr: MeanStd::of(&pick(|r| r.centr)),
        })
    }

    pub fn centroid(&self) -> MetricReport {
        MetricReport {
            cmm: self.cmm.mean,
            lm: self.lm.mean,
            centr: self.centr.mean,
        }
    }

    /// `metric,mean,std` rows, one per metric.
    pub fn to_csv(&self) -> String {
        format!(
            "metric,mean,std\ncmm,{},{}\nlm,{},{}\ncentr,{},{}\n",
            self.cmm.mean, self.cmm.std, self.lm.mean, self.lm.std, self.centr.mean, self.centr.std
        )
    }
}

/// Number of sliding spans of size `n` over a melody of `song_len` notes.
pub fn span_count(song_len: usize, n: usize) -> usize {
    if song_len <= n {
        1
    } else {
        song_len - n + 1
    }
}

fn require_len(song: &Song) -> Result<(), MetricError> {
    if song.len() < MIN_EVAL_LEN {
        return Err(MetricError::SongTooShort {
            index: None,
            len: song.len(),
            min: MIN_EVAL_LEN,
        });
    }
    Ok(())
}

fn spans<'a>(notes: &'a [u8], n: usize) -> impl Iterator<Item = &'a [u8]> + 'a {
    let count = span_count(notes.len(), n);
    (0..count).map(move |j| &notes[j..(j + n).min(notes.len())])
}

fn distinct_count(span: &[u8]) -> usize {
    let mut seen = [false; 128];
    span.iter().filter(|&&n| !std::mem::replace(&mut seen[n as usize], true)).count()
}

fn max_frequency(span: &[u8]) -> usize {
    let mut counts = [0usize; 128];
    for &n in span {
        counts[n as usize] += 1;
    }
    counts.into_iter().max().unwrap_or(0)
}

pub fn cmm(song: &Song) -> Result<f64, MetricError> {
    require_len(song)?;
    let total: u32 = song
        .notes()
        .windows(2)
        .map(|w| (w[1] as i32 - w[0] as i32).unsigned_abs())
        .sum();
    Ok(total as f64 / (song.len() - 1) as f64)
}

fn llm_of_count(distinct: usize, cfg: &SpanConfig) -> f64 {
    let penalty = if distinct < cfg.lb {
        cfg.lb - distinct + 1
    } else if distinct > cfg.ub {
        distinct - cfg.ub + 1
    } else {
        1
    };
    penalty as f64
}

/// Local macroharmony penalty of one span of exactly `cfg.n` notes.
pub fn llm(span: &[u8], cfg: &SpanConfig) -> Result<f64, MetricError> {
    if span.len() != cfg.n {
        return Err(MetricError::BadSpanLength {
            len: span.len(),
            expected: cfg.n,
        });
    }
    Ok(llm_of_count(distinct_count(span), cfg))
}

pub fn lm(song: &Song, cfg: &SpanConfig) -> Result<f64, MetricError> {
    require_len(song)?;
    let count = span_count(song.len(), cfg.n);
    let total: f64 = spans(song.notes(), cfg.n)
        .map(|s| llm_of_count(distinct_count(s), cfg))
        .sum();
    Ok(total / count as f64)
}

pub fn centricity(song: &Song, cfg: &SpanConfig) -> Result<f64, MetricError> {
    require_len(song)?;
    let count = span_count(song.len(), cfg.n);
    let total: f64 = spans(song.notes(), cfg.n)
        .map(|s| max_frequency(s) as f64 / cfg.n as f64)
        .sum();
    Ok(total / count as f64)
}

pub fn evaluate_song(song: &Song, cfg: &SpanConfig) -> Result<MetricReport, MetricError> {
    Ok(MetricReport {
        cmm: cmm(song)?,
        lm: lm(song, cfg)?,
        centr: centricity(song, cfg)?,
    })
}

/// Evaluates every song, tagging a too-short failure with the song's index.
pub fn evaluate_songs(songs: &[Song], cfg: &SpanConfig) -> Result<Vec<MetricReport>, MetricError> {
    songs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            evaluate_song(s, cfg).map_err(|e| match e {
                MetricError::SongTooShort { len, min, .. } => MetricError::SongTooShort {
                    index: Some(i),
                    len,
                    min,
                },
                other => other,
            })
        })
        .collect()
}

pub fn dataset_stats(songs: &[Song], cfg: &SpanConfig) -> Result<MetricStats, MetricError> {
    MetricStats::from_reports(&evaluate_songs(songs, cfg)?)
}

/// Index of the report closest to `centroid` in raw Euclidean distance; lowest index wins ties.
pub fn representative_song(
    reports: &[MetricReport],
    centroid: &MetricReport,
) -> Result<usize, MetricError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in reports.iter().enumerate() {
        let d = r.distance(centroid);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i).ok_or(MetricError::EmptyInput)
}
