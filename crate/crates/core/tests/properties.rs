use cantus_core::dataset::{build_corpus, build_vocabulary, song_to_db12, token_stream, DatasetVariant, Db12Plan};
use cantus_core::metrics::{centricity, cmm, evaluate_song, llm, lm, SpanConfig};
use cantus_core::midi::{parse_events, parse_midi, write_midi, EventKind, TEMPO_120_BPM, TICKS_PER_QUARTER};
use cantus_core::song::{interval_to_song, song_to_interval, Song};
use proptest::prelude::*;
use std::collections::HashMap;

fn song_strategy(lo: u8, hi: u8, len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Song> {
    prop::collection::vec(lo..=hi, len).prop_map(|n| Song::new(n).unwrap())
}

/// Any shift of at most 11 semitones stays inside the MIDI range.
fn range_safe_song() -> impl Strategy<Value = Song> {
    song_strategy(24, 103, 2..=60)
}

// Straight-line recomputation of the metrics, written without the library's helpers.
mod oracle {
    use super::*;

    pub fn cmm(notes: &[u8]) -> f64 {
        let mut total = 0i64;
        for i in 1..notes.len() {
            total += (notes[i] as i64 - notes[i - 1] as i64).abs();
        }
        total as f64 / (notes.len() - 1) as f64
    }

    fn spans(notes: &[u8], n: usize) -> Vec<&[u8]> {
        if notes.len() <= n {
            vec![notes]
        } else {
            (0..=notes.len() - n).map(|s| &notes[s..s + n]).collect()
        }
    }

    pub fn lm(notes: &[u8], n: usize, lb: usize, ub: usize) -> f64 {
        let sp = spans(notes, n);
        let mut total = 0.0;
        for s in &sp {
            let mut seen = [false; 128];
            let mut d = 0usize;
            for &p in *s {
                if !seen[p as usize] {
                    seen[p as usize] = true;
                    d += 1;
                }
            }
            total += if d < lb {
                (lb - d) as f64 + 1.0
            } else if d > ub {
                (d - ub) as f64 + 1.0
            } else {
                1.0
            };
        }
        total / sp.len() as f64
    }

    pub fn centr(notes: &[u8], n: usize) -> f64 {
        let sp = spans(notes, n);
        let mut total = 0.0;
        for s in &sp {
            let mut counts: HashMap<u8, usize> = HashMap::new();
            for &p in *s {
                *counts.entry(p).or_default() += 1;
            }
            total += *counts.values().max().unwrap() as f64 / n as f64;
        }
        total / sp.len() as f64
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn interval_roundtrip(song in song_strategy(0, 127, 2..=80)) {
        let iv = song_to_interval(&song).unwrap();
        prop_assert_eq!(iv.len(), song.len() - 1);
        prop_assert_eq!(interval_to_song(song.first(), &iv).unwrap(), song);
    }

    #[test]
    fn intervals_ignore_transposition(song in range_safe_song(), k in -11i32..=11) {
        let moved = song.transpose(k).unwrap();
        prop_assert_eq!(song_to_interval(&moved).unwrap(), song_to_interval(&song).unwrap());
    }

    #[test]
    fn db12_copies_share_intervals(song in range_safe_song()) {
        let copies = song_to_db12(&song).unwrap();
        prop_assert_eq!(copies.len(), 12);
        let plan = Db12Plan::for_song(&song);
        prop_assert_eq!(plan.up + plan.down, 11);
        let original = song_to_interval(&song).unwrap();
        let mut shifts = Vec::new();
        for c in &copies {
            prop_assert_eq!(&song_to_interval(c).unwrap(), &original);
            shifts.push(c.first() as i32 - song.first() as i32);
        }
        let mut expected: Vec<i32> = (-(plan.down as i32)..=plan.up as i32).collect();
        shifts.sort_unstable();
        expected.sort_unstable();
        prop_assert_eq!(shifts, expected);
    }

    #[test]
    fn db12_stream_is_twelve_times_control(songs in prop::collection::vec(range_safe_song(), 1..6)) {
        let control = token_stream(&songs, DatasetVariant::Control).unwrap();
        let db12 = token_stream(&songs, DatasetVariant::Db12).unwrap();
        prop_assert_eq!(db12.len(), 12 * control.len());
    }

    #[test]
    fn corpus_pairs_are_shifted_by_one(songs in prop::collection::vec(song_strategy(40, 90, 4..=30), 1..5)) {
        for variant in [DatasetVariant::Control, DatasetVariant::Interval] {
            let corpus = build_corpus(&songs, variant).unwrap();
            prop_assert_eq!(&corpus.x[1..], &corpus.y[..corpus.len() - 1]);
            let stream = token_stream(&songs, variant).unwrap();
            prop_assert_eq!(corpus.len(), stream.len() - 1);
            prop_assert_eq!(corpus.vocabulary.decode(&corpus.stream_ids()).unwrap(), stream);
        }
    }

    #[test]
    fn vocabulary_is_a_sorted_bijection(tokens in prop::collection::vec(-20i32..=127, 1..200)) {
        let v = build_vocabulary(&[tokens.clone()]).unwrap();
        prop_assert!(v.tokens().windows(2).all(|w| w[0] < w[1]));
        for &t in &tokens {
            let id = v.id(t).unwrap();
            prop_assert_eq!(v.token(id), Some(t));
        }
        prop_assert_eq!(v.decode(&v.encode(&tokens).unwrap()).unwrap(), tokens);
    }

    #[test]
    fn metrics_match_brute_force(song in song_strategy(40, 90, 12..=40)) {
        let cfg = SpanConfig::default();
        let r = evaluate_song(&song, &cfg).unwrap();
        let n = song.notes();
        prop_assert!((r.cmm - oracle::cmm(n)).abs() <= 1e-12);
        prop_assert!((r.lm - oracle::lm(n, 12, 5, 8)).abs() <= 1e-12);
        prop_assert!((r.centr - oracle::centr(n, 12)).abs() <= 1e-12);
        prop_assert!(r.lm >= 1.0);
        // a mean of k copies of 1/12 can round just below 1/12
        prop_assert!(r.centr >= 1.0 / 12.0 - 1e-15 && r.centr <= 1.0 + 1e-15);
    }

    #[test]
    fn cmm_is_reversal_invariant(song in song_strategy(0, 127, 12..=50)) {
        let rev = Song::new(song.notes().iter().rev().copied().collect()).unwrap();
        prop_assert_eq!(cmm(&rev).unwrap(), cmm(&song).unwrap());
    }

    #[test]
    fn llm_is_one_exactly_inside_the_band(span in prop::collection::vec(55u8..70, 12)) {
        let cfg = SpanConfig::default();
        let mut distinct = span.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let v = llm(&span, &cfg).unwrap();
        prop_assert!(v >= 1.0);
        prop_assert_eq!(v == 1.0, (5..=8).contains(&distinct.len()));
    }

    #[test]
    fn midi_roundtrip(song in song_strategy(0, 127, 1..=120)) {
        let bytes = write_midi(&song);
        prop_assert_eq!(&bytes[..4], b"MThd");
        prop_assert_eq!(parse_midi(&bytes).unwrap(), song);
    }
}

#[test]
fn written_files_declare_tempo_and_division() {
    let song = Song::new(vec![60, 62, 64, 62]).unwrap();
    let (header, tracks) = parse_events(&write_midi(&song)).unwrap();
    assert_eq!((header.format, header.tracks, header.division), (0, 1, TICKS_PER_QUARTER));
    assert!(tracks[0]
        .iter()
        .any(|e| e.kind == EventKind::Tempo(TEMPO_120_BPM)));
}

#[test]
fn closed_form_metric_anchors() {
    let cfg = SpanConfig::default();
    let chromatic = Song::new((60..73).collect()).unwrap();
    assert_eq!(cmm(&chromatic).unwrap(), 1.0);
    assert_eq!(lm(&chromatic, &cfg).unwrap(), 5.0);
    assert_eq!(centricity(&chromatic, &cfg).unwrap(), 1.0 / 12.0);
    let flat = Song::new(vec![60; 12]).unwrap();
    let r = evaluate_song(&flat, &cfg).unwrap();
    assert_eq!((r.cmm, r.lm, r.centr), (0.0, 5.0, 1.0));
}
