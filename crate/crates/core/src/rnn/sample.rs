use super::model::ModelState;
use super::RnnError;
use crate::song::{interval_to_song, song_to_interval, IntervalSequence, Song, MAX_PITCH};
use crate::tensor::{softmax, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// C4-D4-E4-D4.
pub const DEFAULT_SEED: [u8; 4] = [60, 62, 64, 62];
pub const DEFAULT_GENERATED: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum SampleMode {
    /// Always take the most probable token.
    #[default]
    Greedy,
    /// Draw from `softmax(logits / τ)`.
    Temperature(f64),
}

/// Picks a token id from logits.
pub fn choose<R: Rng + ?Sized>(logits: &[f64], mode: SampleMode, rng: &mut R) -> Result<usize, RnnError> {
    match mode {
        SampleMode::Greedy => Ok(argmax(logits)),
        SampleMode::Temperature(tau) => {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(RnnError::BadTemperature(tau));
            }
            let scaled: Vec<f64> = logits.iter().map(|z| z / tau).collect();
            let probs = softmax(&scaled);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return Ok(i);
                }
            }
            Ok(probs.len() - 1)
        }
    }
}

/// First index of the maximum.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Warms the network up on `seed`, then generates `n` further notes.
///
/// Interval models consume the seed's intervals and their output is rebuilt
/// from the seed's last note. The returned song starts with the seed.
pub fn sample(
    model: &ModelState,
    seed: &Song,
    n: usize,
    mode: SampleMode,
    rng_seed: u64,
) -> Result<Song, RnnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_with_rng(model, seed, n, mode, &mut rng)
}

/// Independent generator for song `index` of a batch drawn under `master_seed`.
pub fn song_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

pub fn sample_with_rng<R: Rng + ?Sized>(
    model: &ModelState,
    seed: &Song,
    n: usize,
    mode: SampleMode,
    rng: &mut R,
) -> Result<Song, RnnError> {
    if n == 0 {
        return Ok(seed.clone());
    }
    let uses_intervals = model.config.variant.uses_intervals();
    let seed_tokens = if uses_intervals {
        song_to_interval(seed)
            .map_err(|_| RnnError::SeedTooShort(seed.len()))?
            .values()
    } else {
        seed.pitches()
    };
    let seed_ids = seed_tokens
        .iter()
        .map(|&t| model.vocabulary.id(t).ok_or(RnnError::UnknownSeedToken(t)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut tape = Tape::new();
    let taped = model.load_onto(&mut tape);
    let init = model.zero_states(1);
    let mut states: Vec<_> = init
        .iter()
        .map(|s| super::cell::TapedState::load(&mut tape, s))
        .collect();

    // phase 1: seed only updates the state
    let mut logits = None;
    for &id in &seed_ids {
        logits = Some(taped.step(&mut tape, &[id], &mut states)?);
    }

    // phase 2: feed each choice back in
    let mut generated = Vec::with_capacity(n);
    for step in 0..n {
        let last = logits.expect("seed is non-empty");
        let id = choose(tape.value(last).data(), mode, rng)?;
        generated.push(model.vocabulary.token(id).ok_or(RnnError::BadToken {
            id,
            vocab: model.vocab_size(),
        })?);
        if step + 1 < n {
            logits = Some(taped.step(&mut tape, &[id], &mut states)?);
        }
    }

    if uses_intervals {
        let intervals = IntervalSequence::new(&generated)?;
        let tail = interval_to_song(seed.last(), &intervals)?;
        let mut notes = seed.notes().to_vec();
        notes.extend_from_slice(&tail.notes()[1..]);
        Ok(Song::new(notes)?)
    } else {
        let mut pitches = seed.pitches();
        for &t in &generated {
            if !(0..=MAX_PITCH).contains(&t) {
                return Err(RnnError::Song(crate::song::SongError::PitchOutOfRange {
                    position: pitches.len(),
                    pitch: t,
                }));
            }
            pitches.push(t);
        }
        Ok(Song::from_pitches(&pitches)?)
    }
}
