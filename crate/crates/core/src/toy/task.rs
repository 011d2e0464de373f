//! Synthetic duration task: each input token is "spoken" for a fixed number
//! of frames. Frames are the token's one-hot code plus the parity of its
//! input position; a stop frame closes every target.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Heldout,
    Stress,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Heldout, Split::Stress];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Heldout => "heldout",
            Split::Stress => "stress",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Heldout => 2,
            Split::Stress => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyTaskSpec {
    /// Regular tokens; ids `0..vocab_size`.
    pub vocab_size: usize,
    /// Adds a boundary token (no frames, id `vocab_size`) and a pause token
    /// (one pause frame, id `vocab_size + 1`).
    pub punctuation: bool,
    /// Chance that an interior position holds a punctuation token.
    pub punctuation_rate: f64,
    pub train_len_range: [usize; 2],
    pub stress_len_range: [usize; 2],
    pub train_size: usize,
    pub heldout_size: usize,
    pub stress_size: usize,
    /// Probability that a regular token's duration is jittered by ±1 frame.
    pub noise: f64,
    pub seed: u64,
}

impl Default for ToyTaskSpec {
    fn default() -> Self {
        Self {
            vocab_size: 10,
            punctuation: true,
            punctuation_rate: 0.05,
            train_len_range: [4, 12],
            stress_len_range: [24, 48],
            train_size: 1024,
            heldout_size: 64,
            stress_size: 32,
            noise: 0.0,
            seed: 0,
        }
    }
}

pub const MAX_DURATION: usize = 3;

impl ToyTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        let [a, b] = self.train_len_range;
        let [c, d] = self.stress_len_range;
        if a == 0 || a > b || c > d {
            return bad(format!("invalid length ranges {:?} / {:?}", self.train_len_range, self.stress_len_range));
        }
        if c <= b {
            return bad(format!("stress lengths must exceed training lengths ({c} <= {b})"));
        }
        if !(0.0..=1.0).contains(&self.punctuation_rate) || !(0.0..=1.0).contains(&self.noise) {
            return bad("punctuation_rate and noise must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// Number of distinct input tokens, punctuation included.
    pub fn token_count(&self) -> usize {
        self.vocab_size + if self.punctuation { 2 } else { 0 }
    }

    /// Width of a target frame without the stop flag.
    pub fn frame_dim(&self) -> usize {
        self.token_count() + 1
    }

    pub fn boundary_token(&self) -> Option<usize> {
        self.punctuation.then_some(self.vocab_size)
    }

    pub fn pause_token(&self) -> Option<usize> {
        self.punctuation.then_some(self.vocab_size + 1)
    }

    /// Frames per token: regular tokens in `1..=3` drawn from the seed,
    /// boundary 0, pause 1.
    pub fn duration_map(&self) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x6475_7261_7469_6f6e);
        let mut map: Vec<usize> = (0..self.vocab_size).map(|_| rng.random_range(1..=MAX_DURATION)).collect();
        if self.punctuation {
            map.push(0);
            map.push(1);
        }
        map
    }

    /// Input positions that map to no frames and are exempt from skip counts.
    pub fn exempt_positions(&self, tokens: &[usize]) -> Vec<usize> {
        let map = self.duration_map();
        tokens
            .iter()
            .enumerate()
            .filter(|(_, &t)| map[t] == 0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// One input sequence and its target frames. Each frame row holds
/// `frame_dim` values followed by the stop flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencePair {
    pub tokens: Vec<usize>,
    pub durations: Vec<usize>,
    pub frames: Vec<Vec<f64>>,
}

impl SequencePair {
    /// Frames without the trailing stop frame.
    pub fn content_frames(&self) -> &[Vec<f64>] {
        &self.frames[..self.frames.len() - 1]
    }
}

/// Frame for `token` at input position `position` (stop flag cleared).
pub fn token_frame(token: usize, position: usize, frame_dim: usize) -> Vec<f64> {
    let mut f = vec![0.0; frame_dim + 1];
    f[token] = 1.0;
    f[frame_dim - 1] = (position % 2) as f64;
    f
}

pub fn stop_frame(frame_dim: usize) -> Vec<f64> {
    let mut f = vec![0.0; frame_dim + 1];
    f[frame_dim] = 1.0;
    f
}

/// Builds the target for a token sequence with explicit durations.
pub fn build_pair(tokens: Vec<usize>, durations: Vec<usize>, frame_dim: usize) -> SequencePair {
    let mut frames = Vec::new();
    for (j, (&t, &d)) in tokens.iter().zip(&durations).enumerate() {
        for _ in 0..d {
            frames.push(token_frame(t, j, frame_dim));
        }
    }
    frames.push(stop_frame(frame_dim));
    SequencePair { tokens, durations, frames }
}

fn sample_tokens(spec: &ToyTaskSpec, rng: &mut ChaCha8Rng, len: usize) -> Vec<usize> {
    let mut tokens = Vec::with_capacity(len);
    for j in 0..len {
        let interior = j > 0 && j + 1 < len;
        let after_regular = tokens.last().is_some_and(|&t| t < spec.vocab_size);
        if spec.punctuation && interior && after_regular && rng.random_bool(spec.punctuation_rate) {
            tokens.push(spec.vocab_size + rng.random_range(0..2));
        } else {
            tokens.push(rng.random_range(0..spec.vocab_size));
        }
    }
    tokens
}

pub fn generate_dataset(spec: &ToyTaskSpec, split: Split) -> Result<Vec<SequencePair>> {
    spec.validate()?;
    let map = spec.duration_map();
    let (range, size) = match split {
        Split::Train => (spec.train_len_range, spec.train_size),
        Split::Heldout => (spec.train_len_range, spec.heldout_size),
        Split::Stress => (spec.stress_len_range, spec.stress_size),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ split.stream());
    let mut out = Vec::with_capacity(size);
    for _ in 0..size {
        let len = rng.random_range(range[0]..=range[1]);
        let tokens = sample_tokens(spec, &mut rng, len);
        let durations = tokens
            .iter()
            .map(|&t| {
                let d = map[t];
                if t < spec.vocab_size && spec.noise > 0.0 && rng.random_bool(spec.noise) {
                    if rng.random_bool(0.5) { (d + 1).min(MAX_DURATION) } else { d.saturating_sub(1).max(1) }
                } else {
                    d
                }
            })
            .collect();
        out.push(build_pair(tokens, durations, spec.frame_dim()));
    }
    Ok(out)
}

pub fn write_jsonl(pairs: &[SequencePair], mut w: impl Write) -> Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n").map_err(|e| Error::io("<dataset>", e))?;
    }
    Ok(())
}

pub fn read_jsonl(r: impl BufRead) -> Result<Vec<SequencePair>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: SequencePair =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("dataset line {}: {e}", k + 1)))?;
        if pair.frames.is_empty() || pair.tokens.len() != pair.durations.len() {
            return Err(Error::Parse(format!("dataset line {}: inconsistent pair", k + 1)));
        }
        out.push(pair);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_two_frames() {
        let p = build_pair(vec![0], vec![2], 4);
        assert_eq!(p.frames.len(), 3);
        assert_eq!(p.frames[0], p.frames[1]);
        assert_eq!(p.frames[2], stop_frame(4));
    }

    #[test]
    fn durations_one_three() {
        let p = build_pair(vec![0, 1], vec![1, 3], 4);
        let a = token_frame(0, 0, 4);
        let b = token_frame(1, 1, 4);
        assert_eq!(p.frames, vec![a, b.clone(), b.clone(), b, stop_frame(4)]);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ToyTaskSpec { seed: 5, ..Default::default() };
        for split in Split::ALL {
            let a = generate_dataset(&spec, split).unwrap();
            let b = generate_dataset(&spec, split).unwrap();
            let (mut x, mut y) = (Vec::new(), Vec::new());
            write_jsonl(&a, &mut x).unwrap();
            write_jsonl(&b, &mut y).unwrap();
            assert_eq!(x, y);
        }
        let other = generate_dataset(&ToyTaskSpec { seed: 6, ..Default::default() }, Split::Train).unwrap();
        assert_ne!(other, generate_dataset(&spec, Split::Train).unwrap());
    }

    #[test]
    fn splits_respect_length_ranges() {
        let spec = ToyTaskSpec::default();
        for p in generate_dataset(&spec, Split::Train).unwrap() {
            assert!((4..=12).contains(&p.tokens.len()));
        }
        for p in generate_dataset(&spec, Split::Stress).unwrap() {
            assert!((24..=48).contains(&p.tokens.len()));
        }
    }

    #[test]
    fn frames_follow_duration_map() {
        let spec = ToyTaskSpec::default();
        let map = spec.duration_map();
        assert_eq!(map[spec.boundary_token().unwrap()], 0);
        for p in generate_dataset(&spec, Split::Heldout).unwrap() {
            let total: usize = p.tokens.iter().map(|&t| map[t]).sum();
            assert_eq!(p.frames.len(), total + 1);
            assert_eq!(p.durations, p.tokens.iter().map(|&t| map[t]).collect::<Vec<_>>());
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let data = generate_dataset(&ToyTaskSpec::default(), Split::Heldout).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&data, &mut buf).unwrap();
        assert_eq!(read_jsonl(&buf[..]).unwrap(), data);
    }

    #[test]
    fn stress_must_exceed_train() {
        let spec = ToyTaskSpec { stress_len_range: [10, 20], ..Default::default() };
        assert!(spec.validate().is_err());
    }
}
