//! Hard-attention inference for monotonic and stepwise monotonic attention.
//!
//! Both decoders start focused on the first memory entry. Monotonic attention
//! scans forward from the previous focus (from the first entry at step one)
//! and stops at the first positive Bernoulli draw. Stepwise attention keeps
//! the first entry at step one; afterwards each step either stays or moves
//! exactly one entry forward. Every context is a single memory row.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::kernels::{check_probabilities, ContextVector, EdgePolicy, MemorySequence};
use crate::scalar::Scalar;

/// Threshold used by [`SamplerMode::Greedy`].
pub const GREEDY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Draw `z ~ Bernoulli(p)`.
    Sampled,
    /// `z = [p ≥ 0.5]`; deterministic and seed-independent.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    pub seed: u64,
    pub max_steps: usize,
}

impl SamplerConfig {
    pub fn greedy(max_steps: usize) -> Self {
        Self {
            mode: SamplerMode::Greedy,
            seed: 0,
            max_steps,
        }
    }

    pub fn sampled(seed: u64, max_steps: usize) -> Self {
        Self {
            mode: SamplerMode::Sampled,
            seed,
            max_steps,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn draw<S: Scalar>(p: S, mode: SamplerMode, rng: &mut dyn RngCore) -> bool {
    match mode {
        SamplerMode::Greedy => p >= S::lit(GREEDY_THRESHOLD),
        SamplerMode::Sampled => rng.random::<f64>() < p.as_f64(),
    }
}

/// Result of one hard step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HardStep {
    Attend(usize),
    PastEnd,
}

/// Scan `j = start..n`, stopping at the first `z_j = 1`.
pub fn ma_hard_step<S: Scalar>(
    start: usize,
    p_row: &[S],
    mode: SamplerMode,
    rng: &mut dyn RngCore,
) -> Result<HardStep> {
    if start >= p_row.len() {
        return Err(Error::InvalidInput(format!(
            "start index {start} outside memory of length {}",
            p_row.len()
        )));
    }
    for (j, &p) in p_row.iter().enumerate().skip(start) {
        if draw(p, mode, rng) {
            return Ok(HardStep::Attend(j));
        }
    }
    Ok(HardStep::PastEnd)
}

/// Stay with probability `p_stay`, otherwise advance one entry. At the last
/// entry, clamp stays put and leak reports [`HardStep::PastEnd`].
pub fn sma_hard_step<S: Scalar>(
    current: usize,
    p_stay: S,
    n: usize,
    edge_policy: EdgePolicy,
    mode: SamplerMode,
    rng: &mut dyn RngCore,
) -> Result<HardStep> {
    if current >= n {
        return Err(Error::InvalidInput(format!(
            "current index {current} outside memory of length {n}"
        )));
    }
    if draw(p_stay, mode, rng) {
        return Ok(HardStep::Attend(current));
    }
    if current + 1 < n {
        Ok(HardStep::Attend(current + 1))
    } else {
        match edge_policy {
            EdgePolicy::Clamp => Ok(HardStep::Attend(current)),
            EdgePolicy::Leak => Ok(HardStep::PastEnd),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family", content = "edge_policy")]
pub enum HardFamily {
    Monotonic,
    Stepwise(EdgePolicy),
}

/// Attended memory index per output step (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HardAlignmentPath {
    pub positions: Vec<usize>,
    /// Decoding ended because focus moved past the last entry.
    pub terminated_past_end: bool,
}

impl HardAlignmentPath {
    pub fn new(positions: Vec<usize>) -> Self {
        Self {
            positions,
            terminated_past_end: false,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.positions.windows(2).all(|w| w[1] >= w[0])
    }

    /// Every consecutive increment is 0 or 1.
    pub fn has_unit_increments(&self) -> bool {
        self.positions.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1)
    }

    /// The visited set is exactly `{0, ..., max}`.
    pub fn has_prefix_coverage(&self) -> bool {
        let Some(&max) = self.positions.iter().max() else {
            return true;
        };
        let mut seen = vec![false; max + 1];
        for &p in &self.positions {
            seen[p] = true;
        }
        seen.into_iter().all(|s| s)
    }

    /// Check the invariants of the family that produced the path.
    pub fn validate(&self, family: HardFamily, n: usize) -> Result<()> {
        if self.positions.iter().any(|&p| p >= n) {
            return Err(Error::InvalidInput("path index outside memory".into()));
        }
        if !self.is_nondecreasing() {
            return Err(Error::InvalidInput("hard path rewinds".into()));
        }
        if let HardFamily::Stepwise(_) = family {
            if self.positions.first().is_some_and(|&p| p != 0) {
                return Err(Error::InvalidInput("stepwise path must start at the first entry".into()));
            }
            if !self.has_unit_increments() {
                return Err(Error::InvalidInput("stepwise path moves more than one entry".into()));
            }
        }
        Ok(())
    }

    /// CSV with header `step,index`; both columns 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,index\n");
        for (i, p) in self.positions.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, p + 1));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut positions = Vec::new();
        for (line_no, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let (Some(_), Some(idx)) = (cols.next(), cols.next()) else {
                return Err(Error::Parse(format!("line {}: expected `step,index`", line_no + 1)));
            };
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", line_no + 1)))?;
            if idx == 0 {
                return Err(Error::Parse(format!("line {}: indices are 1-based", line_no + 1)));
            }
            positions.push(idx - 1);
        }
        Ok(Self::new(positions))
    }

    /// JSON array of 1-based indices.
    pub fn to_json(&self) -> String {
        let one_based: Vec<usize> = self.positions.iter().map(|p| p + 1).collect();
        serde_json::to_string(&one_based).expect("vector of integers serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let one_based: Vec<usize> = serde_json::from_str(text)?;
        if one_based.contains(&0) {
            return Err(Error::Parse("indices are 1-based".into()));
        }
        Ok(Self::new(one_based.into_iter().map(|p| p - 1).collect()))
    }
}

/// Supplies selection probabilities to [`decode_hard`], one row per step.
pub trait HardStepSource<S> {
    /// Probabilities for `step`, given the entry attended at the previous
    /// step; `None` means the model has stopped.
    fn probabilities(&mut self, step: usize, previous: Option<usize>) -> Option<Vec<S>>;

    /// Called with the attended entry and its context once a step commits.
    fn observe(&mut self, _step: usize, _index: usize, _context: &[S]) {}
}

/// Replays a fixed probability matrix; stops after its last row.
pub struct FrozenProbabilities<'a, S> {
    rows: &'a crate::kernels::SelectionProbabilityMatrix<S>,
}

impl<'a, S> FrozenProbabilities<'a, S> {
    pub fn new(rows: &'a crate::kernels::SelectionProbabilityMatrix<S>) -> Self {
        Self { rows }
    }
}

impl<S: Scalar> HardStepSource<S> for FrozenProbabilities<'_, S> {
    fn probabilities(&mut self, step: usize, _previous: Option<usize>) -> Option<Vec<S>> {
        (step < self.rows.steps()).then(|| self.rows.row(step).to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardDecode<S> {
    pub path: HardAlignmentPath,
    pub contexts: Vec<ContextVector<S>>,
    /// `max_steps` was reached before the source stopped.
    pub truncated: bool,
}

pub fn decode_hard<S: Scalar, Src: HardStepSource<S> + ?Sized>(
    memory: &MemorySequence<S>,
    family: HardFamily,
    sampler: &SamplerConfig,
    rng: &mut dyn RngCore,
    source: &mut Src,
) -> Result<HardDecode<S>> {
    let n = memory.len();
    let mut path = HardAlignmentPath::default();
    let mut contexts = Vec::new();
    let mut current: Option<usize> = None;
    let mut truncated = true;
    for step in 0..sampler.max_steps {
        let Some(p) = source.probabilities(step, current) else {
            truncated = false;
            break;
        };
        check_len("hard step probabilities", n, p.len())?;
        check_probabilities(&p)?;
        let outcome = match (family, current) {
            (HardFamily::Monotonic, prev) => ma_hard_step(prev.unwrap_or(0), &p, sampler.mode, rng)?,
            (HardFamily::Stepwise(_), None) => HardStep::Attend(0),
            (HardFamily::Stepwise(policy), Some(c)) => {
                sma_hard_step(c, p[c], n, policy, sampler.mode, rng)?
            }
        };
        match outcome {
            HardStep::Attend(j) => {
                let ctx = memory.entry(j).to_vec();
                source.observe(step, j, &ctx);
                path.positions.push(j);
                contexts.push(ContextVector(ctx));
                current = Some(j);
            }
            HardStep::PastEnd => {
                path.terminated_past_end = true;
                truncated = false;
                break;
            }
        }
    }
    if sampler.max_steps == 0 {
        truncated = false;
    }
    Ok(HardDecode {
        path,
        contexts,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::SelectionProbabilityMatrix;
    use crate::matrix::Matrix;

    fn memory(n: usize) -> MemorySequence<f64> {
        MemorySequence::from_rows(&(0..n).map(|j| vec![j as f64, -(j as f64)]).collect::<Vec<_>>())
            .unwrap()
    }

    fn constant(t: usize, n: usize, p: f64) -> SelectionProbabilityMatrix<f64> {
        SelectionProbabilityMatrix::new(Matrix::from_vec(t, n, vec![p; t * n]).unwrap()).unwrap()
    }

    #[test]
    fn greedy_scan_stops_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = ma_hard_step(2, &[0.9, 0.8, 0.7, 0.6], SamplerMode::Greedy, &mut rng).unwrap();
        assert_eq!(out, HardStep::Attend(2));
    }

    #[test]
    fn greedy_scan_exhausts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = ma_hard_step(0, &[0.1, 0.4, 0.2], SamplerMode::Greedy, &mut rng).unwrap();
        assert_eq!(out, HardStep::PastEnd);
    }

    #[test]
    fn stepwise_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let s = sma_hard_step(1, 1.0, 4, EdgePolicy::Leak, SamplerMode::Sampled, &mut rng).unwrap();
            assert_eq!(s, HardStep::Attend(1));
        }
        let s = sma_hard_step(3, 0.0, 4, EdgePolicy::Clamp, SamplerMode::Sampled, &mut rng).unwrap();
        assert_eq!(s, HardStep::Attend(3));
        let s = sma_hard_step(3, 0.0, 4, EdgePolicy::Leak, SamplerMode::Sampled, &mut rng).unwrap();
        assert_eq!(s, HardStep::PastEnd);
    }

    #[test]
    fn stepwise_always_stay_pins_first_entry() {
        let mem = memory(3);
        let p = constant(6, 3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sampler = SamplerConfig::sampled(1, 100);
        let out = decode_hard(&mem, HardFamily::Stepwise(EdgePolicy::Clamp), &sampler, &mut rng, &mut FrozenProbabilities::new(&p)).unwrap();
        assert_eq!(out.path.positions, vec![0; 6]);
        assert!(out.contexts.iter().all(|c| c.values() == mem.entry(0)));
        assert!(!out.truncated);
    }

    #[test]
    fn stepwise_never_stay_advances_then_clamps() {
        let mem = memory(3);
        let p = constant(5, 3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sampler = SamplerConfig::greedy(100);
        let out = decode_hard(&mem, HardFamily::Stepwise(EdgePolicy::Clamp), &sampler, &mut rng, &mut FrozenProbabilities::new(&p)).unwrap();
        assert_eq!(out.path.positions, vec![0, 1, 2, 2, 2]);
        assert!(out.path.has_prefix_coverage());
    }

    #[test]
    fn truncation_flagged() {
        let mem = memory(3);
        let p = constant(10, 3, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sampler = SamplerConfig::greedy(4);
        let out = decode_hard(&mem, HardFamily::Stepwise(EdgePolicy::Clamp), &sampler, &mut rng, &mut FrozenProbabilities::new(&p)).unwrap();
        assert!(out.truncated);
        assert_eq!(out.path.len(), 4);
    }

    #[test]
    fn monotonic_sampled_is_reproducible() {
        let mem = memory(6);
        let p = constant(12, 6, 0.4);
        let sampler = SamplerConfig::sampled(99, 100);
        let run = || {
            let mut rng = sampler.rng();
            decode_hard(&mem, HardFamily::Monotonic, &sampler, &mut rng, &mut FrozenProbabilities::new(&p)).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.path, b.path);
        assert!(a.path.is_nondecreasing());
    }

    #[test]
    fn greedy_ignores_seed() {
        let mem = memory(5);
        let p = SelectionProbabilityMatrix::from_rows(&[
            vec![0.2, 0.7, 0.1, 0.9, 0.3],
            vec![0.2, 0.4, 0.1, 0.9, 0.3],
            vec![0.2, 0.4, 0.1, 0.4, 0.3],
        ])
        .unwrap();
        let paths: Vec<_> = [1u64, 2, 3]
            .iter()
            .map(|&s| {
                let sampler = SamplerConfig { mode: SamplerMode::Greedy, seed: s, max_steps: 10 };
                let mut rng = sampler.rng();
                decode_hard(&mem, HardFamily::Monotonic, &sampler, &mut rng, &mut FrozenProbabilities::new(&p)).unwrap()
            })
            .collect();
        assert_eq!(paths[0].path.positions, vec![1, 3]);
        assert!(paths[0].path.terminated_past_end);
        assert!(paths.iter().all(|d| d.path == paths[0].path));
    }

    #[test]
    fn path_formats_round_trip() {
        let path = HardAlignmentPath::new(vec![0, 1, 1, 2]);
        assert_eq!(path.to_csv(), "step,index\n1,1\n2,2\n3,2\n4,3\n");
        assert_eq!(HardAlignmentPath::from_csv(&path.to_csv()).unwrap(), path);
        assert_eq!(path.to_json(), "[1,2,2,3]");
        assert_eq!(HardAlignmentPath::from_json(&path.to_json()).unwrap(), path);
        assert!(HardAlignmentPath::from_json("[0,1]").is_err());
    }

    #[test]
    fn validate_catches_violations() {
        let stepwise = HardFamily::Stepwise(EdgePolicy::Clamp);
        assert!(HardAlignmentPath::new(vec![0, 0, 1, 2]).validate(stepwise, 3).is_ok());
        assert!(HardAlignmentPath::new(vec![0, 2]).validate(stepwise, 3).is_err());
        assert!(HardAlignmentPath::new(vec![1, 2]).validate(stepwise, 3).is_err());
        assert!(HardAlignmentPath::new(vec![0, 3]).validate(HardFamily::Monotonic, 5).is_ok());
        assert!(HardAlignmentPath::new(vec![2, 1]).validate(HardFamily::Monotonic, 5).is_err());
    }
}
