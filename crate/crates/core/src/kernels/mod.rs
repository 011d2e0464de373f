//! Alignment kernels for every attention mechanism in the crate.
//!
//! Each forward kernel is a pure function of its inputs (plus an explicit,
//! caller-owned random source where noise is involved) and has a matching
//! `*_adjoint` that returns exact reverse-mode derivatives of the same map.
//!
//! Index convention: memory positions are 0-based in code. Position `0`
//! corresponds to the first memory entry.

mod energy;
mod forward;
mod gmm;
mod location;
mod monotonic;
mod softmax;
mod stepwise;

pub use energy::{compute_energy, compute_energy_adjoint, EnergyGradients, EnergyParams};
pub use forward::{
    forward_attention_step, forward_attention_step_adjoint, ForwardAttentionState,
    ForwardGradients, ForwardStep, FORWARD_MASS_FLOOR,
};
pub use gmm::{
    gmm_alignment, gmm_alignment_adjoint, gmm_attention_step, gmm_attention_step_adjoint,
    GmmAttentionState, GmmComponent, GmmStepGradients, GmmUpdate, DEFAULT_GMM_COMPONENTS,
};
pub use location::{location_features, location_features_adjoint, LocationFeatures};
pub use monotonic::{
    ma_alignment_parallel, ma_alignment_parallel_adjoint, ma_alignment_recursive,
    ma_alignment_recursive_adjoint, selection_probabilities, selection_probabilities_adjoint,
    ParallelAlignment, DENOM_FLOOR, SIGMOID_EPS,
};
pub use softmax::{
    context_vector, context_vector_adjoint, softmax_alignment, softmax_alignment_adjoint,
};
pub use stepwise::{sma_alignment, sma_alignment_adjoint, sma_leak_term};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Encoder outputs `x_1..x_n`, one row per memory entry.
#[derive(Debug, Clone, PartialEq)]
pub struct MemorySequence<S> {
    entries: Matrix<S>,
}

impl<S: Scalar> MemorySequence<S> {
    pub fn new(entries: Matrix<S>) -> Result<Self> {
        if entries.rows() == 0 {
            return Err(Error::InvalidInput("memory must have at least one entry".into()));
        }
        if !entries.is_finite() {
            return Err(Error::InvalidInput("memory entries must be finite".into()));
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Number of memory entries `n`.
    pub fn len(&self) -> usize {
        self.entries.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.rows() == 0
    }

    /// Entry dimensionality `d`.
    pub fn dim(&self) -> usize {
        self.entries.cols()
    }

    pub fn entry(&self, j: usize) -> &[S] {
        self.entries.row(j)
    }

    pub fn entries(&self) -> &Matrix<S> {
        &self.entries
    }
}

/// Unnormalized scores `e_{i,1..n}` for one output step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow<S>(pub Vec<S>);

impl<S: Scalar> EnergyRow<S> {
    pub fn values(&self) -> &[S] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check_finite(&self) -> Result<()> {
        if self.0.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput("energies must be finite".into()))
        }
    }
}

/// One row of alignment weights over the memory. Weights are nonnegative and
/// sum to at most one; the deficit is mass that left the memory range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlignmentRow<S> {
    weights: Vec<S>,
}

impl<S: Scalar> AlignmentRow<S> {
    pub fn new(weights: Vec<S>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("alignment row must be nonempty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < S::zero()) {
            return Err(Error::InvalidInput(
                "alignment weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { weights })
    }

    /// Crate-internal constructor for kernel outputs that are nonnegative by construction.
    pub(crate) fn from_kernel(weights: Vec<S>) -> Self {
        debug_assert!(weights.iter().all(|w| *w >= S::zero()), "{weights:?}");
        Self { weights }
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        assert!(index < n, "one-hot index {index} out of range for n={n}");
        let mut weights = vec![S::zero(); n];
        weights[index] = S::one();
        Self { weights }
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        Self {
            weights: vec![S::one() / S::lit(n as f64); n],
        }
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<S> {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Total weight in range.
    pub fn mass(&self) -> S {
        self.weights.iter().copied().sum()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.weights)
    }
}

pub(crate) fn argmax<S: Scalar>(v: &[S]) -> usize {
    let mut best = 0;
    for (j, w) in v.iter().enumerate() {
        if *w > v[best] {
            best = j;
        }
    }
    best
}

/// How mass reaching the last memory entry is treated by stepwise recursions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgePolicy {
    /// Mass that would move past the last entry stays there.
    Clamp,
    /// Mass that would move past the last entry exits the memory range.
    #[default]
    Leak,
}

/// Expected alignments for all output steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMatrix<S> {
    pub rows: Vec<AlignmentRow<S>>,
    pub edge_policy: EdgePolicy,
}

impl<S: Scalar> AlignmentMatrix<S> {
    pub fn new(rows: Vec<AlignmentRow<S>>, edge_policy: EdgePolicy) -> Result<Self> {
        if let Some(first) = rows.first() {
            let n = first.len();
            for r in &rows {
                check_len("alignment matrix row", n, r.len())?;
            }
        }
        Ok(Self { rows, edge_policy })
    }

    /// Output steps `T`.
    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    /// Memory length `n` (0 for an empty matrix).
    pub fn memory_len(&self) -> usize {
        self.rows.first().map_or(0, AlignmentRow::len)
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.rows[i].weights[j]
    }

    pub fn to_matrix(&self) -> Matrix<S> {
        let mut m = Matrix::zeros(self.steps(), self.memory_len());
        for (i, r) in self.rows.iter().enumerate() {
            m.row_mut(i).copy_from_slice(r.weights());
        }
        m
    }
}

/// `p_{i,j}` for every output step and memory entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionProbabilityMatrix<S> {
    p: Matrix<S>,
}

impl<S: Scalar> SelectionProbabilityMatrix<S> {
    /// Accepts values in the closed interval `[0, 1]`; the sigmoid path produces
    /// strictly interior values, while the closed endpoints are kept for the
    /// degenerate-limit checks.
    pub fn new(p: Matrix<S>) -> Result<Self> {
        check_probabilities(p.as_slice())?;
        Ok(Self { p })
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn steps(&self) -> usize {
        self.p.rows()
    }

    pub fn memory_len(&self) -> usize {
        self.p.cols()
    }

    pub fn row(&self, i: usize) -> &[S] {
        self.p.row(i)
    }

    pub fn as_matrix(&self) -> &Matrix<S> {
        &self.p
    }
}

pub fn check_probabilities<S: Scalar>(p: &[S]) -> Result<()> {
    if p.iter().all(|&v| v >= S::zero() && v <= S::one()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(
            "selection probabilities must lie in [0, 1]".into(),
        ))
    }
}

/// `c_i`, the expected (or selected) memory entry for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector<S>(pub Vec<S>);

impl<S: Scalar> ContextVector<S> {
    pub fn values(&self) -> &[S] {
        &self.0
    }
}
