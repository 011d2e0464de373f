//! Locality, monotonicity and completeness measurements on alignments, and
//! the collapse / repeat / skip error taxonomy built on them.

mod render;
mod report;

pub use render::{
    alignment_from_csv, alignment_to_csv, metrics_to_csv, render_alignment_heatmap, to_pgm,
    HeatmapFiles,
};
pub use report::{corpus_report, render_table, reports_to_csv, CaseRow, CorpusReport, ErrorClass, ErrorTotals};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hard_decoder::HardAlignmentPath;
use crate::kernels::AlignmentMatrix;
use crate::scalar::Scalar;

/// Coverage below which a token is listed as a completeness gap.
pub const DEFAULT_MIN_COVERAGE: f64 = 0.5;

/// Soft or hard alignment, as accepted by [`compute_metrics`].
#[derive(Debug, Clone, Copy)]
pub enum AlignmentView<'a, S> {
    Soft(&'a AlignmentMatrix<S>),
    Hard(&'a HardAlignmentPath),
}

impl<'a, S> From<&'a AlignmentMatrix<S>> for AlignmentView<'a, S> {
    fn from(m: &'a AlignmentMatrix<S>) -> Self {
        AlignmentView::Soft(m)
    }
}

impl<'a, S> From<&'a HardAlignmentPath> for AlignmentView<'a, S> {
    fn from(p: &'a HardAlignmentPath) -> Self {
        AlignmentView::Hard(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMetrics {
    pub memory_len: usize,
    pub max_weight: Vec<f64>,
    /// Entropy of each row after normalizing it by its mass (0 for an empty row).
    pub entropy: Vec<f64>,
    pub argmax: Vec<usize>,
    /// Column sums: expected number of frames spent on each token.
    pub coverage: Vec<f64>,
    /// Number of frames whose argmax is left of the previous frame's.
    pub monotonicity_violations: usize,
    /// Tokens with coverage below [`DEFAULT_MIN_COVERAGE`].
    pub completeness_gaps: Vec<usize>,
}

fn row_stats(weights: &[f64]) -> (f64, f64, usize) {
    let mass: f64 = weights.iter().sum();
    let mut best = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w > weights[best] {
            best = j;
        }
    }
    let entropy = if mass > 0.0 {
        weights
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| {
                let q = w / mass;
                -q * q.ln()
            })
            .sum::<f64>()
            .max(0.0)
    } else {
        0.0
    };
    (weights[best], entropy, best)
}

pub fn compute_metrics<'a, S: Scalar>(
    alignment: impl Into<AlignmentView<'a, S>>,
    n: usize,
) -> Result<AlignmentMetrics> {
    if n == 0 {
        return Err(Error::InvalidInput("memory length must be positive".into()));
    }
    let mut max_weight = Vec::new();
    let mut entropy = Vec::new();
    let mut argmax = Vec::new();
    let mut coverage = vec![0.0; n];
    match alignment.into() {
        AlignmentView::Soft(m) => {
            if m.steps() == 0 {
                return Err(Error::InvalidInput("alignment has no rows".into()));
            }
            if m.memory_len() != n {
                return Err(Error::DimensionMismatch {
                    context: "metrics memory length",
                    expected: n,
                    actual: m.memory_len(),
                });
            }
            for r in &m.rows {
                let w: Vec<f64> = r.weights().iter().map(|v| v.as_f64()).collect();
                let (mx, h, am) = row_stats(&w);
                max_weight.push(mx);
                entropy.push(h);
                argmax.push(am);
                for (c, v) in coverage.iter_mut().zip(&w) {
                    *c += v;
                }
            }
        }
        AlignmentView::Hard(path) => {
            if path.is_empty() {
                return Err(Error::InvalidInput("hard path is empty".into()));
            }
            for &p in &path.positions {
                if p >= n {
                    return Err(Error::InvalidInput(format!("path index {p} outside memory of length {n}")));
                }
                max_weight.push(1.0);
                entropy.push(0.0);
                argmax.push(p);
                coverage[p] += 1.0;
            }
        }
    }
    let monotonicity_violations = argmax.windows(2).filter(|w| w[1] < w[0]).count();
    let completeness_gaps = coverage
        .iter()
        .enumerate()
        .filter(|(_, &c)| c < DEFAULT_MIN_COVERAGE)
        .map(|(j, _)| j)
        .collect();
    Ok(AlignmentMetrics {
        memory_len: n,
        max_weight,
        entropy,
        argmax,
        coverage,
        monotonicity_violations,
        completeness_gaps,
    })
}

/// Numerical proxies for the error taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorThresholds {
    /// Frames with max weight below this are low-locality.
    pub w_min: f64,
    /// Minimum run of low-locality frames that counts as collapse.
    pub collapse_run: usize,
    /// Tokens with coverage below this (in frames) are not spoken.
    pub c_min: f64,
    pub collapse_tolerance: usize,
    pub repeat_tolerance: usize,
    pub skip_tolerance: usize,
}

impl Default for ErrorThresholds {
    fn default() -> Self {
        Self {
            w_min: 0.5,
            collapse_run: 5,
            c_min: 0.5,
            collapse_tolerance: 0,
            repeat_tolerance: 0,
            skip_tolerance: 0,
        }
    }
}

impl ErrorThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w_min) || self.c_min < 0.0 || self.collapse_run == 0 {
            return Err(Error::InvalidInput(format!("invalid thresholds {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorClassification {
    /// Frames inside runs of at least `collapse_run` low-locality frames.
    pub collapse_frames: usize,
    /// Argmax rewinds onto an already covered token that then re-advance
    /// over covered tokens.
    pub repeat_events: usize,
    /// Under-covered tokens at or before the furthest attended token.
    pub skip_events: usize,
    /// Under-covered tokens after the furthest attended token (the
    /// alignment stopped before reaching them).
    pub incomplete_tokens: usize,
    pub case_failed: bool,
}

impl ErrorClassification {
    /// Tokens never spoken, whether passed over or never reached.
    pub fn skipped_total(&self) -> usize {
        self.skip_events + self.incomplete_tokens
    }
}

fn count_collapse(max_weight: &[f64], w_min: f64, run: usize) -> usize {
    let mut total = 0;
    let mut current = 0;
    for &w in max_weight {
        if w < w_min {
            current += 1;
        } else {
            if current >= run {
                total += current;
            }
            current = 0;
        }
    }
    if current >= run {
        total += current;
    }
    total
}

fn count_repeats(argmax: &[usize], n: usize) -> usize {
    let mut covered = vec![false; n];
    let mut events = 0;
    let mut i = 0;
    while i < argmax.len() {
        let a = argmax[i];
        if i > 0 && a < argmax[i - 1] && covered[a] {
            let furthest = covered.iter().rposition(|&c| c).unwrap_or(0);
            let snapshot = covered.clone();
            let mut k = i + 1;
            let mut readvanced = false;
            while k < argmax.len() && argmax[k] <= furthest {
                if argmax[k] > argmax[k - 1] && snapshot[argmax[k]] {
                    readvanced = true;
                }
                covered[argmax[k]] = true;
                k += 1;
            }
            if readvanced {
                events += 1;
            }
            i = k;
            continue;
        }
        covered[a] = true;
        i += 1;
    }
    events
}

/// `exempt` lists tokens excluded from skip accounting (tokens that map to
/// no output frames).
pub fn classify_errors(
    metrics: &AlignmentMetrics,
    thresholds: &ErrorThresholds,
    exempt: &[usize],
) -> Result<ErrorClassification> {
    thresholds.validate()?;
    let collapse_frames = count_collapse(&metrics.max_weight, thresholds.w_min, thresholds.collapse_run);
    let repeat_events = count_repeats(&metrics.argmax, metrics.memory_len);
    let furthest = metrics.argmax.iter().copied().max().unwrap_or(0);
    let mut skip_events = 0;
    let mut incomplete_tokens = 0;
    for (j, &c) in metrics.coverage.iter().enumerate() {
        if c >= thresholds.c_min || exempt.contains(&j) {
            continue;
        }
        if j <= furthest {
            skip_events += 1;
        } else {
            incomplete_tokens += 1;
        }
    }
    let case_failed = collapse_frames > thresholds.collapse_tolerance
        || repeat_events > thresholds.repeat_tolerance
        || skip_events + incomplete_tokens > thresholds.skip_tolerance;
    Ok(ErrorClassification {
        collapse_frames,
        repeat_events,
        skip_events,
        incomplete_tokens,
        case_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{AlignmentRow, EdgePolicy};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn soft(rows: Vec<Vec<f64>>) -> AlignmentMatrix<f64> {
        AlignmentMatrix::new(
            rows.into_iter().map(|r| AlignmentRow::new(r).unwrap()).collect(),
            EdgePolicy::Clamp,
        )
        .unwrap()
    }

    fn diagonal(n: usize) -> AlignmentMatrix<f64> {
        soft((0..n).map(|i| AlignmentRow::<f64>::one_hot(n, i).into_weights()).collect())
    }

    #[test]
    fn ideal_diagonal() {
        let m = compute_metrics(&diagonal(4), 4).unwrap();
        assert_eq!(m.max_weight, vec![1.0; 4]);
        assert_eq!(m.entropy, vec![0.0; 4]);
        assert_eq!(m.monotonicity_violations, 0);
        assert!(m.completeness_gaps.is_empty());
        assert_eq!(m.coverage, vec![1.0; 4]);
        let c = classify_errors(&m, &ErrorThresholds::default(), &[]).unwrap();
        assert_eq!(c, ErrorClassification::default());
    }

    #[test]
    fn uniform_rows_have_max_entropy() {
        let n = 5;
        let t = 7;
        let m = compute_metrics(&soft(vec![vec![0.2; n]; t]), n).unwrap();
        for h in &m.entropy {
            assert_abs_diff_eq!(*h, (n as f64).ln(), epsilon = 1e-12);
        }
        for c in &m.coverage {
            assert_abs_diff_eq!(*c, t as f64 / n as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn stepwise_path_coverage_by_hand() {
        let path = HardAlignmentPath::new(vec![0, 1, 1, 2]);
        let m = compute_metrics::<f64>(&path, 3).unwrap();
        assert_eq!(m.coverage, vec![1.0, 2.0, 1.0]);
        assert_eq!(m.monotonicity_violations, 0);
        assert!(m.completeness_gaps.is_empty());
    }

    #[test]
    fn uniform_run_is_collapse() {
        let n = 4;
        let mut rows: Vec<Vec<f64>> = (0..3).map(|i| AlignmentRow::<f64>::one_hot(n, i).into_weights()).collect();
        rows.extend(vec![vec![0.25; n]; 10]);
        rows.push(AlignmentRow::<f64>::one_hot(n, 3).into_weights());
        let m = compute_metrics(&soft(rows), n).unwrap();
        let c = classify_errors(&m, &ErrorThresholds::default(), &[]).unwrap();
        assert!(c.collapse_frames >= 10);
        assert!(c.case_failed);
    }

    #[test]
    fn monotonic_jump_skips_middle_tokens() {
        let path = HardAlignmentPath::new(vec![0, 0, 3, 3, 4]);
        let m = compute_metrics::<f64>(&path, 5).unwrap();
        let c = classify_errors(&m, &ErrorThresholds::default(), &[]).unwrap();
        assert_eq!(c.skip_events, 2);
        assert_eq!(c.repeat_events, 0);
        assert_eq!(c.incomplete_tokens, 0);
        assert!(c.case_failed);
        // exempting one of them leaves one skip
        let c = classify_errors(&m, &ErrorThresholds::default(), &[1]).unwrap();
        assert_eq!(c.skip_events, 1);
    }

    #[test]
    fn early_stop_is_incomplete_not_skip() {
        let path = HardAlignmentPath::new(vec![0, 1, 1]);
        let m = compute_metrics::<f64>(&path, 5).unwrap();
        let c = classify_errors(&m, &ErrorThresholds::default(), &[]).unwrap();
        assert_eq!((c.skip_events, c.incomplete_tokens), (0, 3));
        assert_eq!(c.skipped_total(), 3);
    }

    #[test]
    fn rewind_and_readvance_is_a_repeat() {
        let n = 6;
        let idx = [0, 1, 2, 3, 1, 2, 3, 4, 5];
        let m = compute_metrics(&soft(idx.iter().map(|&i| AlignmentRow::<f64>::one_hot(n, i).into_weights()).collect()), n).unwrap();
        assert_eq!(m.monotonicity_violations, 1);
        let c = classify_errors(&m, &ErrorThresholds::default(), &[]).unwrap();
        assert_eq!(c.repeat_events, 1);
        assert_eq!(c.skip_events, 0);
    }

    #[test]
    fn trailing_rewind_without_readvance_is_not_a_repeat() {
        let path_rows = [0usize, 1, 2, 0];
        let m = compute_metrics(&soft(path_rows.iter().map(|&i| AlignmentRow::<f64>::one_hot(3, i).into_weights()).collect()), 3).unwrap();
        let c = classify_errors(&m, &ErrorThresholds::default(), &[]).unwrap();
        assert_eq!(c.repeat_events, 0);
        assert_eq!(m.monotonicity_violations, 1);
    }

    #[test]
    fn one_hot_matrix_equals_path() {
        let positions = vec![0, 0, 1, 3, 3, 4];
        let n = 5;
        let path = HardAlignmentPath::new(positions.clone());
        let matrix = soft(positions.iter().map(|&i| AlignmentRow::<f64>::one_hot(n, i).into_weights()).collect());
        assert_eq!(compute_metrics::<f64>(&path, n).unwrap(), compute_metrics(&matrix, n).unwrap());
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(compute_metrics::<f64>(&HardAlignmentPath::default(), 3).is_err());
        assert!(compute_metrics::<f64>(&HardAlignmentPath::new(vec![4]), 3).is_err());
    }

    proptest! {
        #[test]
        fn tightening_thresholds_never_decreases_counts(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 5), 1..30),
            w_lo in 0.0f64..0.5, w_gap in 0.0f64..0.5,
            c_lo in 0.0f64..2.0, c_gap in 0.0f64..2.0,
        ) {
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| {
                let s: f64 = r.iter().sum::<f64>() + 1e-9;
                r.into_iter().map(|v| v / s).collect()
            }).collect();
            let m = compute_metrics(&soft(rows), 5).unwrap();
            let loose = ErrorThresholds { w_min: w_lo, c_min: c_lo, ..Default::default() };
            let tight = ErrorThresholds { w_min: w_lo + w_gap, c_min: c_lo + c_gap, ..Default::default() };
            let a = classify_errors(&m, &loose, &[]).unwrap();
            let b = classify_errors(&m, &tight, &[]).unwrap();
            prop_assert!(b.collapse_frames >= a.collapse_frames);
            prop_assert!(b.skipped_total() >= a.skipped_total());
            prop_assert_eq!(a.repeat_events, b.repeat_events);
        }
    }
}
