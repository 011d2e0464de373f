//! Ground truth for the expected-alignment recursions.
//!
//! * [`enumerate_stepwise`] / [`enumerate_monotonic`] propagate the exact
//!   distribution of the attended index as a Markov chain whose states are
//!   the memory entries plus an absorbing past-end state. Transition
//!   probabilities are built from the sampling procedure itself, not from the
//!   recursions they check.
//! * [`list_stepwise_paths`] / [`list_monotonic_paths`] list every admissible
//!   hard path with its probability; they are the oracle's own oracle.
//! * [`monte_carlo`] runs the hard decoder on frozen probabilities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::hard_decoder::{decode_hard, FrozenProbabilities, HardFamily, SamplerConfig};
use crate::kernels::{
    ma_alignment_recursive, sma_alignment, AlignmentMatrix, AlignmentRow, EdgePolicy,
    MemorySequence, SelectionProbabilityMatrix,
};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const STEPWISE_GUARD: usize = 12;
pub const MONOTONIC_GUARD: usize = 8;
pub const PATH_LISTING_GUARD: usize = 6;

/// Exact per-step marginals of the attended index.
#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration<S> {
    pub alignment: AlignmentMatrix<S>,
    /// Probability of having left the memory by each step (cumulative).
    pub leak: Vec<S>,
}

fn guard(what: &'static str, got: usize, limit: usize) -> Result<()> {
    if got > limit {
        Err(Error::SizeGuard { what, got, limit })
    } else {
        Ok(())
    }
}

fn initial_state<S: Scalar>(initial: &AlignmentRow<S>) -> (Vec<S>, S) {
    let w = initial.weights().to_vec();
    let end = S::one() - initial.mass();
    (w, end.max(S::zero()))
}

/// Exact marginals of the stay/advance process for `p.steps()` steps
/// starting from `initial`.
pub fn enumerate_stepwise<S: Scalar>(
    initial: &AlignmentRow<S>,
    p: &SelectionProbabilityMatrix<S>,
    edge_policy: EdgePolicy,
) -> Result<Enumeration<S>> {
    let (t, n) = (p.steps(), p.memory_len());
    guard("T", t, STEPWISE_GUARD)?;
    guard("n", n, STEPWISE_GUARD)?;
    check_len("initial distribution", n, initial.len())?;

    let (mut state, mut end) = initial_state(initial);
    let mut rows = Vec::with_capacity(t);
    let mut leak = Vec::with_capacity(t);
    for i in 0..t {
        let pi = p.row(i);
        let mut next = vec![S::zero(); n];
        let mut next_end = end;
        for (k, &mass) in state.iter().enumerate() {
            if mass == S::zero() {
                continue;
            }
            // transitions out of state k
            let last = k + 1 == n;
            let (stay, advance) = if last && edge_policy == EdgePolicy::Clamp {
                (S::one(), S::zero())
            } else {
                (pi[k], S::one() - pi[k])
            };
            next[k] += mass * stay;
            if last {
                next_end += mass * advance;
            } else {
                next[k + 1] += mass * advance;
            }
        }
        state = next;
        end = next_end;
        rows.push(AlignmentRow::from_kernel(state.clone()));
        leak.push(end);
    }
    Ok(Enumeration {
        alignment: AlignmentMatrix::new(rows, edge_policy)?,
        leak,
    })
}

/// Exact marginals of the scan-until-stop process.
pub fn enumerate_monotonic<S: Scalar>(
    initial: &AlignmentRow<S>,
    p: &SelectionProbabilityMatrix<S>,
) -> Result<Enumeration<S>> {
    let (t, n) = (p.steps(), p.memory_len());
    guard("T", t, MONOTONIC_GUARD)?;
    guard("n", n, MONOTONIC_GUARD)?;
    check_len("initial distribution", n, initial.len())?;

    let (mut state, mut end) = initial_state(initial);
    let mut rows = Vec::with_capacity(t);
    let mut leak = Vec::with_capacity(t);
    for i in 0..t {
        let pi = p.row(i);
        let mut next = vec![S::zero(); n];
        let mut next_end = end;
        for (k, &mass) in state.iter().enumerate() {
            if mass == S::zero() {
                continue;
            }
            // probability of reaching j without having stopped since k
            let mut reach = S::one();
            for j in k..n {
                next[j] += mass * reach * pi[j];
                reach *= S::one() - pi[j];
            }
            next_end += mass * reach;
        }
        state = next;
        end = next_end;
        rows.push(AlignmentRow::from_kernel(state.clone()));
        leak.push(end);
    }
    Ok(Enumeration {
        alignment: AlignmentMatrix::new(rows, EdgePolicy::Leak)?,
        leak,
    })
}

/// One admissible hard path. `None` marks steps after leaving the memory.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPath<S> {
    pub positions: Vec<Option<usize>>,
    pub probability: S,
}

fn check_listing(t: usize, n: usize) -> Result<()> {
    guard("T", t, PATH_LISTING_GUARD)?;
    guard("n", n, PATH_LISTING_GUARD)
}

/// Every stay/advance decision sequence from every initial entry.
pub fn list_stepwise_paths<S: Scalar>(
    initial: &AlignmentRow<S>,
    p: &SelectionProbabilityMatrix<S>,
    edge_policy: EdgePolicy,
) -> Result<Vec<WeightedPath<S>>> {
    let (t, n) = (p.steps(), p.memory_len());
    check_listing(t, n)?;
    check_len("initial distribution", n, initial.len())?;
    let mut out = Vec::new();
    for (start, &w) in initial.weights().iter().enumerate() {
        if w == S::zero() {
            continue;
        }
        for decisions in 0u32..(1 << t) {
            let mut pos = Some(start);
            let mut prob = w;
            let mut positions = Vec::with_capacity(t);
            for i in 0..t {
                if let Some(k) = pos {
                    let stay = decisions & (1 << i) == 0;
                    let clamp_last = k + 1 == n && edge_policy == EdgePolicy::Clamp;
                    if clamp_last {
                        // forced stay; count only the "stay" branch
                        if !stay {
                            prob = S::zero();
                        }
                    } else if stay {
                        prob *= p.row(i)[k];
                    } else {
                        prob *= S::one() - p.row(i)[k];
                        pos = if k + 1 < n { Some(k + 1) } else { None };
                    }
                } else if decisions & (1 << i) != 0 {
                    // past the end there is a single continuation
                    prob = S::zero();
                }
                positions.push(pos);
            }
            if prob > S::zero() {
                out.push(WeightedPath {
                    positions,
                    probability: prob,
                });
            }
        }
    }
    Ok(out)
}

/// Every nondecreasing stop sequence (with absorbing past-end) from every
/// initial entry.
pub fn list_monotonic_paths<S: Scalar>(
    initial: &AlignmentRow<S>,
    p: &SelectionProbabilityMatrix<S>,
) -> Result<Vec<WeightedPath<S>>> {
    let (t, n) = (p.steps(), p.memory_len());
    check_listing(t, n)?;
    check_len("initial distribution", n, initial.len())?;

    fn extend<S: Scalar>(
        p: &SelectionProbabilityMatrix<S>,
        step: usize,
        from: Option<usize>,
        prob: S,
        prefix: &mut Vec<Option<usize>>,
        out: &mut Vec<WeightedPath<S>>,
    ) {
        if step == p.steps() {
            out.push(WeightedPath {
                positions: prefix.clone(),
                probability: prob,
            });
            return;
        }
        let Some(k) = from else {
            prefix.push(None);
            extend(p, step + 1, None, prob, prefix, out);
            prefix.pop();
            return;
        };
        let row = p.row(step);
        let mut pass = S::one();
        for j in k..row.len() {
            prefix.push(Some(j));
            extend(p, step + 1, Some(j), prob * pass * row[j], prefix, out);
            prefix.pop();
            pass *= S::one() - row[j];
        }
        prefix.push(None);
        extend(p, step + 1, None, prob * pass, prefix, out);
        prefix.pop();
    }

    let mut out = Vec::new();
    for (start, &w) in initial.weights().iter().enumerate() {
        if w > S::zero() {
            extend(p, 0, Some(start), w, &mut Vec::with_capacity(t), &mut out);
        }
    }
    Ok(out)
}

/// Collapse a path listing into per-step marginals.
pub fn marginals_from_paths<S: Scalar>(
    paths: &[WeightedPath<S>],
    t: usize,
    n: usize,
    edge_policy: EdgePolicy,
) -> Result<Enumeration<S>> {
    let mut m = Matrix::<S>::zeros(t, n);
    let mut leak = vec![S::zero(); t];
    for path in paths {
        for (i, pos) in path.positions.iter().enumerate() {
            match pos {
                Some(j) => {
                    let v = m.get(i, *j);
                    m.set(i, *j, v + path.probability);
                }
                None => leak[i] += path.probability,
            }
        }
    }
    let rows = (0..t).map(|i| AlignmentRow::from_kernel(m.row(i).to_vec())).collect();
    Ok(Enumeration {
        alignment: AlignmentMatrix::new(rows, edge_policy)?,
        leak,
    })
}

/// Which hard-attention process to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Monotonic,
    Stepwise(EdgePolicy),
}

impl From<Family> for HardFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Monotonic => HardFamily::Monotonic,
            Family::Stepwise(p) => HardFamily::Stepwise(p),
        }
    }
}

/// Empirical attended-index frequencies per step.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEstimate {
    pub alignment: AlignmentMatrix<f64>,
    /// Fraction of samples that had left the memory by each step.
    pub past_end: Vec<f64>,
    pub samples: usize,
}

/// Run `samples` sampled hard decodes over frozen `p` and count outcomes.
pub fn monte_carlo<S: Scalar>(
    p: &SelectionProbabilityMatrix<S>,
    family: Family,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if samples == 0 {
        return Err(Error::InvalidInput("samples must be at least 1".into()));
    }
    let (t, n) = (p.steps(), p.memory_len());
    // entry values are irrelevant; only the attended index is counted
    let memory = MemorySequence::new(Matrix::<S>::zeros(n, 1))?;
    let sampler = SamplerConfig::sampled(seed, t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; t * n];
    let mut ended = vec![0u64; t];
    for _ in 0..samples {
        let out = decode_hard(&memory, family.into(), &sampler, &mut rng, &mut FrozenProbabilities::new(p))?;
        for (i, &j) in out.path.positions.iter().enumerate() {
            counts[i * n + j] += 1;
        }
        for e in ended.iter_mut().skip(out.path.len()) {
            *e += 1;
        }
    }
    let total = samples as f64;
    let rows = (0..t)
        .map(|i| AlignmentRow::from_kernel(counts[i * n..(i + 1) * n].iter().map(|&c| c as f64 / total).collect()))
        .collect();
    let policy = match family {
        Family::Stepwise(p) => p,
        Family::Monotonic => EdgePolicy::Leak,
    };
    Ok(MonteCarloEstimate {
        alignment: AlignmentMatrix::new(rows, policy)?,
        past_end: ended.into_iter().map(|c| c as f64 / total).collect(),
        samples,
    })
}

/// Closed-form marginals matching the hard decoder's conventions: monotonic
/// attention scans from the first entry at step one; stepwise attention is
/// pinned to the first entry at step one and the first probability row is
/// not used.
pub fn decoder_marginals<S: Scalar>(
    p: &SelectionProbabilityMatrix<S>,
    family: Family,
) -> Result<Enumeration<S>> {
    let (t, n) = (p.steps(), p.memory_len());
    let mut rows = Vec::with_capacity(t);
    let mut leak = Vec::with_capacity(t);
    let mut prev = AlignmentRow::one_hot(n, 0);
    for i in 0..t {
        let next = match family {
            Family::Monotonic => ma_alignment_recursive(&prev, p.row(i))?,
            Family::Stepwise(_) if i == 0 => AlignmentRow::one_hot(n, 0),
            Family::Stepwise(policy) => sma_alignment(&prev, p.row(i), policy)?,
        };
        leak.push(S::one() - next.mass());
        rows.push(next.clone());
        prev = next;
    }
    let policy = match family {
        Family::Stepwise(p) => p,
        Family::Monotonic => EdgePolicy::Leak,
    };
    Ok(Enumeration {
        alignment: AlignmentMatrix::new(rows, policy)?,
        leak,
    })
}

/// Total-variation distance between two outcome distributions at one step,
/// counting the past-end outcome as an extra category.
pub fn total_variation(a: &[f64], a_end: f64, b: &[f64], b_end: f64) -> f64 {
    let body: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    0.5 * (body + (a_end - b_end).abs())
}

/// Largest per-step total-variation distance between an estimate and exact
/// marginals.
pub fn max_total_variation<S: Scalar>(estimate: &MonteCarloEstimate, exact: &Enumeration<S>) -> f64 {
    (0..estimate.alignment.steps())
        .map(|i| {
            let exact_row: Vec<f64> = exact.alignment.rows[i].weights().iter().map(|v| v.as_f64()).collect();
            total_variation(
                estimate.alignment.rows[i].weights(),
                estimate.past_end[i],
                &exact_row,
                exact.leak[i].as_f64(),
            )
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn probs(rows: &[Vec<f64>]) -> SelectionProbabilityMatrix<f64> {
        SelectionProbabilityMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn single_bernoulli_step() {
        let e = enumerate_stepwise(&AlignmentRow::one_hot(2, 0), &probs(&[vec![0.2, 0.5]]), EdgePolicy::Leak).unwrap();
        assert_abs_diff_eq!(e.alignment.get(0, 0), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(e.alignment.get(0, 1), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn three_token_example_agrees_with_recursion() {
        let init = AlignmentRow::new(vec![0.5, 0.5, 0.0]).unwrap();
        let p = probs(&[vec![0.2, 0.6, 0.9]]);
        let e = enumerate_stepwise(&init, &p, EdgePolicy::Leak).unwrap();
        for (x, y) in e.alignment.rows[0].weights().iter().zip([0.1, 0.7, 0.2]) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn monotonic_two_entries() {
        let e = enumerate_monotonic(&AlignmentRow::one_hot(2, 0), &probs(&[vec![0.5, 0.5]])).unwrap();
        assert_eq!(e.alignment.rows[0].weights(), &[0.5, 0.25]);
        assert_eq!(e.leak, vec![0.25]);
    }

    #[test]
    fn monotonic_certain_stop_stays_home() {
        let p = probs(&vec![vec![1.0; 4]; 5]);
        let e = enumerate_monotonic(&AlignmentRow::one_hot(4, 0), &p).unwrap();
        for r in &e.alignment.rows {
            assert_eq!(r.weights(), &[1.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn size_guards_are_errors() {
        let p = probs(&vec![vec![0.5; 13]; 2]);
        assert!(matches!(
            enumerate_stepwise(&AlignmentRow::one_hot(13, 0), &p, EdgePolicy::Leak),
            Err(Error::SizeGuard { .. })
        ));
        let p = probs(&vec![vec![0.5; 3]; 9]);
        assert!(matches!(
            enumerate_monotonic(&AlignmentRow::one_hot(3, 0), &p),
            Err(Error::SizeGuard { .. })
        ));
        let p = probs(&vec![vec![0.5; 3]; 7]);
        assert!(list_stepwise_paths(&AlignmentRow::one_hot(3, 0), &p, EdgePolicy::Clamp).is_err());
    }

    #[test]
    fn path_listing_matches_chain() {
        let p = probs(&[
            vec![0.3, 0.8, 0.1, 0.6],
            vec![0.5, 0.2, 0.9, 0.4],
            vec![0.7, 0.6, 0.3, 0.2],
        ]);
        let init = AlignmentRow::new(vec![0.6, 0.3, 0.1, 0.0]).unwrap();
        for policy in [EdgePolicy::Clamp, EdgePolicy::Leak] {
            let chain = enumerate_stepwise(&init, &p, policy).unwrap();
            let listed = marginals_from_paths(&list_stepwise_paths(&init, &p, policy).unwrap(), 3, 4, policy).unwrap();
            for i in 0..3 {
                for j in 0..4 {
                    assert_abs_diff_eq!(chain.alignment.get(i, j), listed.alignment.get(i, j), epsilon = 1e-15);
                }
                assert_abs_diff_eq!(chain.leak[i], listed.leak[i], epsilon = 1e-15);
            }
        }
        let chain = enumerate_monotonic(&init, &p).unwrap();
        let listed = marginals_from_paths(&list_monotonic_paths(&init, &p).unwrap(), 3, 4, EdgePolicy::Leak).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_abs_diff_eq!(chain.alignment.get(i, j), listed.alignment.get(i, j), epsilon = 1e-15);
            }
            assert_abs_diff_eq!(chain.leak[i], listed.leak[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn single_sample_is_one_hot() {
        let p = probs(&vec![vec![0.4, 0.6, 0.5]; 4]);
        let mc = monte_carlo(&p, Family::Stepwise(EdgePolicy::Clamp), 1, 3).unwrap();
        for r in &mc.alignment.rows {
            assert_eq!(r.weights().iter().filter(|&&w| w == 1.0).count(), 1);
            assert_eq!(r.mass(), 1.0);
        }
    }

    #[test]
    fn certain_stay_is_exact_for_any_sample_count() {
        let p = probs(&vec![vec![1.0; 3]; 5]);
        for samples in [1, 17, 500] {
            let mc = monte_carlo(&p, Family::Stepwise(EdgePolicy::Leak), samples, 11).unwrap();
            for r in &mc.alignment.rows {
                assert_eq!(r.weights(), &[1.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn zero_samples_rejected() {
        let p = probs(&[vec![0.5]]);
        assert!(monte_carlo(&p, Family::Monotonic, 0, 0).is_err());
    }
}
