//! Randomized checks shared by the test suites and the command-line front end:
//! recursion-vs-enumeration sweeps, mass laws, hard path invariants and
//! finite-difference gradient checks of every kernel adjoint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diagnostics::{classify_errors, compute_metrics, ErrorThresholds};
use crate::error::Result;
use crate::hard_decoder::{decode_hard, FrozenProbabilities, HardFamily, SamplerConfig};
use crate::kernels::*;
use crate::matrix::Matrix;
use crate::oracle::{enumerate_monotonic, enumerate_stepwise};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Worst discrepancy seen over a sweep of random instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub name: String,
    pub instances: usize,
    /// Instances whose error was within `tolerance`.
    pub passed: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl SweepReport {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            instances: 0,
            passed: 0,
            max_error: 0.0,
            tolerance,
        }
    }

    fn record(&mut self, err: f64) {
        self.instances += 1;
        if err <= self.tolerance {
            self.passed += 1;
        }
        if !(err <= self.max_error) {
            self.max_error = err;
        }
    }

    pub fn ok(&self) -> bool {
        self.instances > 0 && self.passed == self.instances
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {}/{} instances within {:e} (max error {:.3e})",
            self.name, self.passed, self.instances, self.tolerance, self.max_error
        )
    }
}

fn max_abs_diff(a: &AlignmentMatrix<f64>, b: &AlignmentMatrix<f64>) -> f64 {
    a.rows
        .iter()
        .zip(&b.rows)
        .flat_map(|(x, y)| x.weights().iter().zip(y.weights()).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

/// Probabilities drawn uniformly from `(lo, 1 - lo)`.
pub fn random_probabilities(rng: &mut impl Rng, t: usize, n: usize, lo: f64) -> SelectionProbabilityMatrix<f64> {
    let data = (0..t * n).map(|_| rng.random_range(lo..1.0 - lo)).collect();
    SelectionProbabilityMatrix::new(Matrix::from_vec(t, n, data).expect("shape")).expect("in range")
}

/// A random distribution over `n` entries, or the first entry for half the draws.
pub fn random_initial(rng: &mut impl Rng, n: usize) -> AlignmentRow<f64> {
    if rng.random_bool(0.5) {
        return AlignmentRow::one_hot(n, 0);
    }
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    AlignmentRow::new(w.into_iter().map(|v| v / s).collect()).expect("nonnegative")
}

/// Iterates a row recursion over every probability row.
pub fn iterate_rows(
    initial: &AlignmentRow<f64>,
    p: &SelectionProbabilityMatrix<f64>,
    mut step: impl FnMut(&AlignmentRow<f64>, &[f64]) -> Result<AlignmentRow<f64>>,
    policy: EdgePolicy,
) -> Result<AlignmentMatrix<f64>> {
    let mut prev = initial.clone();
    let mut rows = Vec::with_capacity(p.steps());
    for i in 0..p.steps() {
        let next = step(&prev, p.row(i))?;
        rows.push(next.clone());
        prev = next;
    }
    AlignmentMatrix::new(rows, policy)
}

/// Stepwise recursion against exhaustive enumeration on one instance.
pub fn stepwise_error(
    initial: &AlignmentRow<f64>,
    p: &SelectionProbabilityMatrix<f64>,
    policy: EdgePolicy,
) -> Result<f64> {
    let exact = enumerate_stepwise(initial, p, policy)?;
    let rec = iterate_rows(initial, p, |prev, row| sma_alignment(prev, row, policy), policy)?;
    Ok(max_abs_diff(&exact.alignment, &rec))
}

/// Monotonic recursion against exhaustive enumeration on one instance.
pub fn monotonic_error(initial: &AlignmentRow<f64>, p: &SelectionProbabilityMatrix<f64>) -> Result<f64> {
    let exact = enumerate_monotonic(initial, p)?;
    let rec = iterate_rows(initial, p, ma_alignment_recursive, EdgePolicy::Leak)?;
    Ok(max_abs_diff(&exact.alignment, &rec))
}

pub fn stepwise_sweep(instances: usize, seed: u64, max_size: usize, policy: EdgePolicy) -> Result<SweepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = match policy {
        EdgePolicy::Clamp => "stepwise recursion vs enumeration (clamp)",
        EdgePolicy::Leak => "stepwise recursion vs enumeration (leak)",
    };
    let mut report = SweepReport::new(name, 1e-12);
    for _ in 0..instances {
        let t = rng.random_range(1..=max_size);
        let n = rng.random_range(1..=max_size);
        let p = random_probabilities(&mut rng, t, n, 1e-3);
        let init = random_initial(&mut rng, n);
        report.record(stepwise_error(&init, &p, policy)?);
    }
    Ok(report)
}

pub fn monotonic_sweep(instances: usize, seed: u64, max_size: usize) -> Result<SweepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SweepReport::new("monotonic recursion vs enumeration", 1e-12);
    for _ in 0..instances {
        let t = rng.random_range(1..=max_size);
        let n = rng.random_range(1..=max_size);
        let p = random_probabilities(&mut rng, t, n, 1e-3);
        let init = random_initial(&mut rng, n);
        report.record(monotonic_error(&init, &p)?);
    }
    Ok(report)
}

/// Parallel (cumulative product) form against the recursive form, one step
/// at a time, `p ∈ [0.01, 0.99]`.
pub fn parallel_sweep(instances: usize, seed: u64, max_n: usize) -> Result<SweepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SweepReport::new("monotonic parallel vs recursive form", 1e-10);
    for _ in 0..instances {
        let n = rng.random_range(1..=max_n);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..=0.99)).collect();
        let prev = random_initial(&mut rng, n);
        let a = ma_alignment_recursive(&prev, &p)?;
        let b = ma_alignment_parallel(&prev, &p)?;
        let err = a
            .weights()
            .iter()
            .zip(b.row.weights())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        report.record(err);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassLawReport {
    pub steps: usize,
    /// Largest `|1 − mass|` after a clamp step from a unit-mass row.
    pub clamp_max_deviation: f64,
    /// Largest `|(mass before − mass after) − leak term|` under leak.
    pub leak_max_deviation: f64,
    /// Monotonic steps whose output mass exceeded the input mass.
    pub monotonic_increases: usize,
}

impl MassLawReport {
    pub fn ok(&self) -> bool {
        self.clamp_max_deviation <= 1e-12 && self.leak_max_deviation <= 1e-12 && self.monotonic_increases == 0
    }
}

/// Runs `steps` random single steps of each recursion, chaining rows so
/// later steps see realistic, partly leaked inputs.
pub fn mass_law_sweep(steps: usize, seed: u64) -> Result<MassLawReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MassLawReport {
        steps,
        clamp_max_deviation: 0.0,
        leak_max_deviation: 0.0,
        monotonic_increases: 0,
    };
    let mut n = 1;
    let (mut clamp, mut leak, mut ma) = (AlignmentRow::one_hot(1, 0), AlignmentRow::one_hot(1, 0), AlignmentRow::one_hot(1, 0));
    for k in 0..steps {
        if k % 50 == 0 {
            n = rng.random_range(1..=20);
            clamp = random_initial(&mut rng, n);
            leak = random_initial(&mut rng, n);
            ma = random_initial(&mut rng, n);
        }
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(1e-7..1.0 - 1e-7)).collect();

        let next = sma_alignment(&clamp, &p, EdgePolicy::Clamp)?;
        report.clamp_max_deviation = report.clamp_max_deviation.max((1.0 - next.mass()).abs());
        // renormalize so drift cannot accumulate across the chain
        let m = next.mass();
        clamp = AlignmentRow::new(next.into_weights().into_iter().map(|v| v / m).collect())?;

        let next = sma_alignment(&leak, &p, EdgePolicy::Leak)?;
        let deficit = leak.mass() - next.mass();
        let dev = (deficit - sma_leak_term(&leak, &p, EdgePolicy::Leak)).abs();
        report.leak_max_deviation = report.leak_max_deviation.max(dev);
        leak = if next.mass() < 1e-3 { random_initial(&mut rng, n) } else { next };

        let next = ma_alignment_recursive(&ma, &p)?;
        if next.mass() > ma.mass() {
            report.monotonic_increases += 1;
        }
        ma = if next.mass() < 1e-3 { random_initial(&mut rng, n) } else { next };
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathInvariantReport {
    pub stepwise_paths: usize,
    pub stepwise_bad_increments: usize,
    pub stepwise_gaps: usize,
    /// Stepwise paths with a nonzero skip or repeat count.
    pub stepwise_classified_errors: usize,
    pub monotonic_paths: usize,
    pub monotonic_decreasing: usize,
}

impl PathInvariantReport {
    pub fn ok(&self) -> bool {
        self.stepwise_bad_increments == 0
            && self.stepwise_gaps == 0
            && self.stepwise_classified_errors == 0
            && self.monotonic_decreasing == 0
    }
}

/// Samples `paths` hard paths of each family on random frozen probabilities.
pub fn path_invariant_sweep(paths: usize, seed: u64) -> Result<PathInvariantReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PathInvariantReport {
        stepwise_paths: 0,
        stepwise_bad_increments: 0,
        stepwise_gaps: 0,
        stepwise_classified_errors: 0,
        monotonic_paths: 0,
        monotonic_decreasing: 0,
    };
    let thresholds = ErrorThresholds::default();
    for _ in 0..paths {
        let t = rng.random_range(1..=30);
        let n = rng.random_range(1..=15);
        let lo = if rng.random_bool(0.5) { 1e-3 } else { 0.2 };
        let p = random_probabilities(&mut rng, t, n, lo);
        let memory = MemorySequence::new(Matrix::<f64>::zeros(n, 1))?;
        let sampler = SamplerConfig::sampled(0, t);
        let policy = if rng.random_bool(0.5) { EdgePolicy::Clamp } else { EdgePolicy::Leak };

        let out = decode_hard(&memory, HardFamily::Stepwise(policy), &sampler, &mut rng, &mut FrozenProbabilities::new(&p))?;
        report.stepwise_paths += 1;
        let path = &out.path;
        if !path.has_unit_increments() {
            report.stepwise_bad_increments += 1;
        }
        if !path.has_prefix_coverage() {
            report.stepwise_gaps += 1;
        }
        if !path.is_empty() {
            // only the visited prefix is expected to be covered
            let reached = path.positions.iter().copied().max().unwrap_or(0) + 1;
            let metrics = compute_metrics::<f64>(path, reached)?;
            let c = classify_errors(&metrics, &thresholds, &[])?;
            if c.skip_events > 0 || c.repeat_events > 0 {
                report.stepwise_classified_errors += 1;
            }
        }

        let out = decode_hard(&memory, HardFamily::Monotonic, &sampler, &mut rng, &mut FrozenProbabilities::new(&p))?;
        report.monotonic_paths += 1;
        if !out.path.is_nondecreasing() {
            report.monotonic_decreasing += 1;
        }
    }
    Ok(report)
}

/// `|a − b| / max(|a|, |b|, GRAD_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// Central differences of a scalar function.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub name: String,
    pub parameters: usize,
    pub max_relative_error: f64,
}

impl GradCheck {
    pub fn compare(name: &str, analytic: &[f64], numeric: &[f64]) -> Self {
        assert_eq!(analytic.len(), numeric.len(), "{name}: gradient length mismatch");
        let max_relative_error = analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &b)| relative_error(a, b))
            .fold(0.0, |m: f64, e| if e.is_nan() { f64::INFINITY } else { m.max(e) });
        Self {
            name: name.to_string(),
            parameters: analytic.len(),
            max_relative_error,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normals(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn positive(rng: &mut impl Rng, k: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(lo..hi)).collect()
}

fn row(v: &[f64]) -> AlignmentRow<f64> {
    AlignmentRow::new(v.to_vec()).expect("valid row")
}

fn split<const K: usize>(x: &[f64], sizes: [usize; K]) -> [&[f64]; K] {
    let mut out = [&x[..0]; K];
    let mut at = 0;
    for (o, s) in out.iter_mut().zip(sizes) {
        *o = &x[at..at + s];
        at += s;
    }
    out
}

fn flatten_energy_params(p: &EnergyParams<f64>) -> Vec<f64> {
    let mut v = Vec::new();
    v.extend_from_slice(p.query_weights.as_slice());
    v.extend_from_slice(p.key_weights.as_slice());
    v.extend_from_slice(p.location_weights.as_slice());
    v.extend_from_slice(&p.hidden_bias);
    v.extend_from_slice(&p.score_vector);
    v.push(p.gain);
    v.push(p.bias);
    v
}

fn unflatten_energy_params(template: &EnergyParams<f64>, x: &[f64]) -> EnergyParams<f64> {
    let mut p = template.clone();
    let mut at = 0;
    for dst in [
        p.query_weights.as_mut_slice(),
        p.key_weights.as_mut_slice(),
        p.location_weights.as_mut_slice(),
        &mut p.hidden_bias[..],
        &mut p.score_vector[..],
    ] {
        let k = dst.len();
        dst.copy_from_slice(&x[at..at + k]);
        at += k;
    }
    p.gain = x[at];
    p.bias = x[at + 1];
    p
}

/// Checks one kernel instance: `f(x)` is projected on a random direction `w`
/// and the analytic gradient is `adjoint(x, w)`.
fn check_projected(
    name: &str,
    rng: &mut impl Rng,
    x: &[f64],
    out_len: usize,
    f: impl Fn(&[f64]) -> Vec<f64>,
    adjoint: impl Fn(&[f64], &[f64]) -> Vec<f64>,
) -> GradCheck {
    let w = normals(rng, out_len);
    let analytic = adjoint(x, &w);
    let numeric = central_difference(|z| dot(&f(z), &w), x, FD_STEP);
    GradCheck::compare(name, &analytic, &numeric)
}

/// One random instance of every kernel adjoint checked against central
/// differences. Inputs are kept away from clamps and kinks.
pub fn kernel_gradient_checks(rng: &mut impl Rng) -> Result<Vec<GradCheck>> {
    let n = rng.random_range(2..=7);
    let d = rng.random_range(1..=4);
    let mut out = Vec::new();

    // softmax
    let e = normals(rng, n);
    out.push(check_projected(
        "softmax",
        rng,
        &e,
        n,
        |x| softmax_alignment(&EnergyRow(x.to_vec())).unwrap().into_weights(),
        |x, w| softmax_alignment_adjoint(&softmax_alignment(&EnergyRow(x.to_vec())).unwrap(), w).unwrap(),
    ));

    // context vector in both arguments
    let mut x0 = positive(rng, n, 0.1, 1.0);
    x0.extend(normals(rng, n * d));
    out.push(check_projected(
        "context vector",
        rng,
        &x0,
        d,
        |x| {
            let [a, m] = split(x, [n, n * d]);
            let mem = MemorySequence::new(Matrix::from_vec(n, d, m.to_vec()).unwrap()).unwrap();
            context_vector(&row(a), &mem).unwrap().0
        },
        |x, w| {
            let [a, m] = split(x, [n, n * d]);
            let mem = MemorySequence::new(Matrix::from_vec(n, d, m.to_vec()).unwrap()).unwrap();
            let (da, dm) = context_vector_adjoint(&row(a), &mem, w).unwrap();
            da.into_iter().chain(dm.into_iter().flatten()).collect()
        },
    ));

    // selection probabilities, away from the clamp
    let e: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
    out.push(check_projected(
        "selection probabilities",
        rng,
        &e,
        n,
        |x| selection_probabilities(&EnergyRow(x.to_vec())).unwrap(),
        |x, w| selection_probabilities_adjoint(&EnergyRow(x.to_vec()), w).unwrap(),
    ));

    // row recursions in (prev, p)
    let mut x0 = positive(rng, n, 0.05, 1.0);
    let s: f64 = x0.iter().sum();
    x0.iter_mut().for_each(|v| *v /= s);
    x0.extend(positive(rng, n, 0.05, 0.95));
    let pair = |x: &[f64]| {
        let [a, p] = split(x, [n, n]);
        (row(a), p.to_vec())
    };
    out.push(check_projected(
        "monotonic recursive",
        rng,
        &x0,
        n,
        |x| {
            let (a, p) = pair(x);
            ma_alignment_recursive(&a, &p).unwrap().into_weights()
        },
        |x, w| {
            let (a, p) = pair(x);
            let (da, dp) = ma_alignment_recursive_adjoint(&a, &p, w).unwrap();
            [da, dp].concat()
        },
    ));
    out.push(check_projected(
        "monotonic parallel",
        rng,
        &x0,
        n,
        |x| {
            let (a, p) = pair(x);
            ma_alignment_parallel(&a, &p).unwrap().row.into_weights()
        },
        |x, w| {
            let (a, p) = pair(x);
            let (da, dp) = ma_alignment_parallel_adjoint(&a, &p, w).unwrap();
            [da, dp].concat()
        },
    ));
    for (policy, name) in [(EdgePolicy::Clamp, "stepwise clamp"), (EdgePolicy::Leak, "stepwise leak")] {
        out.push(check_projected(
            name,
            rng,
            &x0,
            n,
            |x| {
                let (a, p) = pair(x);
                sma_alignment(&a, &p, policy).unwrap().into_weights()
            },
            |x, w| {
                let (a, p) = pair(x);
                let (da, dp) = sma_alignment_adjoint(&a, &p, policy, w).unwrap();
                [da, dp].concat()
            },
        ));
    }

    // location features in (prev, filters)
    let channels = rng.random_range(1..=3);
    let width = 2 * rng.random_range(0..=2) + 1;
    let mut x0 = positive(rng, n, 0.05, 1.0);
    x0.extend(normals(rng, channels * width));
    let loc = |x: &[f64]| {
        let [a, f] = split(x, [n, channels * width]);
        (row(a), Matrix::from_vec(channels, width, f.to_vec()).unwrap())
    };
    out.push(check_projected(
        "location features",
        rng,
        &x0,
        n * channels,
        |x| {
            let (a, f) = loc(x);
            location_features(&a, &f).unwrap().0.as_slice().to_vec()
        },
        |x, w| {
            let (a, f) = loc(x);
            let g = Matrix::from_vec(n, channels, w.to_vec()).unwrap();
            let (da, df) = location_features_adjoint(&a, &f, &g).unwrap();
            da.into_iter().chain(df.as_slice().iter().copied()).collect()
        },
    ));

    // energy in (query, memory, location, params)
    let (a_dim, q_dim) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let f_dim = rng.random_range(0..=2);
    let mut template = EnergyParams::<f64>::zeros(a_dim, q_dim, d, f_dim);
    let mut init = normals(rng, flatten_energy_params(&template).len());
    let len = init.len();
    init[len - 2] = rng.random_range(0.5..2.0); // gain
    template.noise_scale = 0.0;
    let mut x0 = normals(rng, q_dim + n * d + n * f_dim);
    x0.extend(init);
    let sizes = [q_dim, n * d, n * f_dim, len];
    let energy_inputs = |x: &[f64]| {
        let [q, m, l, p] = split(x, sizes);
        let mem = MemorySequence::new(Matrix::from_vec(n, d, m.to_vec()).unwrap()).unwrap();
        let lf = (f_dim > 0).then(|| LocationFeatures(Matrix::from_vec(n, f_dim, l.to_vec()).unwrap()));
        (q.to_vec(), mem, lf, unflatten_energy_params(&template, p))
    };
    out.push(check_projected(
        "energy",
        rng,
        &x0,
        n,
        |x| {
            let (q, mem, lf, p) = energy_inputs(x);
            compute_energy(&q, &mem, &p, lf.as_ref(), false, None).unwrap().0
        },
        |x, w| {
            let (q, mem, lf, p) = energy_inputs(x);
            let g = compute_energy_adjoint(&q, &mem, &p, lf.as_ref(), w).unwrap();
            let mut v = g.query;
            v.extend(g.memory.into_iter().flatten());
            if let Some(l) = g.location {
                v.extend(l.into_iter().flatten());
            }
            v.extend(flatten_energy_params(&g.params));
            v
        },
    ));

    // forward attention in (prev, softmax row[, u])
    for (use_ta, name) in [(false, "forward attention"), (true, "forward attention with transition agent")] {
        let mut x0 = positive(rng, 2 * n, 0.05, 1.0);
        if use_ta {
            x0.push(rng.random_range(0.1..0.9));
        }
        let state = |x: &[f64]| {
            let [a, y] = split(x, [n, n]);
            let st = ForwardAttentionState {
                prev_alignment: row(a),
                transition_prob: use_ta.then(|| x[2 * n]),
            };
            (st, row(y))
        };
        out.push(check_projected(
            name,
            rng,
            &x0,
            n,
            |x| {
                let (st, y) = state(x);
                forward_attention_step(&st, &y, use_ta).unwrap().row.into_weights()
            },
            |x, w| {
                let (st, y) = state(x);
                let g = forward_attention_step_adjoint(&st, &y, use_ta, w).unwrap();
                let mut v = [g.prev_alignment, g.softmax_row].concat();
                if use_ta {
                    v.push(g.transition_prob);
                }
                v
            },
        ));
    }

    // mixture step in (previous centers, raw updates); the projection also
    // covers the new centers
    let k = rng.random_range(1..=3);
    for (renorm, name) in [(false, "gmm step"), (true, "gmm step renormalized")] {
        let mut x0 = positive(rng, k, 0.0, n as f64);
        x0.extend((0..3 * k).map(|_| rng.random_range(-1.0..0.5)));
        let inputs = |x: &[f64]| {
            let [c, u] = split(x, [k, 3 * k]);
            let state = GmmAttentionState {
                components: c
                    .iter()
                    .map(|&center| GmmComponent { weight: 1.0, center, width: 1.0 })
                    .collect(),
            };
            let updates: Vec<GmmUpdate<f64>> = u
                .chunks(3)
                .map(|r| GmmUpdate { raw_weight: r[0], raw_shift: r[1], raw_width: r[2] })
                .collect();
            (state, updates)
        };
        out.push(check_projected(
            name,
            rng,
            &x0,
            n + k,
            |x| {
                let (state, updates) = inputs(x);
                let (r, next) = gmm_attention_step(&state, &updates, n, renorm).unwrap();
                let mut v = r.into_weights();
                v.extend(next.centers());
                v
            },
            |x, w| {
                let (state, updates) = inputs(x);
                let g = gmm_attention_step_adjoint(&state, &updates, n, renorm, &w[..n], &w[n..]).unwrap();
                let mut v = g.prev_centers;
                for u in g.updates {
                    v.extend([u.raw_weight, u.raw_shift, u.raw_width]);
                }
                v
            },
        ));
    }
    Ok(out)
}

/// [`kernel_gradient_checks`] over `instances` seeded draws; returns the worst
/// check per kernel.
pub fn kernel_gradient_sweep(instances: usize, seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Vec<GradCheck> = Vec::new();
    for _ in 0..instances {
        for c in kernel_gradient_checks(&mut rng)? {
            match worst.iter_mut().find(|w| w.name == c.name) {
                Some(w) => {
                    w.parameters = w.parameters.max(c.parameters);
                    if !(c.max_relative_error <= w.max_relative_error) {
                        w.max_relative_error = c.max_relative_error;
                    }
                }
                None => worst.push(c),
            }
        }
    }
    Ok(worst)
}
