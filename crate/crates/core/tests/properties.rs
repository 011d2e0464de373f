use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smattn::diagnostics::{classify_errors, compute_metrics, ErrorThresholds};
use smattn::hard_decoder::{decode_hard, FrozenProbabilities, HardAlignmentPath, HardFamily, SamplerConfig};
use smattn::kernels::*;
use smattn::matrix::Matrix;
use smattn::oracle::{enumerate_stepwise, list_stepwise_paths, marginals_from_paths};

fn row(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    })
}

fn row_and_p() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=24).prop_flat_map(|n| (row(n), prop::collection::vec(0.0f64..=1.0, n)))
}

fn probs(t: usize, n: usize) -> impl Strategy<Value = SelectionProbabilityMatrix<f64>> {
    prop::collection::vec(0.02f64..0.98, t * n)
        .prop_map(move |d| SelectionProbabilityMatrix::new(Matrix::from_vec(t, n, d).unwrap()).unwrap())
}

proptest! {
    #[test]
    fn clamp_conserves_mass((w, p) in row_and_p()) {
        let prev = AlignmentRow::new(w).unwrap();
        let next = sma_alignment(&prev, &p, EdgePolicy::Clamp).unwrap();
        prop_assert!((next.mass() - prev.mass()).abs() <= 1e-12);
        prop_assert!(next.weights().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn leak_deficit_is_the_leak_term((w, p) in row_and_p()) {
        let prev = AlignmentRow::new(w).unwrap();
        let next = sma_alignment(&prev, &p, EdgePolicy::Leak).unwrap();
        let leak = sma_leak_term(&prev, &p, EdgePolicy::Leak);
        prop_assert!((prev.mass() - next.mass() - leak).abs() <= 1e-12);
    }

    #[test]
    fn monotonic_mass_never_grows((w, p) in row_and_p()) {
        let prev = AlignmentRow::new(w).unwrap();
        let next = ma_alignment_recursive(&prev, &p).unwrap();
        prop_assert!(next.mass() <= prev.mass() + 1e-12);
    }

    #[test]
    fn parallel_form_agrees((w, p) in (1usize..=64).prop_flat_map(|n| (row(n), prop::collection::vec(0.01f64..=0.99, n)))) {
        let prev = AlignmentRow::new(w).unwrap();
        let a = ma_alignment_recursive(&prev, &p).unwrap();
        let b = ma_alignment_parallel(&prev, &p).unwrap();
        for (x, y) in a.weights().iter().zip(b.row.weights()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn softmax_is_a_distribution(e in prop::collection::vec(-30.0f64..30.0, 1..32)) {
        let a = softmax_alignment(&EnergyRow(e)).unwrap();
        prop_assert!((a.mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn stepwise_paths_reproduce_enumeration(p in (1usize..=5, 1usize..=5).prop_flat_map(|(t, n)| probs(t, n))) {
        let n = p.memory_len();
        let start = AlignmentRow::one_hot(n, 0);
        for policy in [EdgePolicy::Clamp, EdgePolicy::Leak] {
            let exact = enumerate_stepwise(&start, &p, policy).unwrap();
            let paths = list_stepwise_paths(&start, &p, policy).unwrap();
            let listed = marginals_from_paths(&paths, p.steps(), n, policy).unwrap().alignment;
            for i in 0..p.steps() {
                for j in 0..n {
                    prop_assert!((exact.alignment.get(i, j) - listed.get(i, j)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn sampled_hard_paths_keep_their_shape(p in (1usize..=30, 1usize..=12).prop_flat_map(|(t, n)| probs(t, n)), seed in any::<u64>()) {
        let n = p.memory_len();
        let memory = MemorySequence::new(Matrix::<f64>::zeros(n, 2)).unwrap();
        let sampler = SamplerConfig::sampled(seed, p.steps());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sma = decode_hard(&memory, HardFamily::Stepwise(EdgePolicy::Clamp), &sampler, &mut rng, &mut FrozenProbabilities::new(&p)).unwrap();
        prop_assert!(sma.path.has_unit_increments());
        prop_assert!(sma.path.has_prefix_coverage());
        let c = classify_errors(&compute_metrics::<f64>(&sma.path, n).unwrap(), &ErrorThresholds::default(), &[]).unwrap();
        prop_assert_eq!(c.repeat_events, 0);
        prop_assert_eq!(c.skip_events, 0);
        let ma = decode_hard(&memory, HardFamily::Monotonic, &sampler, &mut rng, &mut FrozenProbabilities::new(&p)).unwrap();
        prop_assert!(ma.path.is_nondecreasing());
    }

    #[test]
    fn path_csv_round_trips(steps in prop::collection::vec(0usize..3, 0..40)) {
        let mut at = 0;
        let positions: Vec<usize> = steps.iter().map(|d| { at += d; at }).collect();
        let path = HardAlignmentPath::new(positions);
        prop_assert_eq!(HardAlignmentPath::from_csv(&path.to_csv()).unwrap(), path.clone());
        prop_assert_eq!(HardAlignmentPath::from_json(&path.to_json()).unwrap(), path);
    }
}
