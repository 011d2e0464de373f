use smattn::kernels::EdgePolicy;
use smattn::oracle::{decoder_marginals, max_total_variation, monte_carlo, Family};
use smattn::verify::*;

#[test]
fn stepwise_recursion_matches_enumeration() {
    for policy in [EdgePolicy::Clamp, EdgePolicy::Leak] {
        let r = stepwise_sweep(100, 11, 10, policy).unwrap();
        assert!(r.ok(), "{}", r.summary());
    }
}

#[test]
fn monotonic_recursion_matches_enumeration() {
    let r = monotonic_sweep(100, 12, 8).unwrap();
    assert!(r.ok(), "{}", r.summary());
}

#[test]
fn parallel_form_matches_recursive_form() {
    let r = parallel_sweep(200, 13, 64).unwrap();
    assert!(r.ok(), "{}", r.summary());
}

#[test]
fn mass_laws_hold() {
    let r = mass_law_sweep(10_000, 14).unwrap();
    assert!(r.ok(), "{r:?}");
}

#[test]
fn sampled_paths_respect_invariants() {
    let r = path_invariant_sweep(2_000, 15).unwrap();
    assert!(r.ok(), "{r:?}");
}

#[test]
fn hard_samples_match_closed_form_marginals() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(16);
    for family in [Family::Monotonic, Family::Stepwise(EdgePolicy::Clamp), Family::Stepwise(EdgePolicy::Leak)] {
        let p = random_probabilities(&mut rng, 8, 6, 0.05);
        let exact = decoder_marginals(&p, family).unwrap();
        let est = monte_carlo(&p, family, 20_000, 17).unwrap();
        let tv = max_total_variation(&est, &exact);
        assert!(tv < 0.03, "{family:?}: tv {tv}");
    }
}

#[test]
fn kernel_adjoints_match_finite_differences() {
    let checks = kernel_gradient_sweep(20, 18).unwrap();
    assert_eq!(checks.len(), 13);
    for c in &checks {
        assert!(c.max_relative_error <= 1e-4, "{c:?}");
    }
}
