//! Stepwise monotonic attention: each step the focus either stays (with the
//! stay probability `p_j`) or moves exactly one entry forward.
//!
//! ```text
//! α_j = α'_j p_j + α'_{j-1} (1 - p_{j-1}),   α'_{-1} := 0
//! ```

use super::{check_probabilities, AlignmentRow, EdgePolicy};
use crate::error::{check_len, Result};
use crate::scalar::Scalar;

fn check_inputs<S: Scalar>(prev: &AlignmentRow<S>, p: &[S]) -> Result<()> {
    check_len("probability row", prev.len(), p.len())?;
    check_probabilities(p)
}

/// One stepwise recursion step. Under [`EdgePolicy::Clamp`] the stay
/// probability at the last entry is treated as one, so mass is conserved.
pub fn sma_alignment<S: Scalar>(
    prev: &AlignmentRow<S>,
    p: &[S],
    edge_policy: EdgePolicy,
) -> Result<AlignmentRow<S>> {
    check_inputs(prev, p)?;
    let a = prev.weights();
    let n = a.len();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let stay = if j + 1 == n && edge_policy == EdgePolicy::Clamp {
            S::one()
        } else {
            p[j]
        };
        let mut v = a[j] * stay;
        if j > 0 {
            v += a[j - 1] * (S::one() - p[j - 1]);
        }
        out.push(v);
    }
    Ok(AlignmentRow::from_kernel(out))
}

/// Mass that exits past the last entry in one step: `α'_n (1 - p_n)` under
/// leak, zero under clamp.
pub fn sma_leak_term<S: Scalar>(prev: &AlignmentRow<S>, p: &[S], edge_policy: EdgePolicy) -> S {
    match edge_policy {
        EdgePolicy::Clamp => S::zero(),
        EdgePolicy::Leak => {
            let n = prev.len();
            prev.weights()[n - 1] * (S::one() - p[n - 1])
        }
    }
}

/// Returns `(d prev, d p)`.
pub fn sma_alignment_adjoint<S: Scalar>(
    prev: &AlignmentRow<S>,
    p: &[S],
    edge_policy: EdgePolicy,
    grad_out: &[S],
) -> Result<(Vec<S>, Vec<S>)> {
    check_inputs(prev, p)?;
    check_len("alignment gradient", prev.len(), grad_out.len())?;
    let a = prev.weights();
    let n = a.len();
    let mut d_prev = vec![S::zero(); n];
    let mut d_p = vec![S::zero(); n];
    for j in 0..n {
        let g = grad_out[j];
        if j + 1 == n && edge_policy == EdgePolicy::Clamp {
            d_prev[j] += g;
        } else {
            d_prev[j] += g * p[j];
            d_p[j] += g * a[j];
        }
        if j > 0 {
            d_prev[j - 1] += g * (S::one() - p[j - 1]);
            d_p[j - 1] -= g * a[j - 1];
        }
    }
    Ok((d_prev, d_p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> AlignmentRow<f64> {
        AlignmentRow::new(v.to_vec()).unwrap()
    }

    #[test]
    fn single_entry_cannot_move_under_clamp() {
        for p in [0.0, 0.3, 1.0] {
            let a = sma_alignment(&row(&[1.0]), &[p], EdgePolicy::Clamp).unwrap();
            assert_eq!(a.weights(), &[1.0]);
        }
    }

    #[test]
    fn zero_stay_advances_one_per_step() {
        let p = [0.0; 3];
        let a1 = sma_alignment(&row(&[1.0, 0.0, 0.0]), &p, EdgePolicy::Clamp).unwrap();
        assert_eq!(a1.weights(), &[0.0, 1.0, 0.0]);
        let a2 = sma_alignment(&a1, &p, EdgePolicy::Clamp).unwrap();
        assert_eq!(a2.weights(), &[0.0, 0.0, 1.0]);
        let a3 = sma_alignment(&a2, &p, EdgePolicy::Clamp).unwrap();
        assert_eq!(a3.weights(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn three_token_hand_example() {
        let a = sma_alignment(&row(&[0.5, 0.5, 0.0]), &[0.2, 0.6, 0.9], EdgePolicy::Leak).unwrap();
        let expected = [0.1, 0.7, 0.2];
        for (x, y) in a.weights().iter().zip(expected) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn full_stay_is_identity() {
        let prev = row(&[0.1, 0.2, 0.3, 0.4]);
        for policy in [EdgePolicy::Clamp, EdgePolicy::Leak] {
            let a = sma_alignment(&prev, &[1.0; 4], policy).unwrap();
            assert_eq!(a.weights(), prev.weights());
        }
    }

    #[test]
    fn zero_stay_clamp_shifts_and_merges_tail() {
        let prev = row(&[0.1, 0.2, 0.3, 0.4]);
        let a = sma_alignment(&prev, &[0.0; 4], EdgePolicy::Clamp).unwrap();
        assert_eq!(a.weights(), &[0.0, 0.1, 0.2, 0.3 + 0.4]);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec(0.0f64..1.0, n),
                prop::collection::vec(0.0f64..=1.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn leak_mass_law((raw, p) in instance()) {
            let total: f64 = raw.iter().sum::<f64>() + 1e-3;
            let prev = row(&raw.iter().map(|v| v / total).collect::<Vec<_>>());
            let out = sma_alignment(&prev, &p, EdgePolicy::Leak).unwrap();
            let leak = sma_leak_term(&prev, &p, EdgePolicy::Leak);
            prop_assert!((out.mass() - (prev.mass() - leak)).abs() <= 1e-12);
            prop_assert!(out.weights().iter().all(|w| *w >= 0.0));
        }

        #[test]
        fn clamp_conserves_mass((raw, p) in instance()) {
            let prev = row(&raw);
            let out = sma_alignment(&prev, &p, EdgePolicy::Clamp).unwrap();
            prop_assert!((out.mass() - prev.mass()).abs() <= 1e-12);
        }

        #[test]
        fn support_moves_at_most_one((raw, p) in instance()) {
            let sparse: Vec<f64> = raw.iter().enumerate()
                .map(|(j, v)| if j % 3 == 1 { 0.0 } else { *v }).collect();
            let prev = row(&sparse);
            let out = sma_alignment(&prev, &p, EdgePolicy::Leak).unwrap();
            for (j, w) in out.weights().iter().enumerate() {
                if *w > 0.0 {
                    let here = prev.weights()[j] > 0.0;
                    let left = j > 0 && prev.weights()[j - 1] > 0.0;
                    prop_assert!(here || left);
                }
            }
        }
    }
}
