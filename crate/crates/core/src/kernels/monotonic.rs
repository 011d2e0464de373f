//! Selection probabilities and the monotonic-attention expected alignment.
//!
//! `p_j` is the probability that a left-to-right scan starting at the
//! previously attended entry stops at `j`. The expected alignment is
//!
//! ```text
//! q_1 = α'_1
//! q_j = (1 - p_{j-1}) q_{j-1} + α'_j
//! α_j = p_j q_j
//! ```
//!
//! where `α'` is the previous row. This is the division-free form of the
//! classic recursion (`q = α / p`). The parallel variant evaluates the same
//! quantity with an exclusive cumulative product and a cumulative sum.

use super::{check_probabilities, AlignmentRow, EnergyRow};
use crate::error::{check_len, Result};
use crate::scalar::{sigmoid, Scalar};

/// Clamp applied to sigmoid outputs: `p ∈ [ε, 1 − ε]`.
pub const SIGMOID_EPS: f64 = 1e-7;

/// Cumulative-product level at which the parallel form rebases its scan.
pub const DENOM_FLOOR: f64 = 1e-10;

/// Elementwise logistic sigmoid clamped into `[ε, 1 − ε]`.
pub fn selection_probabilities<S: Scalar>(energies: &EnergyRow<S>) -> Result<Vec<S>> {
    energies.check_finite()?;
    let eps = S::lit(SIGMOID_EPS);
    let hi = S::one() - eps;
    Ok(energies
        .values()
        .iter()
        .map(|&e| sigmoid(e).max(eps).min(hi))
        .collect())
}

/// Gradient w.r.t. the energies. Zero where the clamp is active.
pub fn selection_probabilities_adjoint<S: Scalar>(
    energies: &EnergyRow<S>,
    grad_p: &[S],
) -> Result<Vec<S>> {
    check_len("selection adjoint", energies.len(), grad_p.len())?;
    let eps = S::lit(SIGMOID_EPS);
    let hi = S::one() - eps;
    Ok(energies
        .values()
        .iter()
        .zip(grad_p)
        .map(|(&e, &g)| {
            let s = sigmoid(e);
            if s <= eps || s >= hi {
                S::zero()
            } else {
                g * s * (S::one() - s)
            }
        })
        .collect())
}

fn check_row_inputs<S: Scalar>(prev: &AlignmentRow<S>, p: &[S]) -> Result<()> {
    check_len("probability row", prev.len(), p.len())?;
    check_probabilities(p)
}

fn scan_inflow<S: Scalar>(prev: &[S], p: &[S]) -> Vec<S> {
    let mut q = Vec::with_capacity(prev.len());
    let mut carry = S::zero();
    for j in 0..prev.len() {
        let qj = carry + prev[j];
        q.push(qj);
        carry = (S::one() - p[j]) * qj;
    }
    q
}

/// Monotonic attention expected alignment, recursive form.
pub fn ma_alignment_recursive<S: Scalar>(
    prev: &AlignmentRow<S>,
    p: &[S],
) -> Result<AlignmentRow<S>> {
    check_row_inputs(prev, p)?;
    let q = scan_inflow(prev.weights(), p);
    Ok(AlignmentRow::from_kernel(
        q.iter().zip(p).map(|(&qj, &pj)| pj * qj).collect(),
    ))
}

/// Returns `(d prev, d p)`.
pub fn ma_alignment_recursive_adjoint<S: Scalar>(
    prev: &AlignmentRow<S>,
    p: &[S],
    grad_out: &[S],
) -> Result<(Vec<S>, Vec<S>)> {
    check_row_inputs(prev, p)?;
    check_len("alignment gradient", prev.len(), grad_out.len())?;
    let n = p.len();
    let q = scan_inflow(prev.weights(), p);
    let mut d_prev = vec![S::zero(); n];
    let mut d_p = vec![S::zero(); n];
    // gradient flowing into q_{j+1} from the right
    let mut d_next = S::zero();
    for j in (0..n).rev() {
        let mut d_q = grad_out[j] * p[j];
        d_p[j] = grad_out[j] * q[j];
        if j + 1 < n {
            d_q += d_next * (S::one() - p[j]);
            d_p[j] -= d_next * q[j];
        }
        d_prev[j] = d_q;
        d_next = d_q;
    }
    Ok((d_prev, d_p))
}

/// Output of the parallel (cumulative product / sum) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelAlignment<S> {
    pub row: AlignmentRow<S>,
    /// Set when the cumulative product fell below [`DENOM_FLOOR`] and the scan was rebased.
    pub stability_warning: bool,
}

/// Monotonic attention expected alignment, parallel form:
/// `α = p · cumprod(1 − p) · cumsum(α' / cumprod(1 − p))` with exclusive cumprod.
///
/// When the running cumprod would drop below [`DENOM_FLOOR`] the scan is
/// rebased: the partial sum is folded into a carried inflow and the cumprod
/// restarts at one. Clamping the denominator instead would silently drop
/// mass sitting beyond the underflow point. The warning flag records that a
/// rebase happened.
pub fn ma_alignment_parallel<S: Scalar>(
    prev: &AlignmentRow<S>,
    p: &[S],
) -> Result<ParallelAlignment<S>> {
    check_row_inputs(prev, p)?;
    let floor = S::lit(DENOM_FLOOR);
    let mut warning = false;
    let mut cp = S::one();
    let mut running = S::zero();
    let mut out = Vec::with_capacity(p.len());
    for (j, &pj) in p.iter().enumerate() {
        if cp < floor {
            warning = true;
            running *= cp;
            cp = S::one();
        }
        running += prev.weights()[j] / cp;
        out.push(pj * cp * running);
        cp *= S::one() - pj;
    }
    Ok(ParallelAlignment {
        row: AlignmentRow::from_kernel(out),
        stability_warning: warning,
    })
}

/// Adjoint of [`ma_alignment_parallel`]. Rebasing leaves the function equal
/// to the recursive form, so the recursive adjoint is exact here too.
/// Returns `(d prev, d p)`.
pub fn ma_alignment_parallel_adjoint<S: Scalar>(
    prev: &AlignmentRow<S>,
    p: &[S],
    grad_out: &[S],
) -> Result<(Vec<S>, Vec<S>)> {
    ma_alignment_recursive_adjoint(prev, p, grad_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn row(v: &[f64]) -> AlignmentRow<f64> {
        AlignmentRow::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sigmoid_midpoint_and_initial_bias() {
        let p = selection_probabilities(&EnergyRow(vec![0.0, 3.5])).unwrap();
        assert_eq!(p[0], 0.5);
        // 1 / (1 + e^{-3.5})
        assert_abs_diff_eq!(p[1], 0.970_687_769_248_643_6, epsilon = 1e-15);
    }

    #[test]
    fn saturated_energy_clamps() {
        let p = selection_probabilities(&EnergyRow(vec![1e9, -1e9])).unwrap();
        assert_eq!(p[0], 1.0 - SIGMOID_EPS);
        assert_eq!(p[1], SIGMOID_EPS);
        let g = selection_probabilities_adjoint(&EnergyRow(vec![1e9, -1e9]), &[1.0, 1.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn single_entry_leaks_remainder() {
        let a = ma_alignment_recursive(&row(&[1.0]), &[0.7]).unwrap();
        assert_abs_diff_eq!(a.weights()[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(1.0 - a.mass(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn two_entry_stop_enumeration() {
        // stop at 1 w.p. 0.5; pass then stop at 2 w.p. 0.25; leak 0.25
        let a = ma_alignment_recursive(&row(&[1.0, 0.0]), &[0.5, 0.5]).unwrap();
        assert_eq!(a.weights(), &[0.5, 0.25]);
        let b = ma_alignment_parallel(&row(&[1.0, 0.0]), &[0.5, 0.5]).unwrap();
        assert_eq!(b.row.weights(), &[0.5, 0.25]);
        assert!(!b.stability_warning);
    }

    #[test]
    fn mass_at_second_entry() {
        let a = ma_alignment_recursive(&row(&[0.0, 1.0]), &[0.9, 0.4]).unwrap();
        assert_abs_diff_eq!(a.weights()[0], 0.0);
        assert_abs_diff_eq!(a.weights()[1], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn parallel_rebase_flags_and_stays_exact() {
        let n = 50;
        let mut prev = vec![0.0; n];
        prev[0] = 1.0;
        let prev = row(&prev);
        let p = vec![0.99; n];
        let rec = ma_alignment_recursive(&prev, &p).unwrap();
        let par = ma_alignment_parallel(&prev, &p).unwrap();
        assert!(par.stability_warning);
        for (a, b) in rec.weights().iter().zip(par.row.weights()) {
            assert!((a - b).abs() <= 1e-12);
        }
        // mass far beyond the underflow point is kept
        let mut deep = vec![0.0; n];
        deep[40] = 1.0;
        let deep = row(&deep);
        let rec = ma_alignment_recursive(&deep, &p).unwrap();
        let par = ma_alignment_parallel(&deep, &p).unwrap();
        assert!(par.stability_warning);
        assert_abs_diff_eq!(par.row.weights()[40], 0.99, epsilon = 1e-12);
        for (a, b) in rec.weights().iter().zip(par.row.weights()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn probabilities_out_of_range_rejected() {
        assert!(ma_alignment_recursive(&row(&[1.0, 0.0]), &[1.5, 0.5]).is_err());
        assert!(ma_alignment_recursive(&row(&[1.0, 0.0]), &[0.5]).is_err());
    }
}
