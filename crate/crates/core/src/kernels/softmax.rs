use super::{AlignmentRow, ContextVector, EnergyRow, MemorySequence};
use crate::error::{check_len, Result};
use crate::scalar::Scalar;

/// Softmax over one energy row, with max-subtraction.
pub fn softmax_alignment<S: Scalar>(energies: &EnergyRow<S>) -> Result<AlignmentRow<S>> {
    energies.check_finite()?;
    let e = energies.values();
    let max = e.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = e.iter().map(|&v| (v - max).exp()).collect();
    let total: S = exps.iter().copied().sum();
    Ok(AlignmentRow::from_kernel(
        exps.into_iter().map(|v| v / total).collect(),
    ))
}

/// Gradient w.r.t. the energies given the upstream gradient on the softmax output.
pub fn softmax_alignment_adjoint<S: Scalar>(
    output: &AlignmentRow<S>,
    grad_output: &[S],
) -> Result<Vec<S>> {
    check_len("softmax adjoint", output.len(), grad_output.len())?;
    let a = output.weights();
    let dot: S = a.iter().zip(grad_output).map(|(&w, &g)| w * g).sum();
    Ok(a.iter().zip(grad_output).map(|(&w, &g)| w * (g - dot)).collect())
}

/// `c = Σ_j α_j x_j`.
pub fn context_vector<S: Scalar>(
    alignment: &AlignmentRow<S>,
    memory: &MemorySequence<S>,
) -> Result<ContextVector<S>> {
    check_len("context alignment", memory.len(), alignment.len())?;
    let mut c = vec![S::zero(); memory.dim()];
    for (j, &w) in alignment.weights().iter().enumerate() {
        if w == S::zero() {
            continue;
        }
        for (ci, &x) in c.iter_mut().zip(memory.entry(j)) {
            *ci += w * x;
        }
    }
    Ok(ContextVector(c))
}

/// Returns `(d alignment, d memory)`; `d alignment_j = ⟨upstream, x_j⟩` and
/// `d x_j = α_j · upstream`.
pub fn context_vector_adjoint<S: Scalar>(
    alignment: &AlignmentRow<S>,
    memory: &MemorySequence<S>,
    grad_context: &[S],
) -> Result<(Vec<S>, Vec<Vec<S>>)> {
    check_len("context alignment", memory.len(), alignment.len())?;
    check_len("context gradient", memory.dim(), grad_context.len())?;
    let mut d_align = Vec::with_capacity(memory.len());
    let mut d_mem = Vec::with_capacity(memory.len());
    for (j, &w) in alignment.weights().iter().enumerate() {
        let x = memory.entry(j);
        d_align.push(x.iter().zip(grad_context).map(|(&a, &b)| a * b).sum());
        d_mem.push(grad_context.iter().map(|&g| g * w).collect());
    }
    Ok((d_align, d_mem))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn row(v: &[f64]) -> EnergyRow<f64> {
        EnergyRow(v.to_vec())
    }

    #[test]
    fn symmetric_energies_give_uniform_row() {
        let a = softmax_alignment(&row(&[0.0, 0.0, 0.0])).unwrap();
        for w in a.weights() {
            assert_abs_diff_eq!(*w, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(a.mass(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn large_energy_does_not_overflow() {
        let a = softmax_alignment(&row(&[1000.0, 0.0, 0.0])).unwrap();
        assert_abs_diff_eq!(a.weights()[0], 1.0, epsilon = 1e-15);
        assert!(a.weights().iter().all(|w| w.is_finite()));
    }

    #[test]
    fn log_weights_recover_ratios() {
        let e = [1f64.ln(), 2f64.ln(), 3f64.ln()];
        let a = softmax_alignment(&row(&e)).unwrap();
        let expected = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
        for (w, x) in a.weights().iter().zip(expected) {
            assert_abs_diff_eq!(*w, x, epsilon = 1e-15);
        }
    }

    #[test]
    fn non_finite_energy_rejected() {
        assert!(softmax_alignment(&row(&[f64::NAN, 0.0])).is_err());
    }

    #[test]
    fn one_hot_context_selects_entry() {
        let mem = MemorySequence::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]])
            .unwrap();
        let c = context_vector(&AlignmentRow::one_hot(3, 1), &mem).unwrap();
        assert_eq!(c.values(), &[3.0, 4.0]);
    }

    #[test]
    fn uniform_over_identical_rows() {
        let r = vec![0.3, -1.7, 2.5];
        let mem = MemorySequence::from_rows(&[r.clone(), r.clone(), r.clone(), r.clone()]).unwrap();
        let c = context_vector(&AlignmentRow::uniform(4), &mem).unwrap();
        for (a, b) in c.values().iter().zip(&r) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn weighted_context_by_hand() {
        let mem = MemorySequence::from_rows(&[vec![0.0, 0.0], vec![4.0, 8.0]]).unwrap();
        let a = AlignmentRow::new(vec![0.25, 0.75]).unwrap();
        let c = context_vector(&a, &mem).unwrap();
        assert_eq!(c.values(), &[3.0, 6.0]);
    }

    #[test]
    fn context_length_mismatch_rejected() {
        let mem = MemorySequence::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(context_vector(&AlignmentRow::uniform(3), &mem).is_err());
    }

    #[test]
    fn softmax_adjoint_symmetric() {
        let a = softmax_alignment(&row(&[0.4, 0.4, 0.4, 0.4])).unwrap();
        let g = softmax_alignment_adjoint(&a, &[1.0, -1.0, -1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(g[0], g[3], epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], g[2], epsilon = 1e-15);
        assert_abs_diff_eq!(g[0], -g[1], epsilon = 1e-15);
    }

    #[test]
    fn context_adjoint_is_inner_product_with_rows() {
        let mem = MemorySequence::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let a = AlignmentRow::new(vec![0.6, 0.4]).unwrap();
        let up = [0.7, -0.2];
        let (da, dm) = context_vector_adjoint(&a, &mem, &up).unwrap();
        assert_abs_diff_eq!(da[0], 0.7 * 1.0 + 0.2 * 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(da[1], 0.7 * 0.5 - 0.2 * 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dm[1][0], 0.4 * 0.7, epsilon = 1e-15);
    }
}
