//! Gaussian-mixture location attention.
//!
//! Each component has a weight `ω`, a center `κ` and an inverse width `β`:
//!
//! ```text
//! α_j = Σ_k ω_k exp(−β_k (κ_k − j)²),   j = 1..n
//! ω_k = exp(ω̂_k),  β_k = exp(β̂_k),  κ_k = κ'_k + exp(κ̂_k)
//! ```
//!
//! Centers only ever move forward. Rows are unnormalized unless
//! `renormalize` is requested.

use serde::{Deserialize, Serialize};

use super::AlignmentRow;
use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_GMM_COMPONENTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent<S> {
    pub weight: S,
    pub center: S,
    pub width: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmAttentionState<S> {
    pub components: Vec<GmmComponent<S>>,
}

impl<S: Scalar> GmmAttentionState<S> {
    /// `k` components centered before the first entry, unit weight and width.
    pub fn initial(k: usize) -> Self {
        Self {
            components: vec![
                GmmComponent {
                    weight: S::one(),
                    center: S::zero(),
                    width: S::one(),
                };
                k
            ],
        }
    }

    pub fn centers(&self) -> Vec<S> {
        self.components.iter().map(|c| c.center).collect()
    }
}

/// Raw head outputs for one component.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GmmUpdate<S> {
    pub raw_weight: S,
    pub raw_shift: S,
    pub raw_width: S,
}

fn gaussian_terms<S: Scalar>(state: &GmmAttentionState<S>, n: usize) -> Vec<Vec<S>> {
    state
        .components
        .iter()
        .map(|c| {
            (1..=n)
                .map(|j| {
                    let d = c.center - S::lit(j as f64);
                    c.weight * (-c.width * d * d).exp()
                })
                .collect()
        })
        .collect()
}

/// Evaluate the mixture at positions `1..=n`.
pub fn gmm_alignment<S: Scalar>(
    state: &GmmAttentionState<S>,
    n: usize,
    renormalize: bool,
) -> Result<AlignmentRow<S>> {
    if n == 0 {
        return Err(Error::InvalidInput("memory length must be positive".into()));
    }
    for c in &state.components {
        if !(c.width > S::zero()) || !(c.weight >= S::zero()) || !c.center.is_finite() {
            return Err(Error::InvalidInput(format!("invalid mixture component {c:?}")));
        }
    }
    let terms = gaussian_terms(state, n);
    let mut row = vec![S::zero(); n];
    for t in &terms {
        for (r, &v) in row.iter_mut().zip(t) {
            *r += v;
        }
    }
    if renormalize {
        let mass: S = row.iter().copied().sum();
        if mass > S::zero() {
            row.iter_mut().for_each(|v| *v /= mass);
        }
    }
    Ok(AlignmentRow::from_kernel(row))
}

/// Per-component gradients `(d ω, d κ, d β)` of [`gmm_alignment`].
pub fn gmm_alignment_adjoint<S: Scalar>(
    state: &GmmAttentionState<S>,
    n: usize,
    renormalize: bool,
    grad_out: &[S],
) -> Result<Vec<GmmComponent<S>>> {
    check_len("gmm gradient", n, grad_out.len())?;
    let terms = gaussian_terms(state, n);
    let mut g: Vec<S> = grad_out.to_vec();
    if renormalize {
        let raw: Vec<S> = (0..n).map(|j| terms.iter().map(|t| t[j]).sum()).collect();
        let mass: S = raw.iter().copied().sum();
        if mass > S::zero() {
            let dot: S = raw.iter().zip(grad_out).map(|(&a, &b)| a * b).sum::<S>() / mass;
            g = grad_out.iter().map(|&v| (v - dot) / mass).collect();
        }
    }
    Ok(state
        .components
        .iter()
        .zip(&terms)
        .map(|(c, t)| {
            let mut d = GmmComponent {
                weight: S::zero(),
                center: S::zero(),
                width: S::zero(),
            };
            for j in 0..n {
                let diff = c.center - S::lit((j + 1) as f64);
                let gt = g[j] * t[j];
                if c.weight > S::zero() {
                    d.weight += gt / c.weight;
                } else {
                    d.weight += g[j] * (-c.width * diff * diff).exp();
                }
                d.center += gt * (S::lit(-2.0) * c.width * diff);
                d.width += gt * (-diff * diff);
            }
            d
        })
        .collect())
}

fn apply_updates<S: Scalar>(
    state: &GmmAttentionState<S>,
    updates: &[GmmUpdate<S>],
) -> Result<GmmAttentionState<S>> {
    check_len("gmm updates", state.components.len(), updates.len())?;
    Ok(GmmAttentionState {
        components: state
            .components
            .iter()
            .zip(updates)
            .map(|(c, u)| GmmComponent {
                weight: u.raw_weight.exp(),
                center: c.center + u.raw_shift.exp(),
                width: u.raw_width.exp(),
            })
            .collect(),
    })
}

/// Advance the mixture with fresh head outputs, then evaluate it.
pub fn gmm_attention_step<S: Scalar>(
    state: &GmmAttentionState<S>,
    updates: &[GmmUpdate<S>],
    n: usize,
    renormalize: bool,
) -> Result<(AlignmentRow<S>, GmmAttentionState<S>)> {
    let next = apply_updates(state, updates)?;
    let row = gmm_alignment(&next, n, renormalize)?;
    Ok((row, next))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmStepGradients<S> {
    pub updates: Vec<GmmUpdate<S>>,
    pub prev_centers: Vec<S>,
}

/// Adjoint of [`gmm_attention_step`]. `grad_next_centers` carries gradient
/// arriving at the new centers from later steps.
pub fn gmm_attention_step_adjoint<S: Scalar>(
    state: &GmmAttentionState<S>,
    updates: &[GmmUpdate<S>],
    n: usize,
    renormalize: bool,
    grad_row: &[S],
    grad_next_centers: &[S],
) -> Result<GmmStepGradients<S>> {
    check_len("gmm center gradient", state.components.len(), grad_next_centers.len())?;
    let next = apply_updates(state, updates)?;
    let d = gmm_alignment_adjoint(&next, n, renormalize, grad_row)?;
    let mut out_updates = Vec::with_capacity(updates.len());
    let mut prev_centers = Vec::with_capacity(updates.len());
    for ((dc, c), &gc) in d.iter().zip(&next.components).zip(grad_next_centers) {
        let d_center = dc.center + gc;
        prev_centers.push(d_center);
        let u = updates[out_updates.len()];
        out_updates.push(GmmUpdate {
            raw_weight: dc.weight * c.weight,
            raw_shift: d_center * u.raw_shift.exp(),
            raw_width: dc.width * c.width,
        });
    }
    Ok(GmmStepGradients {
        updates: out_updates,
        prev_centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single(center: f64, width: f64) -> GmmAttentionState<f64> {
        GmmAttentionState {
            components: vec![GmmComponent {
                weight: 1.0,
                center,
                width,
            }],
        }
    }

    #[test]
    fn narrow_component_is_nearly_one_hot() {
        let row = gmm_alignment(&single(2.0, 50.0), 3, false).unwrap();
        assert_abs_diff_eq!(row.weights()[1], 1.0, epsilon = 1e-12);
        assert!(row.weights()[0] < 1e-20 && row.weights()[2] < 1e-20);
    }

    #[test]
    fn flat_component_is_nearly_uniform() {
        let row = gmm_alignment(&single(1.5, 1e-9), 4, true).unwrap();
        for w in row.weights() {
            assert_abs_diff_eq!(*w, 0.25, epsilon = 1e-8);
        }
    }

    #[test]
    fn symmetric_pair_gives_symmetric_row() {
        let state = GmmAttentionState {
            components: vec![
                GmmComponent { weight: 0.5, center: 1.0, width: 0.7 },
                GmmComponent { weight: 0.5, center: 3.0, width: 0.7 },
            ],
        };
        let row = gmm_alignment(&state, 3, false).unwrap();
        assert_abs_diff_eq!(row.weights()[0], row.weights()[2], epsilon = 1e-15);
    }

    #[test]
    fn centers_never_move_backward() {
        let state = GmmAttentionState::<f64>::initial(DEFAULT_GMM_COMPONENTS);
        let updates: Vec<GmmUpdate<f64>> = (0..DEFAULT_GMM_COMPONENTS)
            .map(|k| GmmUpdate {
                raw_weight: 0.1 * k as f64,
                raw_shift: -30.0 + k as f64,
                raw_width: -1.0,
            })
            .collect();
        let (_, next) = gmm_attention_step(&state, &updates, 5, false).unwrap();
        for (a, b) in state.components.iter().zip(&next.components) {
            assert!(b.center >= a.center);
            assert!(b.width > 0.0);
        }
    }

    #[test]
    fn update_count_must_match_components() {
        let state = GmmAttentionState::<f64>::initial(3);
        assert!(gmm_attention_step(&state, &[GmmUpdate::default(); 2], 4, false).is_err());
    }
}
