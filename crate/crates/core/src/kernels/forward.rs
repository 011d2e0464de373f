//! Forward attention: the previous alignment is propagated by a stay/advance
//! transition, reweighted by the content attention, and renormalized.
//!
//! ```text
//! without agent:  α̃_j = (α'_j + α'_{j-1}) y_j
//! with agent:     α̃_j = ((1 - u) α'_j + u α'_{j-1}) y_j
//! α = α̃ / Σ α̃
//! ```
//!
//! When `Σ α̃` falls below [`FORWARD_MASS_FLOOR`] the row is reset to the
//! renormalized content attention `y` and the step is flagged.

use super::AlignmentRow;
use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

pub const FORWARD_MASS_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardAttentionState<S> {
    pub prev_alignment: AlignmentRow<S>,
    /// Transition-agent output `u`; present iff the agent is enabled.
    pub transition_prob: Option<S>,
}

impl<S: Scalar> ForwardAttentionState<S> {
    /// Focus on the first entry; `u = 0.5` when the agent is enabled.
    pub fn initial(n: usize, use_transition_agent: bool) -> Self {
        Self {
            prev_alignment: AlignmentRow::one_hot(n, 0),
            transition_prob: use_transition_agent.then(|| S::lit(0.5)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardStep<S> {
    pub row: AlignmentRow<S>,
    /// Next state; its `transition_prob` is carried over and is normally
    /// replaced by the caller with the agent's fresh output.
    pub state: ForwardAttentionState<S>,
    pub fallback: bool,
}

fn transition<S: Scalar>(
    state: &ForwardAttentionState<S>,
    softmax_row: &AlignmentRow<S>,
    use_transition_agent: bool,
) -> Result<(S, S)> {
    check_len("forward attention row", state.prev_alignment.len(), softmax_row.len())?;
    match (use_transition_agent, state.transition_prob) {
        (true, Some(u)) => {
            if !(u >= S::zero() && u <= S::one()) {
                return Err(Error::InvalidInput(format!("transition probability {u} outside [0,1]")));
            }
            Ok((S::one() - u, u))
        }
        (false, None) => Ok((S::one(), S::one())),
        (true, None) => Err(Error::InvalidInput(
            "transition agent enabled but state has no transition probability".into(),
        )),
        (false, Some(_)) => Err(Error::InvalidInput(
            "transition probability present without transition agent".into(),
        )),
    }
}

fn propagated<S: Scalar>(prev: &[S], y: &[S], stay: S, advance: S) -> Vec<S> {
    (0..prev.len())
        .map(|j| {
            let inflow = if j > 0 { advance * prev[j - 1] } else { S::zero() };
            (stay * prev[j] + inflow) * y[j]
        })
        .collect()
}

pub fn forward_attention_step<S: Scalar>(
    state: &ForwardAttentionState<S>,
    softmax_row: &AlignmentRow<S>,
    use_transition_agent: bool,
) -> Result<ForwardStep<S>> {
    let (stay, advance) = transition(state, softmax_row, use_transition_agent)?;
    let y = softmax_row.weights();
    let pre = propagated(state.prev_alignment.weights(), y, stay, advance);
    let mass: S = pre.iter().copied().sum();
    let (weights, fallback) = if mass < S::lit(FORWARD_MASS_FLOOR) {
        let total: S = y.iter().copied().sum();
        (y.iter().map(|&v| v / total).collect(), true)
    } else {
        (pre.into_iter().map(|v| v / mass).collect(), false)
    };
    let row = AlignmentRow::from_kernel(weights);
    Ok(ForwardStep {
        state: ForwardAttentionState {
            prev_alignment: row.clone(),
            transition_prob: state.transition_prob,
        },
        row,
        fallback,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardGradients<S> {
    pub prev_alignment: Vec<S>,
    pub softmax_row: Vec<S>,
    /// Zero when the agent is disabled.
    pub transition_prob: S,
}

pub fn forward_attention_step_adjoint<S: Scalar>(
    state: &ForwardAttentionState<S>,
    softmax_row: &AlignmentRow<S>,
    use_transition_agent: bool,
    grad_out: &[S],
) -> Result<ForwardGradients<S>> {
    let (stay, advance) = transition(state, softmax_row, use_transition_agent)?;
    let n = softmax_row.len();
    check_len("forward gradient", n, grad_out.len())?;
    let prev = state.prev_alignment.weights();
    let y = softmax_row.weights();
    let pre = propagated(prev, y, stay, advance);
    let mass: S = pre.iter().copied().sum();

    if mass < S::lit(FORWARD_MASS_FLOOR) {
        let total: S = y.iter().copied().sum();
        let dot: S = y.iter().zip(grad_out).map(|(&a, &g)| a * g).sum::<S>() / total;
        return Ok(ForwardGradients {
            prev_alignment: vec![S::zero(); n],
            softmax_row: grad_out.iter().map(|&g| (g - dot) / total).collect(),
            transition_prob: S::zero(),
        });
    }

    // α = α̃ / m  ⇒  dα̃_j = (dα_j − Σ_k dα_k α_k) / m
    let dot: S = pre.iter().zip(grad_out).map(|(&a, &g)| a * g).sum::<S>() / mass;
    let d_pre: Vec<S> = grad_out.iter().map(|&g| (g - dot) / mass).collect();

    let mut d_prev = vec![S::zero(); n];
    let mut d_y = vec![S::zero(); n];
    let mut d_u = S::zero();
    for j in 0..n {
        let inflow = if j > 0 { prev[j - 1] } else { S::zero() };
        d_y[j] = d_pre[j] * (stay * prev[j] + advance * inflow);
        let dz = d_pre[j] * y[j];
        d_prev[j] += dz * stay;
        if j > 0 {
            d_prev[j - 1] += dz * advance;
        }
        if use_transition_agent {
            d_u += dz * (inflow - prev[j]);
        }
    }
    Ok(ForwardGradients {
        prev_alignment: d_prev,
        softmax_row: d_y,
        transition_prob: d_u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_content_splits_forward_mass() {
        let state = ForwardAttentionState::<f64>::initial(2, false);
        let step = forward_attention_step(&state, &AlignmentRow::uniform(2), false).unwrap();
        assert!(!step.fallback);
        assert_abs_diff_eq!(step.row.weights()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(step.row.weights()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn disjoint_support_falls_back_to_content() {
        let state = ForwardAttentionState::<f64>::initial(3, false);
        let y = AlignmentRow::one_hot(3, 2);
        let step = forward_attention_step(&state, &y, false).unwrap();
        assert!(step.fallback);
        assert_eq!(step.row.weights(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn full_transition_moves_all_mass() {
        let mut state = ForwardAttentionState::<f64>::initial(2, true);
        state.transition_prob = Some(1.0);
        let step = forward_attention_step(&state, &AlignmentRow::uniform(2), true).unwrap();
        assert_eq!(step.row.weights(), &[0.0, 1.0]);
    }

    #[test]
    fn agent_flag_must_match_state() {
        let with = ForwardAttentionState::<f64>::initial(2, true);
        let without = ForwardAttentionState::<f64>::initial(2, false);
        let y = AlignmentRow::uniform(2);
        assert!(forward_attention_step(&with, &y, false).is_err());
        assert!(forward_attention_step(&without, &y, true).is_err());
    }
}
