//! Additive (tanh) energy with a weight-normalized scoring vector:
//!
//! ```text
//! e_j = g · (v / ‖v‖)ᵀ tanh(W_q h + W_k x_j + W_l f_j + b) + r  [+ σ·ε_j while training]
//! ```
//!
//! `g` is the gain, `r` the trainable score bias and `ε_j` standard normal
//! noise drawn from the caller's random source.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EnergyRow, LocationFeatures, MemorySequence};
use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams<S> {
    /// `A × Q`, applied to the decoder state.
    pub query_weights: Matrix<S>,
    /// `A × D`, applied to each memory entry.
    pub key_weights: Matrix<S>,
    /// `A × F`, applied to location features; `F = 0` when unused.
    pub location_weights: Matrix<S>,
    pub hidden_bias: Vec<S>,
    /// Scoring vector, normalized to unit length before use.
    pub score_vector: Vec<S>,
    pub gain: S,
    pub bias: S,
    /// Standard deviation of the pre-sigmoid noise; training only.
    pub noise_scale: S,
}

impl<S: Scalar> EnergyParams<S> {
    pub fn zeros(attention_dim: usize, query_dim: usize, key_dim: usize, location_dim: usize) -> Self {
        Self {
            query_weights: Matrix::zeros(attention_dim, query_dim),
            key_weights: Matrix::zeros(attention_dim, key_dim),
            location_weights: Matrix::zeros(attention_dim, location_dim),
            hidden_bias: vec![S::zero(); attention_dim],
            score_vector: vec![S::zero(); attention_dim],
            gain: S::one(),
            bias: S::zero(),
            noise_scale: S::zero(),
        }
    }

    pub fn attention_dim(&self) -> usize {
        self.hidden_bias.len()
    }

    pub fn query_dim(&self) -> usize {
        self.query_weights.cols()
    }

    pub fn key_dim(&self) -> usize {
        self.key_weights.cols()
    }

    pub fn location_dim(&self) -> usize {
        self.location_weights.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.attention_dim();
        check_len("query weight rows", a, self.query_weights.rows())?;
        check_len("key weight rows", a, self.key_weights.rows())?;
        check_len("location weight rows", a, self.location_weights.rows())?;
        check_len("score vector", a, self.score_vector.len())?;
        if !(self.gain > S::zero()) {
            return Err(Error::InvalidInput(format!("gain must be positive, got {}", self.gain)));
        }
        if !(self.noise_scale >= S::zero()) {
            return Err(Error::InvalidInput(format!(
                "noise scale must be nonnegative, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }

    /// `(v / ‖v‖, ‖v‖)`; a zero vector normalizes to zero.
    pub fn normalized_score_vector(&self) -> (Vec<S>, S) {
        let norm = self.score_vector.iter().map(|&v| v * v).sum::<S>().sqrt();
        if norm > S::zero() {
            (self.score_vector.iter().map(|&v| v / norm).collect(), norm)
        } else {
            (vec![S::zero(); self.score_vector.len()], norm)
        }
    }
}

fn check_dims<S: Scalar>(
    query: &[S],
    memory: &MemorySequence<S>,
    params: &EnergyParams<S>,
    location: Option<&LocationFeatures<S>>,
) -> Result<()> {
    check_len("energy query", params.query_dim(), query.len())?;
    check_len("energy memory dim", params.key_dim(), memory.dim())?;
    match location {
        Some(f) => {
            check_len("location rows", memory.len(), f.0.rows())?;
            check_len("location channels", params.location_dim(), f.0.cols())?;
        }
        None => check_len("location channels", params.location_dim(), 0)
            .map_err(|_| Error::InvalidInput("location features required by params".into()))?,
    }
    Ok(())
}

/// Hidden activations `tanh(W_q h + W_k x_j + W_l f_j + b)` for every `j`.
fn hidden<S: Scalar>(
    query: &[S],
    memory: &MemorySequence<S>,
    params: &EnergyParams<S>,
    location: Option<&LocationFeatures<S>>,
) -> Vec<Vec<S>> {
    let mut shared = params.hidden_bias.clone();
    params.query_weights.matvec_add(query, &mut shared);
    (0..memory.len())
        .map(|j| {
            let mut pre = shared.clone();
            params.key_weights.matvec_add(memory.entry(j), &mut pre);
            if let Some(f) = location {
                params.location_weights.matvec_add(f.0.row(j), &mut pre);
            }
            pre.iter_mut().for_each(|v| *v = v.tanh());
            pre
        })
        .collect()
}

/// Energies for one decoder step. With `training` set and a positive noise
/// scale, `rng` must be supplied; noise is drawn in memory order.
pub fn compute_energy<S: Scalar>(
    query: &[S],
    memory: &MemorySequence<S>,
    params: &EnergyParams<S>,
    location: Option<&LocationFeatures<S>>,
    training: bool,
    rng: Option<&mut dyn RngCore>,
) -> Result<EnergyRow<S>> {
    check_dims(query, memory, params, location)?;
    let (v_hat, _) = params.normalized_score_vector();
    let mut e: Vec<S> = hidden(query, memory, params, location)
        .iter()
        .map(|t| params.gain * t.iter().zip(&v_hat).map(|(&a, &b)| a * b).sum::<S>() + params.bias)
        .collect();
    if training && params.noise_scale > S::zero() {
        let rng = rng.ok_or_else(|| {
            Error::InvalidInput("training with noise requires a random source".into())
        })?;
        for v in e.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += params.noise_scale * S::lit(z);
        }
    }
    Ok(EnergyRow(e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGradients<S> {
    pub query: Vec<S>,
    /// One gradient row per memory entry.
    pub memory: Vec<Vec<S>>,
    /// Present iff location features were supplied.
    pub location: Option<Vec<Vec<S>>>,
    /// Parameter gradients in the same layout as the parameters
    /// (`noise_scale` is not differentiated and is left at zero).
    pub params: EnergyParams<S>,
}

/// Reverse-mode derivative of [`compute_energy`]. Additive noise does not
/// change the Jacobian, so the same function serves training and inference.
pub fn compute_energy_adjoint<S: Scalar>(
    query: &[S],
    memory: &MemorySequence<S>,
    params: &EnergyParams<S>,
    location: Option<&LocationFeatures<S>>,
    grad_energy: &[S],
) -> Result<EnergyGradients<S>> {
    check_dims(query, memory, params, location)?;
    check_len("energy gradient", memory.len(), grad_energy.len())?;
    let a_dim = params.attention_dim();
    let (v_hat, norm) = params.normalized_score_vector();
    let hid = hidden(query, memory, params, location);

    let mut g = EnergyParams::zeros(a_dim, params.query_dim(), params.key_dim(), params.location_dim());
    g.gain = S::zero();
    let mut d_query_pre = vec![S::zero(); a_dim];
    let mut d_vhat = vec![S::zero(); a_dim];
    let mut d_memory = Vec::with_capacity(memory.len());
    let mut d_location = location.map(|_| Vec::with_capacity(memory.len()));

    for (j, t) in hid.iter().enumerate() {
        let ge = grad_energy[j];
        g.bias += ge;
        g.gain += ge * t.iter().zip(&v_hat).map(|(&a, &b)| a * b).sum::<S>();
        let mut d_pre = vec![S::zero(); a_dim];
        for k in 0..a_dim {
            d_vhat[k] += ge * params.gain * t[k];
            d_pre[k] = ge * params.gain * v_hat[k] * (S::one() - t[k] * t[k]);
        }
        for k in 0..a_dim {
            d_query_pre[k] += d_pre[k];
            g.hidden_bias[k] += d_pre[k];
        }
        g.key_weights.add_outer(&d_pre, memory.entry(j));
        let mut dx = vec![S::zero(); memory.dim()];
        params.key_weights.matvec_t_add(&d_pre, &mut dx);
        d_memory.push(dx);
        if let (Some(f), Some(dl)) = (location, d_location.as_mut()) {
            g.location_weights.add_outer(&d_pre, f.0.row(j));
            let mut df = vec![S::zero(); params.location_dim()];
            params.location_weights.matvec_t_add(&d_pre, &mut df);
            dl.push(df);
        }
    }

    g.query_weights.add_outer(&d_query_pre, query);
    let mut d_query = vec![S::zero(); params.query_dim()];
    params.query_weights.matvec_t_add(&d_query_pre, &mut d_query);

    // v̂ = v / ‖v‖  ⇒  dv = (dv̂ − v̂ (v̂ · dv̂)) / ‖v‖
    if norm > S::zero() {
        let proj: S = v_hat.iter().zip(&d_vhat).map(|(&a, &b)| a * b).sum();
        for k in 0..a_dim {
            g.score_vector[k] = (d_vhat[k] - v_hat[k] * proj) / norm;
        }
    }

    Ok(EnergyGradients {
        query: d_query,
        memory: d_memory,
        location: d_location,
        params: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_memory(n: usize, d: usize) -> MemorySequence<f64> {
        MemorySequence::new(Matrix::zeros(n, d)).unwrap()
    }

    #[test]
    fn only_bias_survives_zero_inputs() {
        let mut params = EnergyParams::<f64>::zeros(4, 3, 2, 0);
        params.bias = 3.5;
        let e = compute_energy(&[0.0; 3], &zero_memory(5, 2), &params, None, false, None).unwrap();
        assert_eq!(e.values(), &[3.5; 5]);
        params.bias = 0.0;
        let e = compute_energy(&[0.0; 3], &zero_memory(5, 2), &params, None, false, None).unwrap();
        assert_eq!(e.values(), &[0.0; 5]);
    }

    #[test]
    fn noise_matches_reference_gaussian_stream() {
        let mut params = EnergyParams::<f64>::zeros(2, 1, 1, 0);
        params.noise_scale = 2.0;
        let mem = zero_memory(6, 1);
        let seed = 1234;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = compute_energy(&[0.0], &mem, &params, None, true, Some(&mut rng)).unwrap();

        let mut reference = ChaCha8Rng::seed_from_u64(seed);
        let expected: Vec<f64> = (0..6)
            .map(|_| 2.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut reference))
            .collect();
        assert_eq!(e.values(), expected.as_slice());

        let mut again = ChaCha8Rng::seed_from_u64(seed);
        let e2 = compute_energy(&[0.0], &mem, &params, None, true, Some(&mut again)).unwrap();
        assert_eq!(e.values(), e2.values());
    }

    #[test]
    fn noise_requires_rng_when_training() {
        let mut params = EnergyParams::<f64>::zeros(2, 1, 1, 0);
        params.noise_scale = 2.0;
        assert!(compute_energy(&[0.0], &zero_memory(2, 1), &params, None, true, None).is_err());
        // inference ignores the noise scale
        assert!(compute_energy(&[0.0], &zero_memory(2, 1), &params, None, false, None).is_ok());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let params = EnergyParams::<f64>::zeros(2, 3, 1, 0);
        assert!(matches!(
            compute_energy(&[0.0; 2], &zero_memory(2, 1), &params, None, false, None),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(compute_energy(&[0.0; 3], &zero_memory(2, 4), &params, None, false, None).is_err());
    }

    #[test]
    fn normalized_score_vector_has_unit_norm() {
        let mut params = EnergyParams::<f64>::zeros(3, 1, 1, 0);
        params.score_vector = vec![3.0, 0.0, 4.0];
        let (v, norm) = params.normalized_score_vector();
        assert_eq!(norm, 5.0);
        let n2: f64 = v.iter().map(|x| x * x).sum();
        assert!((n2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_nonpositive_gain() {
        let mut params = EnergyParams::<f64>::zeros(3, 1, 1, 0);
        params.gain = 0.0;
        assert!(params.validate().is_err());
        params.gain = 0.5;
        params.noise_scale = -1.0;
        assert!(params.validate().is_err());
    }
}
