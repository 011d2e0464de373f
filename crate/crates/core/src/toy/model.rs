//! Encoder–decoder with pluggable attention and hand-written reverse mode.
//!
//! Encoder: token embedding plus position parity, fed to a bidirectional GRU;
//! the concatenated states form the memory. Decoder step `i`:
//!
//! 1. attend with query `h_{i-1}` (and `α_{i-1}` where the mechanism uses it)
//! 2. `c_i = Σ_j α_{i,j} x_j`
//! 3. `h_i = GRU([y_{i-1}; c_i], h_{i-1})`
//! 4. frame and stop logit from `[h_i; c_i]`
//!
//! Forward attention with a transition agent computes `u_i` from `[h_i; c_i]`
//! and uses it at step `i + 1`.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gru::{Gru, GruStep};
use crate::error::{check_len, Error, Result};
use crate::kernels::*;
use crate::matrix::Matrix;
use crate::scalar::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Content plus location-sensitive softmax attention (the baseline).
    Lsa,
    Gmm,
    Ma,
    Fa,
    FaTa,
    Sma,
}

impl Mechanism {
    pub const ALL: [Mechanism; 6] = [
        Mechanism::Lsa,
        Mechanism::Gmm,
        Mechanism::Ma,
        Mechanism::Fa,
        Mechanism::FaTa,
        Mechanism::Sma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Lsa => "lsa",
            Mechanism::Gmm => "gmm",
            Mechanism::Ma => "ma",
            Mechanism::Fa => "fa",
            Mechanism::FaTa => "fa_ta",
            Mechanism::Sma => "sma",
        }
    }

    /// Monotonic and stepwise attention, which can also decode hard.
    pub fn is_selection_based(self) -> bool {
        matches!(self, Mechanism::Ma | Mechanism::Sma)
    }

    pub fn is_forward(self) -> bool {
        matches!(self, Mechanism::Fa | Mechanism::FaTa)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub mechanism: Mechanism,
    pub embedding_dim: usize,
    /// Memory width; each encoder direction gets half.
    pub encoder_dim: usize,
    pub decoder_dim: usize,
    pub attention_dim: usize,
    /// Location filters, used by the baseline only.
    pub location_filters: usize,
    pub location_width: usize,
    pub gmm_components: usize,
    pub gmm_renormalize: bool,
    /// Initial score bias; defaults to 1.0 for monotonic/stepwise, else 0.
    pub score_bias_init: Option<f64>,
    /// Pre-sigmoid noise; defaults to 2.0 for monotonic/stepwise, else 0.
    pub noise_scale: Option<f64>,
    pub sma_edge_policy: EdgePolicy,
    /// Dropout rate on the previous-frame decoder input while training.
    pub frame_dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mechanism: Mechanism::Sma,
            embedding_dim: 16,
            encoder_dim: 32,
            decoder_dim: 32,
            attention_dim: 16,
            location_filters: 8,
            location_width: 7,
            gmm_components: DEFAULT_GMM_COMPONENTS,
            gmm_renormalize: true,
            score_bias_init: None,
            noise_scale: None,
            sma_edge_policy: EdgePolicy::Clamp,
            frame_dropout: 0.0,
        }
    }
}

pub const MAX_PARAMETERS: usize = 100_000;

impl ModelConfig {
    pub fn for_mechanism(mechanism: Mechanism) -> Self {
        Self { mechanism, ..Self::default() }
    }

    pub fn resolved_score_bias(&self) -> f64 {
        self.score_bias_init
            .unwrap_or(if self.mechanism.is_selection_based() { 1.0 } else { 0.0 })
    }

    pub fn resolved_noise_scale(&self) -> f64 {
        self.noise_scale
            .unwrap_or(if self.mechanism.is_selection_based() { 2.0 } else { 0.0 })
    }

    fn uses_location(&self) -> bool {
        self.mechanism == Mechanism::Lsa
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.embedding_dim == 0 || self.decoder_dim == 0 || self.attention_dim == 0 {
            return bad("model widths must be positive".into());
        }
        if self.encoder_dim == 0 || self.encoder_dim % 2 != 0 {
            return bad(format!("encoder_dim must be positive and even, got {}", self.encoder_dim));
        }
        if self.location_width % 2 == 0 {
            return bad(format!("location_width must be odd, got {}", self.location_width));
        }
        if self.gmm_components == 0 {
            return bad("gmm_components must be positive".into());
        }
        if !(self.resolved_noise_scale() >= 0.0) || !self.resolved_score_bias().is_finite() {
            return bad("noise_scale must be nonnegative and score_bias_init finite".into());
        }
        if !(0.0..1.0).contains(&self.frame_dropout) {
            return bad(format!("frame_dropout must lie in [0, 1), got {}", self.frame_dropout));
        }
        Ok(())
    }
}

/// All trainable tensors. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    pub embedding: Matrix<f64>,
    pub enc_fwd: Gru,
    pub enc_bwd: Gru,
    pub dec: Gru,
    pub energy: EnergyParams<f64>,
    pub location_filters: Matrix<f64>,
    pub out_w: Matrix<f64>,
    pub out_b: Vec<f64>,
    pub gmm_w: Matrix<f64>,
    pub gmm_b: Vec<f64>,
    pub ta_w: Vec<f64>,
    pub ta_b: f64,
}

impl ToyParams {
    /// `(name, shape, values)` for every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        let mat = |m: &Matrix<f64>| vec![m.rows(), m.cols()];
        out.push(("embedding".into(), mat(&self.embedding), self.embedding.as_slice()));
        for (prefix, g) in [("enc_fwd", &self.enc_fwd), ("enc_bwd", &self.enc_bwd), ("dec", &self.dec)] {
            for ((name, shape), data) in ["wx", "wh", "bx", "bh"].iter().zip(g.shapes()).zip(g.slices()) {
                out.push((format!("{prefix}.{name}"), shape, data));
            }
        }
        let e = &self.energy;
        out.push(("energy.query_weights".into(), mat(&e.query_weights), e.query_weights.as_slice()));
        out.push(("energy.key_weights".into(), mat(&e.key_weights), e.key_weights.as_slice()));
        out.push(("energy.location_weights".into(), mat(&e.location_weights), e.location_weights.as_slice()));
        out.push(("energy.hidden_bias".into(), vec![e.hidden_bias.len()], &e.hidden_bias));
        out.push(("energy.score_vector".into(), vec![e.score_vector.len()], &e.score_vector));
        out.push(("energy.gain".into(), vec![1], std::slice::from_ref(&e.gain)));
        out.push(("energy.bias".into(), vec![1], std::slice::from_ref(&e.bias)));
        out.push(("location_filters".into(), mat(&self.location_filters), self.location_filters.as_slice()));
        out.push(("out_w".into(), mat(&self.out_w), self.out_w.as_slice()));
        out.push(("out_b".into(), vec![self.out_b.len()], &self.out_b));
        out.push(("gmm_w".into(), mat(&self.gmm_w), self.gmm_w.as_slice()));
        out.push(("gmm_b".into(), vec![self.gmm_b.len()], &self.gmm_b));
        out.push(("ta_w".into(), vec![self.ta_w.len()], &self.ta_w));
        out.push(("ta_b".into(), vec![1], std::slice::from_ref(&self.ta_b)));
        out
    }

    /// Mutable views in the same order as [`ToyParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.embedding.as_mut_slice()];
        out.extend(self.enc_fwd.slices_mut());
        out.extend(self.enc_bwd.slices_mut());
        out.extend(self.dec.slices_mut());
        let e = &mut self.energy;
        out.push(e.query_weights.as_mut_slice());
        out.push(e.key_weights.as_mut_slice());
        out.push(e.location_weights.as_mut_slice());
        out.push(&mut e.hidden_bias);
        out.push(&mut e.score_vector);
        out.push(std::slice::from_mut(&mut e.gain));
        out.push(std::slice::from_mut(&mut e.bias));
        out.push(self.location_filters.as_mut_slice());
        out.push(self.out_w.as_mut_slice());
        out.push(&mut self.out_b);
        out.push(self.gmm_w.as_mut_slice());
        out.push(&mut self.gmm_b);
        out.push(&mut self.ta_w);
        out.push(std::slice::from_mut(&mut self.ta_b));
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.2.iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_len("flat parameters", self.count(), flat.len())?;
        let mut at = 0;
        for t in self.tensors_mut() {
            let k = t.len();
            t.copy_from_slice(&flat[at..at + k]);
            at += k;
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z.energy.noise_scale = 0.0;
        z
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.2.iter().all(|v| v.is_finite()))
    }

    /// Euclidean norm over all tensors.
    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.2.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_map(&self) -> BTreeMap<String, (Vec<usize>, Vec<f64>)> {
        self.tensors()
            .into_iter()
            .map(|(name, shape, data)| (name, (shape, data.to_vec())))
            .collect()
    }

    /// Fills tensors from a name map; every name and shape must match.
    pub fn load_map(&mut self, map: &BTreeMap<String, (Vec<usize>, Vec<f64>)>) -> Result<()> {
        let expected: Vec<(String, Vec<usize>, usize)> =
            self.tensors().into_iter().map(|(n, s, d)| (n, s, d.len())).collect();
        if map.len() != expected.len() {
            return Err(Error::Parse(format!("checkpoint has {} tensors, expected {}", map.len(), expected.len())));
        }
        let mut flat = Vec::new();
        for (name, shape, len) in expected {
            let (s, d) = map
                .get(&name)
                .ok_or_else(|| Error::Parse(format!("checkpoint is missing tensor {name}")))?;
            if *s != shape || d.len() != len {
                return Err(Error::Parse(format!("tensor {name} has shape {s:?}, expected {shape:?}")));
            }
            flat.extend_from_slice(d);
        }
        self.assign_flat(&flat)
    }
}

fn uniform(rng: &mut impl Rng, m: &mut [f64], scale: f64) {
    for v in m {
        *v = rng.random_range(-scale..scale);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub config: ModelConfig,
    /// Input token count, punctuation included.
    pub tokens: usize,
    /// Frame width without the stop flag.
    pub frame_dim: usize,
    pub params: ToyParams,
}

/// Attention bookkeeping carried between decoder steps.
#[derive(Debug, Clone)]
struct AttnState {
    prev: AlignmentRow<f64>,
    gmm: Option<GmmAttentionState<f64>>,
    transition: Option<f64>,
    step: usize,
}

#[derive(Debug, Clone)]
struct AttnCache {
    state: AttnState,
    location: Option<LocationFeatures<f64>>,
    energy: Option<EnergyRow<f64>>,
    /// Softmax output: the alignment itself for the baseline, the content
    /// row for forward attention.
    scores: Option<AlignmentRow<f64>>,
    p: Option<Vec<f64>>,
    gmm_updates: Option<Vec<GmmUpdate<f64>>>,
    alignment: AlignmentRow<f64>,
}

#[derive(Debug, Clone)]
struct EncoderCache {
    tokens: Vec<usize>,
    fwd: Vec<GruStep>,
    /// In processing order (last position first).
    bwd: Vec<GruStep>,
}

#[derive(Debug, Clone)]
struct DecoderStep {
    attn: AttnCache,
    gru: GruStep,
    head_in: Vec<f64>,
    output: Vec<f64>,
    transition: Option<f64>,
}

/// Output of [`ToyModel::forward_teacher_forced`]; keeps what backward needs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub loss: f64,
    pub mse: f64,
    pub bce: f64,
    pub alignment: AlignmentMatrix<f64>,
    memory: MemorySequence<f64>,
    encoder: EncoderCache,
    steps: Vec<DecoderStep>,
    targets: Vec<Vec<f64>>,
}

impl ForwardPass {
    /// Predicted frame (without stop logit) at each step.
    pub fn predictions(&self) -> Vec<Vec<f64>> {
        let fd = self.targets[0].len() - 1;
        self.steps.iter().map(|s| s.output[..fd].to_vec()).collect()
    }
}

struct AttnGrad {
    prev_alignment: Vec<f64>,
    prev_centers: Vec<f64>,
    prev_transition: f64,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn add_energy_grads(dst: &mut EnergyParams<f64>, src: &EnergyParams<f64>) {
    add_into(dst.query_weights.as_mut_slice(), src.query_weights.as_slice());
    add_into(dst.key_weights.as_mut_slice(), src.key_weights.as_slice());
    add_into(dst.location_weights.as_mut_slice(), src.location_weights.as_slice());
    add_into(&mut dst.hidden_bias, &src.hidden_bias);
    add_into(&mut dst.score_vector, &src.score_vector);
    dst.gain += src.gain;
    dst.bias += src.bias;
}

impl ToyModel {
    /// Randomly initialized model for a task with `tokens` input symbols.
    pub fn new(config: ModelConfig, tokens: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if tokens == 0 {
            return Err(Error::InvalidInput("token count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame_dim = tokens + 1;
        let (e, d, h, a) = (config.embedding_dim, config.encoder_dim, config.decoder_dim, config.attention_dim);
        let he = d / 2;
        let loc = if config.uses_location() { config.location_filters } else { 0 };
        let k = config.gmm_components;

        let mut embedding = Matrix::zeros(tokens, e);
        uniform(&mut rng, embedding.as_mut_slice(), 1.0);
        let enc_fwd = Gru::random(e + 1, he, &mut rng);
        let enc_bwd = Gru::random(e + 1, he, &mut rng);
        let dec = Gru::random(frame_dim + d, h, &mut rng);

        let mut energy = EnergyParams::zeros(a, h, d, loc);
        uniform(&mut rng, energy.query_weights.as_mut_slice(), 1.0 / (h as f64).sqrt());
        uniform(&mut rng, energy.key_weights.as_mut_slice(), 1.0 / (d as f64).sqrt());
        if loc > 0 {
            uniform(&mut rng, energy.location_weights.as_mut_slice(), 1.0 / (loc as f64).sqrt());
        }
        uniform(&mut rng, &mut energy.score_vector, 1.0 / (a as f64).sqrt());
        energy.gain = 1.0;
        energy.bias = config.resolved_score_bias();
        energy.noise_scale = config.resolved_noise_scale();

        let mut location_filters = Matrix::zeros(loc, config.location_width);
        uniform(&mut rng, location_filters.as_mut_slice(), 1.0 / (config.location_width as f64).sqrt());
        let mut out_w = Matrix::zeros(frame_dim + 1, h + d);
        uniform(&mut rng, out_w.as_mut_slice(), 1.0 / ((h + d) as f64).sqrt());
        let mut gmm_w = Matrix::zeros(3 * k, h);
        uniform(&mut rng, gmm_w.as_mut_slice(), 0.1 / (h as f64).sqrt());
        // ω = 1, shift ≈ 0.5 entries per frame, β = 1
        let gmm_b = (0..k).flat_map(|_| [0.0, 0.5f64.ln(), 0.0]).collect();
        let mut ta_w = vec![0.0; h + d];
        uniform(&mut rng, &mut ta_w, 1.0 / ((h + d) as f64).sqrt());

        let params = ToyParams {
            embedding,
            enc_fwd,
            enc_bwd,
            dec,
            energy,
            location_filters,
            out_w,
            out_b: vec![0.0; frame_dim + 1],
            gmm_w,
            gmm_b,
            ta_w,
            ta_b: 0.0,
        };
        let count = params.count();
        if count > MAX_PARAMETERS {
            return Err(Error::InvalidInput(format!("{count} parameters exceed the {MAX_PARAMETERS} limit")));
        }
        Ok(Self { config, tokens, frame_dim, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("token sequence is empty".into()));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.tokens) {
            return Err(Error::InvalidInput(format!("token {t} outside vocabulary of {}", self.tokens)));
        }
        Ok(())
    }

    fn encode(&self, tokens: &[usize]) -> Result<(MemorySequence<f64>, EncoderCache)> {
        self.check_tokens(tokens)?;
        let p = &self.params;
        let n = tokens.len();
        let he = p.enc_fwd.hidden();
        let inputs: Vec<Vec<f64>> = tokens
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let mut u = p.embedding.row(t).to_vec();
                u.push((j % 2) as f64);
                u
            })
            .collect();
        let mut fwd = Vec::with_capacity(n);
        let mut h = vec![0.0; he];
        for u in &inputs {
            let s = p.enc_fwd.step(u, &h);
            h = s.h.clone();
            fwd.push(s);
        }
        let mut bwd = Vec::with_capacity(n);
        let mut h = vec![0.0; he];
        for u in inputs.iter().rev() {
            let s = p.enc_bwd.step(u, &h);
            h = s.h.clone();
            bwd.push(s);
        }
        let mut mem = Matrix::zeros(n, 2 * he);
        for j in 0..n {
            let row = mem.row_mut(j);
            row[..he].copy_from_slice(&fwd[j].h);
            row[he..].copy_from_slice(&bwd[n - 1 - j].h);
        }
        Ok((
            MemorySequence::new(mem)?,
            EncoderCache {
                tokens: tokens.to_vec(),
                fwd,
                bwd,
            },
        ))
    }

    /// Encoder output for a token sequence.
    pub fn memory(&self, tokens: &[usize]) -> Result<MemorySequence<f64>> {
        Ok(self.encode(tokens)?.0)
    }

    fn initial_state(&self, n: usize) -> AttnState {
        let m = self.config.mechanism;
        AttnState {
            prev: AlignmentRow::one_hot(n, 0),
            gmm: (m == Mechanism::Gmm).then(|| GmmAttentionState::initial(self.config.gmm_components)),
            transition: (m == Mechanism::FaTa).then_some(0.5),
            step: 0,
        }
    }

    fn edge_policy(&self) -> EdgePolicy {
        match self.config.mechanism {
            Mechanism::Sma => self.config.sma_edge_policy,
            Mechanism::Ma => EdgePolicy::Leak,
            _ => EdgePolicy::Clamp,
        }
    }

    fn attend(
        &self,
        state: &AttnState,
        query: &[f64],
        memory: &MemorySequence<f64>,
        noise: Option<&mut dyn RngCore>,
    ) -> Result<AttnCache> {
        let p = &self.params;
        let n = memory.len();
        let mut cache = AttnCache {
            state: state.clone(),
            location: None,
            energy: None,
            scores: None,
            p: None,
            gmm_updates: None,
            alignment: AlignmentRow::one_hot(n, 0),
        };
        let training = noise.is_some();
        match self.config.mechanism {
            Mechanism::Lsa => {
                let loc = location_features(&state.prev, &p.location_filters)?;
                let e = compute_energy(query, memory, &p.energy, Some(&loc), false, None)?;
                let a = softmax_alignment(&e)?;
                cache.location = Some(loc);
                cache.energy = Some(e);
                cache.scores = Some(a.clone());
                cache.alignment = a;
            }
            Mechanism::Ma => {
                let e = compute_energy(query, memory, &p.energy, None, training, noise)?;
                let probs = selection_probabilities(&e)?;
                cache.alignment = ma_alignment_recursive(&state.prev, &probs)?;
                cache.energy = Some(e);
                cache.p = Some(probs);
            }
            Mechanism::Sma => {
                // the first step is pinned to the first entry
                if state.step > 0 {
                    let e = compute_energy(query, memory, &p.energy, None, training, noise)?;
                    let probs = selection_probabilities(&e)?;
                    cache.alignment = sma_alignment(&state.prev, &probs, self.config.sma_edge_policy)?;
                    cache.energy = Some(e);
                    cache.p = Some(probs);
                }
            }
            Mechanism::Fa | Mechanism::FaTa => {
                let e = compute_energy(query, memory, &p.energy, None, false, None)?;
                let y = softmax_alignment(&e)?;
                let fs = ForwardAttentionState {
                    prev_alignment: state.prev.clone(),
                    transition_prob: state.transition,
                };
                cache.alignment = forward_attention_step(&fs, &y, self.config.mechanism == Mechanism::FaTa)?.row;
                cache.energy = Some(e);
                cache.scores = Some(y);
            }
            Mechanism::Gmm => {
                let mut raw = p.gmm_b.clone();
                p.gmm_w.matvec_add(query, &mut raw);
                let updates: Vec<GmmUpdate<f64>> = raw
                    .chunks(3)
                    .map(|r| GmmUpdate {
                        raw_weight: r[0],
                        raw_shift: r[1],
                        raw_width: r[2],
                    })
                    .collect();
                let gs = state.gmm.as_ref().expect("mixture state");
                let (row, _) = gmm_attention_step(gs, &updates, n, self.config.gmm_renormalize)?;
                cache.alignment = row;
                cache.gmm_updates = Some(updates);
            }
        }
        check_row(&cache.alignment)?;
        Ok(cache)
    }

    fn next_state(&self, cache: &AttnCache, n: usize, transition: Option<f64>) -> Result<AttnState> {
        let gmm = match (&cache.state.gmm, &cache.gmm_updates) {
            (Some(gs), Some(u)) => Some(gmm_attention_step(gs, u, n, self.config.gmm_renormalize)?.1),
            _ => None,
        };
        Ok(AttnState {
            prev: cache.alignment.clone(),
            gmm,
            transition,
            step: cache.state.step + 1,
        })
    }

    /// Decoder update from the previous frame and previous context. Its
    /// output is the attention query for the current step.
    fn recur(&self, y_prev: &[f64], context_prev: &[f64], h_prev: &[f64]) -> GruStep {
        let mut x = y_prev.to_vec();
        x.extend_from_slice(context_prev);
        self.params.dec.step(&x, h_prev)
    }

    /// Output head and transition agent on `[h; c]`.
    fn head(&self, h: &[f64], context: &[f64]) -> (Vec<f64>, Vec<f64>, Option<f64>) {
        let p = &self.params;
        let mut head_in = h.to_vec();
        head_in.extend_from_slice(context);
        let mut output = p.out_b.clone();
        p.out_w.matvec_add(&head_in, &mut output);
        let transition = (self.config.mechanism == Mechanism::FaTa)
            .then(|| sigmoid(p.ta_w.iter().zip(&head_in).map(|(a, b)| a * b).sum::<f64>() + p.ta_b));
        (head_in, output, transition)
    }

    /// Teacher-forced pass over one pair. `noise_seed` switches on training
    /// noise (monotonic/stepwise energies and frame dropout) drawn from
    /// generators seeded with it.
    pub fn forward_teacher_forced(
        &self,
        tokens: &[usize],
        frames: &[Vec<f64>],
        noise_seed: Option<u64>,
    ) -> Result<ForwardPass> {
        if frames.is_empty() {
            return Err(Error::InvalidInput("target has no frames".into()));
        }
        let fd = self.frame_dim;
        for f in frames {
            check_len("target frame", fd + 1, f.len())?;
        }
        let (memory, encoder) = self.encode(tokens)?;
        let n = memory.len();
        let t = frames.len();
        let mut rng = noise_seed.map(ChaCha8Rng::seed_from_u64);
        let mut drop_rng = noise_seed
            .filter(|_| self.config.frame_dropout > 0.0)
            .map(|s| ChaCha8Rng::seed_from_u64(s ^ 0xd209_0a7));
        let keep = 1.0 - self.config.frame_dropout;
        let mut state = self.initial_state(n);
        let mut h = vec![0.0; self.config.decoder_dim];
        let mut y_prev = vec![0.0; fd];
        let mut context = vec![0.0; memory.dim()];
        let mut steps = Vec::with_capacity(t);
        let (mut mse, mut bce) = (0.0, 0.0);
        for target in frames {
            let gru = self.recur(&y_prev, &context, &h);
            let noise = rng.as_mut().map(|r| r as &mut dyn RngCore);
            let attn = self.attend(&state, &gru.h, &memory, noise)?;
            context = context_vector(&attn.alignment, &memory)?.0;
            let (head_in, output, transition) = self.head(&gru.h, &context);
            for d in 0..fd {
                let diff = output[d] - target[d];
                mse += diff * diff;
            }
            bce += softplus(output[fd]) - target[fd] * output[fd];
            state = self.next_state(&attn, n, transition)?;
            h = gru.h.clone();
            y_prev = target[..fd].to_vec();
            if let Some(r) = drop_rng.as_mut() {
                for v in &mut y_prev {
                    *v = if r.random::<f64>() < keep { *v / keep } else { 0.0 };
                }
            }
            steps.push(DecoderStep {
                attn,
                gru,
                head_in,
                output,
                transition,
            });
        }
        mse /= (t * fd) as f64;
        bce /= t as f64;
        let loss = mse + bce;
        let rows = steps.iter().map(|s| s.attn.alignment.clone()).collect();
        Ok(ForwardPass {
            loss,
            mse,
            bce,
            alignment: AlignmentMatrix::new(rows, self.edge_policy())?,
            memory,
            encoder,
            steps,
            targets: frames.to_vec(),
        })
    }

    /// Gradient of `pass.loss` with respect to every parameter.
    pub fn backward(&self, pass: &ForwardPass) -> Result<ToyParams> {
        let p = &self.params;
        let mut g = p.zeros_like();
        let fd = self.frame_dim;
        let hd = self.config.decoder_dim;
        let memory = &pass.memory;
        let n = memory.len();
        let t = pass.steps.len();
        let mut d_memory = vec![vec![0.0; memory.dim()]; n];
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; memory.dim()];
        let mut d_align_next = vec![0.0; n];
        let mut d_centers = vec![0.0; self.config.gmm_components];
        let mut d_transition_next = 0.0;
        let mse_scale = 2.0 / (t * fd) as f64;

        for (s, target) in pass.steps.iter().zip(&pass.targets).rev() {
            let mut d_out: Vec<f64> = (0..fd).map(|d| mse_scale * (s.output[d] - target[d])).collect();
            d_out.push((sigmoid(s.output[fd]) - target[fd]) / t as f64);
            g.out_w.add_outer(&d_out, &s.head_in);
            add_into(&mut g.out_b, &d_out);
            let mut d_head = vec![0.0; s.head_in.len()];
            p.out_w.matvec_t_add(&d_out, &mut d_head);
            if let Some(u) = s.transition {
                let dpre = d_transition_next * u * (1.0 - u);
                for (k, &x) in s.head_in.iter().enumerate() {
                    g.ta_w[k] += dpre * x;
                    d_head[k] += dpre * p.ta_w[k];
                }
                g.ta_b += dpre;
            }
            let mut dh = d_head[..hd].to_vec();
            add_into(&mut dh, &dh_next);
            let mut dc = d_head[hd..].to_vec();
            add_into(&mut dc, &dc_next);

            let (d_align_ctx, d_mem_ctx) = context_vector_adjoint(&s.attn.alignment, memory, &dc)?;
            for (dm, dmc) in d_memory.iter_mut().zip(&d_mem_ctx) {
                add_into(dm, dmc);
            }
            let mut d_align = d_align_ctx;
            add_into(&mut d_align, &d_align_next);

            let back = self.attend_backward(&s.attn, &s.gru.h, memory, &d_align, &d_centers, &mut g, &mut d_memory, &mut dh)?;
            d_align_next = back.prev_alignment;
            d_centers = back.prev_centers;
            d_transition_next = back.prev_transition;
            let (dx, dh_prev) = p.dec.backward(&s.gru, &dh, &mut g.dec);
            dc_next = dx[fd..].to_vec();
            dh_next = dh_prev;
        }
        self.encoder_backward(&pass.encoder, &d_memory, &mut g);
        Ok(g)
    }

    #[allow(clippy::too_many_arguments)]
    fn attend_backward(
        &self,
        cache: &AttnCache,
        query: &[f64],
        memory: &MemorySequence<f64>,
        d_align: &[f64],
        d_centers: &[f64],
        g: &mut ToyParams,
        d_memory: &mut [Vec<f64>],
        dquery: &mut [f64],
    ) -> Result<AttnGrad> {
        let p = &self.params;
        let n = memory.len();
        let mut out = AttnGrad {
            prev_alignment: vec![0.0; n],
            prev_centers: vec![0.0; self.config.gmm_components],
            prev_transition: 0.0,
        };
        let state = &cache.state;
        let mut energy_back = |de: &[f64], g: &mut ToyParams, loc: Option<&LocationFeatures<f64>>| -> Result<Option<Vec<Vec<f64>>>> {
            let eg = compute_energy_adjoint(query, memory, &p.energy, loc, de)?;
            add_into(dquery, &eg.query);
            for (dm, x) in d_memory.iter_mut().zip(&eg.memory) {
                add_into(dm, x);
            }
            add_energy_grads(&mut g.energy, &eg.params);
            Ok(eg.location)
        };
        match self.config.mechanism {
            Mechanism::Lsa => {
                let de = softmax_alignment_adjoint(cache.scores.as_ref().expect("scores"), d_align)?;
                let loc = cache.location.as_ref().expect("location");
                let dl = energy_back(&de, g, Some(loc))?.expect("location gradient");
                let rows = dl.len();
                let cols = p.location_filters.rows();
                let dl = Matrix::from_vec(rows, cols, dl.into_iter().flatten().collect())?;
                let (d_prev, d_filters) = location_features_adjoint(&state.prev, &p.location_filters, &dl)?;
                add_into(g.location_filters.as_mut_slice(), d_filters.as_slice());
                out.prev_alignment = d_prev;
            }
            Mechanism::Ma | Mechanism::Sma => {
                let (Some(e), Some(probs)) = (&cache.energy, &cache.p) else {
                    // pinned first stepwise step: constant alignment
                    return Ok(out);
                };
                let (d_prev, d_p) = if self.config.mechanism == Mechanism::Ma {
                    ma_alignment_recursive_adjoint(&state.prev, probs, d_align)?
                } else {
                    sma_alignment_adjoint(&state.prev, probs, self.config.sma_edge_policy, d_align)?
                };
                let de = selection_probabilities_adjoint(e, &d_p)?;
                energy_back(&de, g, None)?;
                out.prev_alignment = d_prev;
            }
            Mechanism::Fa | Mechanism::FaTa => {
                let y = cache.scores.as_ref().expect("scores");
                let fs = ForwardAttentionState {
                    prev_alignment: state.prev.clone(),
                    transition_prob: state.transition,
                };
                let fg = forward_attention_step_adjoint(&fs, y, self.config.mechanism == Mechanism::FaTa, d_align)?;
                let de = softmax_alignment_adjoint(y, &fg.softmax_row)?;
                energy_back(&de, g, None)?;
                out.prev_alignment = fg.prev_alignment;
                out.prev_transition = fg.transition_prob;
            }
            Mechanism::Gmm => {
                let gs = state.gmm.as_ref().expect("mixture state");
                let updates = cache.gmm_updates.as_ref().expect("mixture updates");
                let gg = gmm_attention_step_adjoint(gs, updates, n, self.config.gmm_renormalize, d_align, d_centers)?;
                let d_raw: Vec<f64> = gg
                    .updates
                    .iter()
                    .flat_map(|u| [u.raw_weight, u.raw_shift, u.raw_width])
                    .collect();
                g.gmm_w.add_outer(&d_raw, query);
                add_into(&mut g.gmm_b, &d_raw);
                p.gmm_w.matvec_t_add(&d_raw, dquery);
                out.prev_centers = gg.prev_centers;
            }
        }
        Ok(out)
    }

    fn encoder_backward(&self, cache: &EncoderCache, d_memory: &[Vec<f64>], g: &mut ToyParams) {
        let p = &self.params;
        let n = cache.tokens.len();
        let he = p.enc_fwd.hidden();
        let e = p.embedding.cols();
        let mut d_inputs = vec![vec![0.0; e + 1]; n];
        let mut carry = vec![0.0; he];
        for j in (0..n).rev() {
            let mut dh = d_memory[j][..he].to_vec();
            add_into(&mut dh, &carry);
            let (dx, dhp) = p.enc_fwd.backward(&cache.fwd[j], &dh, &mut g.enc_fwd);
            add_into(&mut d_inputs[j], &dx);
            carry = dhp;
        }
        let mut carry = vec![0.0; he];
        for k in (0..n).rev() {
            let j = n - 1 - k;
            let mut dh = d_memory[j][he..].to_vec();
            add_into(&mut dh, &carry);
            let (dx, dhp) = p.enc_bwd.backward(&cache.bwd[k], &dh, &mut g.enc_bwd);
            add_into(&mut d_inputs[j], &dx);
            carry = dhp;
        }
        for (j, &tok) in cache.tokens.iter().enumerate() {
            add_into(g.embedding.row_mut(tok), &d_inputs[j][..e]);
        }
    }
}

/// Rows must be nonnegative with mass at most one.
fn check_row(row: &AlignmentRow<f64>) -> Result<()> {
    let m = row.mass();
    if !(m <= 1.0 + 1e-9) || row.weights().iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidInput(format!("alignment row violates mass laws (mass {m})")));
    }
    Ok(())
}

/// Decoding mode for [`ToyModel::infer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    Soft,
    HardSampled,
    HardGreedy,
}

impl InferenceMode {
    pub fn name(self) -> &'static str {
        match self {
            InferenceMode::Soft => "soft",
            InferenceMode::HardSampled => "hard_sampled",
            InferenceMode::HardGreedy => "hard_greedy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub mode: InferenceMode,
    pub max_frames: usize,
    pub stop_threshold: f64,
    /// Seed for sampled hard decoding.
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            mode: InferenceMode::Soft,
            max_frames: 400,
            stop_threshold: 0.5,
            seed: 0,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self, mechanism: Mechanism) -> Result<()> {
        if self.mode != InferenceMode::Soft && !mechanism.is_selection_based() {
            return Err(Error::InvalidInput(format!(
                "{} inference is only defined for ma and sma, not {}",
                self.mode.name(),
                mechanism.name()
            )));
        }
        if self.max_frames == 0 || !(0.0..1.0).contains(&self.stop_threshold) {
            return Err(Error::InvalidInput("max_frames must be positive and stop_threshold in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferredAlignment {
    Soft(AlignmentMatrix<f64>),
    Hard(crate::hard_decoder::HardAlignmentPath),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    /// Emitted frames (stop flag excluded). The stop step is not included.
    pub frames: Vec<Vec<f64>>,
    pub alignment: InferredAlignment,
    /// The stop flag fired.
    pub stopped: bool,
    /// The frame budget ran out first.
    pub truncated: bool,
}

struct HardSource<'a> {
    model: &'a ToyModel,
    memory: &'a MemorySequence<f64>,
    h: Vec<f64>,
    /// Decoder state for the step in progress.
    query: Vec<f64>,
    y_prev: Vec<f64>,
    context: Vec<f64>,
    frames: Vec<Vec<f64>>,
    stopped: bool,
    threshold: f64,
    error: Option<Error>,
}

impl crate::hard_decoder::HardStepSource<f64> for HardSource<'_> {
    fn probabilities(&mut self, _step: usize, _previous: Option<usize>) -> Option<Vec<f64>> {
        if self.stopped || self.error.is_some() {
            return None;
        }
        let p = &self.model.params;
        self.query = self.model.recur(&self.y_prev, &self.context, &self.h).h;
        match compute_energy(&self.query, self.memory, &p.energy, None, false, None).and_then(|e| selection_probabilities(&e)) {
            Ok(probs) => Some(probs),
            Err(e) => {
                self.error = Some(e);
                None
            }
        }
    }

    fn observe(&mut self, _step: usize, _index: usize, context: &[f64]) {
        let fd = self.model.frame_dim;
        let (_, output, _) = self.model.head(&self.query, context);
        if sigmoid(output[fd]) > self.threshold {
            self.stopped = true;
            return;
        }
        self.y_prev = output[..fd].to_vec();
        self.frames.push(self.y_prev.clone());
        self.context = context.to_vec();
        self.h = std::mem::take(&mut self.query);
    }
}

impl ToyModel {
    /// Free-running decoding until the stop flag fires or `max_frames` steps.
    pub fn infer(&self, tokens: &[usize], config: &InferenceConfig) -> Result<Inference> {
        config.validate(self.config.mechanism)?;
        let memory = self.memory(tokens)?;
        let fd = self.frame_dim;
        match config.mode {
            InferenceMode::Soft => {
                let n = memory.len();
                let mut state = self.initial_state(n);
                let mut h = vec![0.0; self.config.decoder_dim];
                let mut y_prev = vec![0.0; fd];
                let mut context = vec![0.0; memory.dim()];
                let mut frames = Vec::new();
                let mut rows = Vec::new();
                let mut stopped = false;
                for _ in 0..config.max_frames {
                    let gru = self.recur(&y_prev, &context, &h);
                    let attn = self.attend(&state, &gru.h, &memory, None)?;
                    context = context_vector(&attn.alignment, &memory)?.0;
                    let (_, output, transition) = self.head(&gru.h, &context);
                    if sigmoid(output[fd]) > config.stop_threshold {
                        stopped = true;
                        break;
                    }
                    state = self.next_state(&attn, n, transition)?;
                    rows.push(attn.alignment);
                    h = gru.h;
                    y_prev = output[..fd].to_vec();
                    frames.push(y_prev.clone());
                }
                let alignment = if rows.is_empty() {
                    AlignmentMatrix { rows, edge_policy: self.edge_policy() }
                } else {
                    AlignmentMatrix::new(rows, self.edge_policy())?
                };
                Ok(Inference {
                    frames,
                    alignment: InferredAlignment::Soft(alignment),
                    stopped,
                    truncated: !stopped,
                })
            }
            mode => {
                use crate::hard_decoder::{decode_hard, HardFamily, SamplerConfig, SamplerMode};
                let family = match self.config.mechanism {
                    Mechanism::Ma => HardFamily::Monotonic,
                    _ => HardFamily::Stepwise(self.config.sma_edge_policy),
                };
                let sampler = SamplerConfig {
                    mode: if mode == InferenceMode::HardGreedy { SamplerMode::Greedy } else { SamplerMode::Sampled },
                    seed: config.seed,
                    max_steps: config.max_frames,
                };
                let mut rng = sampler.rng();
                let mut source = HardSource {
                    model: self,
                    memory: &memory,
                    h: vec![0.0; self.config.decoder_dim],
                    query: Vec::new(),
                    y_prev: vec![0.0; fd],
                    context: vec![0.0; memory.dim()],
                    frames: Vec::new(),
                    stopped: false,
                    threshold: config.stop_threshold,
                    error: None,
                };
                let out = decode_hard(&memory, family, &sampler, &mut rng, &mut source)?;
                if let Some(e) = source.error {
                    return Err(e);
                }
                let mut path = out.path;
                if source.stopped {
                    // the stop step attended an entry but emitted no frame
                    path.positions.pop();
                }
                Ok(Inference {
                    frames: source.frames,
                    alignment: InferredAlignment::Hard(path),
                    stopped: source.stopped,
                    truncated: out.truncated && !source.stopped,
                })
            }
        }
    }
}

/// Position-wise frame matches over the longer of the two sequences. A frame
/// matches when its token argmax and parity bit agree with the target.
pub fn frame_accuracy(predicted: &[Vec<f64>], target: &[Vec<f64>], frame_dim: usize) -> f64 {
    let denom = predicted.len().max(target.len());
    if denom == 0 {
        return 1.0;
    }
    let tokens = frame_dim - 1;
    let key = |f: &[f64]| (argmax(&f[..tokens]), f[tokens] > 0.5);
    let hits = predicted
        .iter()
        .zip(target)
        .filter(|(a, b)| key(a) == key(b))
        .count();
    hits as f64 / denom as f64
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = j;
        }
    }
    best
}

/// Miniature configuration (all widths ≤ 8) used for whole-model gradient checks.
pub fn miniature_config(mechanism: Mechanism) -> ModelConfig {
    ModelConfig {
        mechanism,
        embedding_dim: 3,
        encoder_dim: 4,
        decoder_dim: 5,
        attention_dim: 3,
        location_filters: 2,
        location_width: 3,
        gmm_components: 2,
        ..ModelConfig::default()
    }
}

/// Whole-model backward against central differences on one random
/// miniature instance (`n ≤ 4` tokens, `T ≤ 5` frames). Parameters are
/// jittered so every path carries signal; training noise is on where the
/// mechanism uses it.
pub fn model_gradient_check(mechanism: Mechanism, seed: u64) -> Result<crate::verify::GradCheck> {
    use crate::verify::{central_difference, GradCheck, FD_STEP};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens_total = 4;
    let mut model = ToyModel::new(miniature_config(mechanism), tokens_total, rng.next_u64())?;
    let mut flat = model.params.flatten();
    for v in flat.iter_mut() {
        *v += rng.random_range(-0.1..0.1);
    }
    model.params.assign_flat(&flat)?;
    let n = rng.random_range(2..=4);
    let tokens: Vec<usize> = (0..n).map(|_| rng.random_range(0..tokens_total)).collect();
    let durations: Vec<usize> = (0..n).map(|_| rng.random_range(1..=2)).collect();
    let mut pair = super::task::build_pair(tokens, durations, model.frame_dim);
    let t = rng.random_range(2..=5).min(pair.frames.len());
    pair.frames.drain(..pair.frames.len() - t);
    let noise = Some(rng.next_u64());

    let pass = model.forward_teacher_forced(&pair.tokens, &pair.frames, noise)?;
    let analytic = model.backward(&pass)?.flatten();
    let mut probe = model.clone();
    let numeric = central_difference(
        |x| {
            probe.params.assign_flat(x).expect("same layout");
            probe
                .forward_teacher_forced(&pair.tokens, &pair.frames, noise)
                .map(|p| p.loss)
                .unwrap_or(f64::NAN)
        },
        &flat,
        FD_STEP,
    );
    Ok(GradCheck::compare(&format!("{} model", mechanism.name()), &analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::task::{build_pair, ToyTaskSpec};

    #[test]
    fn whole_model_gradients() {
        for m in Mechanism::ALL {
            for seed in 0..4 {
                let c = model_gradient_check(m, seed).unwrap();
                assert!(c.max_relative_error <= 1e-4, "{c:?}");
            }
        }
    }

    #[test]
    fn unused_parameters_get_zero_gradient() {
        let pair = build_pair(vec![0, 1, 2], vec![1, 2, 1], 5);
        for m in Mechanism::ALL {
            let model = ToyModel::new(ModelConfig::for_mechanism(m), 4, 1).unwrap();
            let pass = model.forward_teacher_forced(&pair.tokens, &pair.frames, Some(3)).unwrap();
            let g = model.backward(&pass).unwrap();
            let zero = |v: &[f64]| v.iter().all(|&x| x == 0.0);
            assert_eq!(zero(g.gmm_w.as_slice()) && zero(&g.gmm_b), m != Mechanism::Gmm, "{m:?}");
            assert_eq!(zero(&g.ta_w) && g.ta_b == 0.0, m != Mechanism::FaTa, "{m:?}");
            if m == Mechanism::Gmm {
                assert!(zero(g.energy.key_weights.as_slice()) && g.energy.bias == 0.0);
            }
            if m != Mechanism::Lsa {
                assert!(g.location_filters.as_slice().is_empty() || zero(g.location_filters.as_slice()));
            }
        }
    }

    #[test]
    fn zero_head_zero_targets_leaves_stop_loss() {
        let mut model = ToyModel::new(ModelConfig::for_mechanism(Mechanism::Lsa), 4, 2).unwrap();
        model.params.out_w.as_mut_slice().fill(0.0);
        model.params.out_b.fill(0.0);
        let frames = vec![vec![0.0; 6]; 4];
        let pass = model.forward_teacher_forced(&[0, 1], &frames, None).unwrap();
        assert_eq!(pass.mse, 0.0);
        assert!((pass.loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn recorded_rows_obey_mass_laws() {
        let spec = ToyTaskSpec::default();
        let pair = &crate::toy::generate_dataset(&spec, crate::toy::Split::Train).unwrap()[0];
        for m in Mechanism::ALL {
            let model = ToyModel::new(ModelConfig::for_mechanism(m), spec.token_count(), 4).unwrap();
            let pass = model.forward_teacher_forced(&pair.tokens, &pair.frames, Some(1)).unwrap();
            for row in &pass.alignment.rows {
                assert!(row.mass() <= 1.0 + 1e-12);
                if m == Mechanism::Sma || m == Mechanism::Lsa || m.is_forward() {
                    assert!((row.mass() - 1.0).abs() < 1e-12, "{m:?}");
                }
            }
        }
    }

    #[test]
    fn parameter_budget() {
        for m in Mechanism::ALL {
            let model = ToyModel::new(ModelConfig::for_mechanism(m), 12, 0).unwrap();
            assert!(model.parameter_count() <= MAX_PARAMETERS);
        }
    }

    #[test]
    fn hard_inference_rejected_for_softmax_mechanisms() {
        let model = ToyModel::new(ModelConfig::for_mechanism(Mechanism::Lsa), 4, 0).unwrap();
        let cfg = InferenceConfig { mode: InferenceMode::HardGreedy, ..Default::default() };
        assert!(model.infer(&[0, 1], &cfg).is_err());
    }

    #[test]
    fn checkpoint_map_round_trip() {
        let model = ToyModel::new(ModelConfig::for_mechanism(Mechanism::FaTa), 6, 9).unwrap();
        let mut other = ToyModel::new(ModelConfig::for_mechanism(Mechanism::FaTa), 6, 10).unwrap();
        other.params.load_map(&model.params.to_map()).unwrap();
        assert_eq!(other.params, model.params);
        let mut wrong = ToyModel::new(ModelConfig::for_mechanism(Mechanism::Lsa), 6, 10).unwrap();
        assert!(wrong.params.load_map(&model.params.to_map()).is_err());
    }

    #[test]
    fn accuracy_counts_longer_sequence() {
        let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]];
        let b = vec![vec![1.0, 0.0, 0.0]];
        assert_eq!(frame_accuracy(&a, &b, 3), 0.5);
        assert_eq!(frame_accuracy(&a, &a, 3), 1.0);
    }
}
