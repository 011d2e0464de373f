use serde::{Deserialize, Serialize};

use super::model::{frame_accuracy, InferenceConfig, InferredAlignment, ToyModel};
use super::task::{SequencePair, ToyTaskSpec};
use crate::diagnostics::{classify_errors, compute_metrics, corpus_report, CaseRow, CorpusReport, ErrorClassification, ErrorThresholds};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: CorpusReport,
    /// Mean frame accuracy over cases.
    pub accuracy: f64,
    /// Cases where the stop flag never fired.
    pub truncated: usize,
}

/// Classifies one free-running decode against its input length. An empty
/// output leaves every non-exempt token incomplete.
pub fn classify_inference(
    alignment: &InferredAlignment,
    n: usize,
    thresholds: &ErrorThresholds,
    exempt: &[usize],
) -> Result<ErrorClassification> {
    let empty = match alignment {
        InferredAlignment::Soft(m) => m.steps() == 0,
        InferredAlignment::Hard(p) => p.is_empty(),
    };
    if empty {
        let incomplete_tokens = (0..n).filter(|j| !exempt.contains(j)).count();
        return Ok(ErrorClassification {
            incomplete_tokens,
            case_failed: incomplete_tokens > thresholds.skip_tolerance,
            ..Default::default()
        });
    }
    let metrics = match alignment {
        InferredAlignment::Soft(m) => compute_metrics(m, n)?,
        InferredAlignment::Hard(p) => compute_metrics::<f64>(p, n)?,
    };
    classify_errors(&metrics, thresholds, exempt)
}

/// Free-running inference over `pairs`, with per-case error classes and
/// frame accuracy against the targets.
pub fn evaluate(
    model: &ToyModel,
    pairs: &[SequencePair],
    task: &ToyTaskSpec,
    inference: &InferenceConfig,
    thresholds: &ErrorThresholds,
    label: &str,
) -> Result<Evaluation> {
    let mut cases = Vec::with_capacity(pairs.len());
    let mut accuracy = 0.0;
    let mut truncated = 0;
    for (i, pair) in pairs.iter().enumerate() {
        let mut cfg = *inference;
        cfg.seed = inference.seed.wrapping_add(i as u64);
        let out = model.infer(&pair.tokens, &cfg)?;
        let exempt = task.exempt_positions(&pair.tokens);
        let classification = classify_inference(&out.alignment, pair.tokens.len(), thresholds, &exempt)?;
        accuracy += frame_accuracy(&out.frames, pair.content_frames(), model.frame_dim);
        truncated += usize::from(out.truncated);
        cases.push(CaseRow { case_id: format!("{i:04}"), classification });
    }
    Ok(Evaluation {
        report: corpus_report(label, cases)?,
        accuracy: accuracy / pairs.len().max(1) as f64,
        truncated,
    })
}
