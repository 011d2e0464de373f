//! Multi-seed training and evaluation of a mechanism roster on the toy task.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use smattn::diagnostics::{corpus_report, CaseRow, CorpusReport, ErrorClass};
use smattn::toy::{
    evaluate, generate_dataset, init_model, train, Evaluation, InferenceConfig, InferenceMode, Mechanism, SequencePair,
    Split, ToyModel, TrainReport,
};

use crate::config::{RosterEntry, RunConfig};
use crate::error::CliResult;

pub struct Splits {
    pub train: Vec<SequencePair>,
    pub heldout: Vec<SequencePair>,
    pub stress: Vec<SequencePair>,
}

impl Splits {
    pub fn generate(config: &RunConfig) -> CliResult<Self> {
        Ok(Self {
            train: generate_dataset(&config.task, Split::Train)?,
            heldout: generate_dataset(&config.task, Split::Heldout)?,
            stress: generate_dataset(&config.task, Split::Stress)?,
        })
    }
}

/// Trains one mechanism with the run's settings and the given seed.
pub fn train_mechanism(
    config: &RunConfig,
    mechanism: Mechanism,
    seed: u64,
    data: &[SequencePair],
) -> CliResult<(ToyModel, TrainReport)> {
    let train_cfg = smattn::toy::TrainConfig { seed, ..config.train.clone() };
    let mut model = init_model(&config.model_for(mechanism), config.task.token_count(), &train_cfg)?;
    let report = train(&mut model, data, &train_cfg, None)?;
    Ok((model, report))
}

pub fn evaluate_entry(
    config: &RunConfig,
    model: &ToyModel,
    entry: &RosterEntry,
    pairs: &[SequencePair],
    seed: u64,
) -> CliResult<Evaluation> {
    let inference = InferenceConfig { mode: entry.mode, seed, ..config.inference };
    Ok(evaluate(model, pairs, &config.task, &inference, &config.thresholds, &entry.label)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    pub final_loss: f64,
    pub clipped_steps: usize,
    pub parameters: usize,
    /// Wall-clock training time; kept out of every written artifact.
    #[serde(skip)]
    pub train_seconds: f64,
    pub heldout: Evaluation,
    pub stress: Evaluation,
}

/// Per-label results pooled over seeds.
#[derive(Debug, Clone, Serialize)]
pub struct SystemSummary {
    pub label: String,
    pub mechanism: Mechanism,
    pub mode: InferenceMode,
    pub seeds: Vec<u64>,
    pub heldout_accuracy: Vec<f64>,
    pub mean_heldout_accuracy: f64,
    pub stress_failure_rate: Vec<f64>,
    pub mean_stress_failure_rate: f64,
    pub mean_stress_accuracy: f64,
    /// Stress cases from every seed in one report.
    pub pooled_stress: CorpusReport,
    pub dominant_class: Option<ErrorClass>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendOutcome {
    pub runs: Vec<RunRecord>,
    pub systems: Vec<SystemSummary>,
}

impl TrendOutcome {
    pub fn system(&self, label: &str) -> Option<&SystemSummary> {
        self.systems.iter().find(|s| s.label == label)
    }

    /// Label with a strictly lower mean stress failure rate than all others.
    pub fn strictly_lowest_failure(&self) -> Option<&str> {
        let mut sorted: Vec<&SystemSummary> = self.systems.iter().collect();
        sorted.sort_by(|a, b| a.mean_stress_failure_rate.total_cmp(&b.mean_stress_failure_rate));
        match sorted.as_slice() {
            [only] => Some(&only.label),
            [a, b, ..] if a.mean_stress_failure_rate < b.mean_stress_failure_rate => Some(&a.label),
            _ => None,
        }
    }

    /// Highest mean held-out accuracy and its label.
    pub fn best_heldout(&self) -> Option<(&str, f64)> {
        self.systems
            .iter()
            .max_by(|a, b| a.mean_heldout_accuracy.total_cmp(&b.mean_heldout_accuracy))
            .map(|s| (s.label.as_str(), s.mean_heldout_accuracy))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Trains each roster mechanism once per seed (entries sharing a mechanism
/// share the model) and evaluates every entry on the held-out and stress
/// splits. `progress` receives one line per finished run.
pub fn run_trend(
    config: &RunConfig,
    splits: &Splits,
    mut progress: impl FnMut(&str),
    mut on_model: impl FnMut(Mechanism, u64, &ToyModel) -> CliResult<()>,
) -> CliResult<TrendOutcome> {
    let mut mechanisms: Vec<Mechanism> = config.stress.roster.iter().map(|r| r.mechanism).collect();
    mechanisms.sort();
    mechanisms.dedup();
    let mut runs = Vec::new();
    for &seed in &config.stress.seeds {
        for &mechanism in &mechanisms {
            let started = Instant::now();
            let (model, report) = train_mechanism(config, mechanism, seed, &splits.train)?;
            let train_seconds = started.elapsed().as_secs_f64();
            on_model(mechanism, seed, &model)?;
            for entry in config.stress.roster.iter().filter(|r| r.mechanism == mechanism) {
                let heldout = evaluate_entry(config, &model, entry, &splits.heldout, seed)?;
                let stress = evaluate_entry(config, &model, entry, &splits.stress, seed)?;
                progress(&format!(
                    "{} seed {seed}: loss {:.4}, held-out accuracy {:.4}, stress failure rate {:.3}",
                    entry.label, report.final_loss, heldout.accuracy, stress.report.failure_rate
                ));
                runs.push(RunRecord {
                    label: entry.label.clone(),
                    seed,
                    final_loss: report.final_loss,
                    clipped_steps: report.clipped_steps,
                    parameters: model.parameter_count(),
                    train_seconds,
                    heldout,
                    stress,
                });
            }
        }
    }
    let systems = summarize(config, &runs)?;
    Ok(TrendOutcome { runs, systems })
}

pub fn summarize(config: &RunConfig, runs: &[RunRecord]) -> CliResult<Vec<SystemSummary>> {
    let mut by_label: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        by_label.entry(&r.label).or_default().push(r);
    }
    let mut systems = Vec::new();
    for entry in &config.stress.roster {
        let Some(records) = by_label.get(entry.label.as_str()) else {
            continue;
        };
        let heldout_accuracy: Vec<f64> = records.iter().map(|r| r.heldout.accuracy).collect();
        let stress_failure_rate: Vec<f64> = records.iter().map(|r| r.stress.report.failure_rate).collect();
        let stress_accuracy: Vec<f64> = records.iter().map(|r| r.stress.accuracy).collect();
        let pooled_cases: Vec<CaseRow> = records
            .iter()
            .flat_map(|r| {
                r.stress.report.cases.iter().map(move |c| CaseRow {
                    case_id: format!("s{}-{}", r.seed, c.case_id),
                    classification: c.classification,
                })
            })
            .collect();
        let pooled_stress = corpus_report(&entry.label, pooled_cases)?;
        systems.push(SystemSummary {
            label: entry.label.clone(),
            mechanism: entry.mechanism,
            mode: entry.mode,
            seeds: records.iter().map(|r| r.seed).collect(),
            mean_heldout_accuracy: mean(&heldout_accuracy),
            heldout_accuracy,
            mean_stress_failure_rate: mean(&stress_failure_rate),
            stress_failure_rate,
            mean_stress_accuracy: mean(&stress_accuracy),
            dominant_class: pooled_stress.dominant_class(),
            pooled_stress,
        });
    }
    Ok(systems)
}

/// Summary table with one row per roster entry.
pub fn render_summary(systems: &[SystemSummary]) -> String {
    let mut out = format!(
        "{:<10} {:>6} {:>10} {:>10} {:>10} {:>10}\n",
        "system", "seeds", "held acc", "stress acc", "failed", "dominant"
    );
    for s in systems {
        out.push_str(&format!(
            "{:<10} {:>6} {:>10.4} {:>10.4} {:>9.1}% {:>10}\n",
            s.label,
            s.seeds.len(),
            s.mean_heldout_accuracy,
            s.mean_stress_accuracy,
            100.0 * s.mean_stress_failure_rate,
            s.dominant_class.map_or("-", ErrorClass::name)
        ));
    }
    out
}
