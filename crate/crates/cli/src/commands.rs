use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use smattn::diagnostics::{
    alignment_from_csv, alignment_to_csv, compute_metrics, metrics_to_csv, render_table, to_pgm, CaseRow, ErrorClass,
};
use smattn::hard_decoder::HardAlignmentPath;
use smattn::kernels::{AlignmentMatrix, AlignmentRow, EdgePolicy};
use smattn::oracle::{decoder_marginals, max_total_variation, monte_carlo, Family, MONOTONIC_GUARD, STEPWISE_GUARD};
use smattn::toy::{
    classify_inference, frame_accuracy, generate_dataset, init_model, read_jsonl, train, write_jsonl, Checkpoint,
    InferenceConfig, InferenceMode, InferredAlignment, Mechanism, SequencePair, Split, ToyModel,
};
use smattn::verify::{monotonic_error, monotonic_sweep, parallel_sweep, stepwise_error, stepwise_sweep, SweepReport};
use smattn::{Probabilities, Row};

use crate::config::{RosterEntry, RunConfig};
use crate::error::{CliError, CliResult};
use crate::experiment::{self, render_summary, RunRecord, Splits, SystemSummary, TrendOutcome};
use crate::manifest::{FileDigest, Outputs};

fn read_input(path: &Path, what: &str) -> CliResult<Vec<u8>> {
    if !path.exists() {
        return Err(CliError::Usage(format!("{what} not found: {}", path.display())));
    }
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_dataset(path: &Path) -> CliResult<Vec<SequencePair>> {
    let bytes = read_input(path, "dataset")?;
    Ok(read_jsonl(BufReader::new(bytes.as_slice()))?)
}

fn jsonl_bytes(pairs: &[SequencePair]) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_jsonl(pairs, &mut buf)?;
    Ok(buf)
}

fn checkpoint_json(model: &ToyModel, step: usize) -> CliResult<Vec<u8>> {
    Ok(serde_json::to_vec(&Checkpoint::from_model(model, step)).map_err(smattn::Error::from)?)
}

pub fn load_checkpoint(path: &Path) -> CliResult<ToyModel> {
    let bytes = read_input(path, "checkpoint")?;
    let ck: Checkpoint = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("invalid checkpoint {}: {e}", path.display())))?;
    Ok(ck.into_model()?)
}

pub fn cmd_gen(config: &RunConfig) -> CliResult<()> {
    // everything is generated before the output directory is touched
    let mut files = Vec::new();
    let mut sizes = serde_json::Map::new();
    for split in Split::ALL {
        let pairs = generate_dataset(&config.task, split)?;
        sizes.insert(split.name().into(), json!(pairs.len()));
        files.push((format!("{}.jsonl", split.name()), jsonl_bytes(&pairs)?));
    }
    let mut out = Outputs::create(config.out_dir())?;
    for (name, bytes) in &files {
        out.write(name, bytes)?;
    }
    let manifest = out.finish("gen", config, Vec::new(), json!({ "pairs": sizes }))?;
    println!("wrote {} splits to {}", files.len(), manifest.parent().unwrap_or(Path::new(".")).display());
    Ok(())
}

pub fn cmd_train(config: &RunConfig, data: Option<&Path>) -> CliResult<()> {
    let (pairs, inputs) = match data {
        Some(dir) => {
            let path = if dir.is_dir() { dir.join("train.jsonl") } else { dir.to_path_buf() };
            (read_dataset(&path)?, vec![FileDigest::of_file(&path)?])
        }
        None => (generate_dataset(&config.task, Split::Train)?, Vec::new()),
    };
    let mut out = Outputs::create(config.out_dir())?;
    let mut model = init_model(&config.model, config.task.token_count(), &config.train)?;
    let root = out.root().to_path_buf();
    let mut written: Vec<String> = Vec::new();
    let cadence = config.train.checkpoint_every;
    let mut hook = |step: usize, m: &ToyModel| -> smattn::Result<()> {
        if cadence > 0 && step % cadence == 0 {
            let rel = format!("checkpoints/step-{step:06}.json");
            let path = root.join(&rel);
            let io = |e| smattn::Error::Io { path: path.display().to_string(), source: e };
            fs::create_dir_all(root.join("checkpoints")).map_err(io)?;
            let bytes = serde_json::to_vec(&Checkpoint::from_model(m, step))?;
            fs::write(&path, bytes).map_err(io)?;
            written.push(rel);
        }
        Ok(())
    };
    let result = train(&mut model, &pairs, &config.train, Some(&mut hook));
    for rel in written {
        out.record(&rel)?;
    }
    let report = match result {
        Ok(r) => r,
        Err(smattn::Error::NonFiniteLoss { step, loss }) => {
            // the model holds the last finite parameters
            out.write("last-good.json", &checkpoint_json(&model, step.saturating_sub(1))?)?;
            out.finish("train", config, inputs, json!({ "aborted": { "step": step, "loss": loss } }))?;
            return Err(smattn::Error::NonFiniteLoss { step, loss }.into());
        }
        Err(e) => return Err(e.into()),
    };
    out.write("checkpoint.json", &checkpoint_json(&model, config.train.steps)?)?;
    let mut curve = String::from("step,loss,grad_norm\n");
    for p in &report.loss_curve {
        curve.push_str(&format!("{},{:?},{:?}\n", p.step, p.loss, p.grad_norm));
    }
    out.write("loss_curve.csv", curve.as_bytes())?;
    println!(
        "{} trained for {} steps: final loss {:.5}, {} clipped steps, max gradient norm {:.3}",
        config.model.mechanism.name(),
        config.train.steps,
        report.final_loss,
        report.clipped_steps,
        report.max_grad_norm
    );
    out.finish(
        "train",
        config,
        inputs,
        json!({
            "parameters": model.parameter_count(),
            "final_loss": report.final_loss,
            "clipped_steps": report.clipped_steps,
            "max_grad_norm": report.max_grad_norm,
            "loss_curve": report.loss_curve,
        }),
    )?;
    Ok(())
}

/// One line of `index.jsonl` written by `infer` and read by `diagnose`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexEntry {
    pub case_id: String,
    pub label: String,
    pub tokens: Vec<usize>,
    /// Positions excluded from skip accounting.
    pub exempt: Vec<usize>,
    /// `soft` (alignment matrix CSV) or `hard` (path CSV, 1-based steps).
    pub kind: String,
    pub edge_policy: EdgePolicy,
    pub alignment: String,
    pub frames: String,
    pub steps: usize,
    pub stopped: bool,
    pub truncated: bool,
    pub frame_accuracy: Option<f64>,
}

fn parse_split(name: &str) -> CliResult<Split> {
    Split::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| CliError::Usage(format!("unknown split {name}; expected train, heldout or stress")))
}

fn path_heatmap(path: &HardAlignmentPath, n: usize) -> CliResult<AlignmentMatrix<f64>> {
    let rows = path.positions.iter().map(|&j| AlignmentRow::one_hot(n, j)).collect();
    Ok(AlignmentMatrix::new(rows, EdgePolicy::Leak)?)
}

fn frames_csv(frames: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for f in frames {
        let row: Vec<String> = f.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn cmd_infer(config: &RunConfig, checkpoint: &Path, input: Option<&Path>, split: &str) -> CliResult<()> {
    let model = load_checkpoint(checkpoint)?;
    let mut inputs = vec![FileDigest::of_file(checkpoint)?];
    let pairs = match input {
        Some(path) => {
            let pairs = read_dataset(path)?;
            inputs.push(FileDigest::of_file(path)?);
            pairs
        }
        None => generate_dataset(&config.task, parse_split(split)?)?,
    };
    let mechanism = model.config.mechanism;
    config
        .inference
        .validate(mechanism)
        .map_err(|e| CliError::Config(format!("inference: {e}")))?;
    if let Some(&bad) = pairs.iter().flat_map(|p| &p.tokens).find(|&&t| t >= model.tokens) {
        return Err(CliError::Config(format!("token {bad} is outside the checkpoint vocabulary")));
    }
    let label = RosterEntry::new(mechanism, config.inference.mode).label;
    let mut out = Outputs::create(config.out_dir())?;
    let mut index = String::new();
    let mut accuracy = 0.0;
    for (i, pair) in pairs.iter().enumerate() {
        let id = format!("{i:04}");
        let cfg = InferenceConfig { seed: config.inference.seed.wrapping_add(i as u64), ..config.inference };
        let result = model.infer(&pair.tokens, &cfg)?;
        let n = pair.tokens.len();
        let (kind, edge_policy, text, heat) = match &result.alignment {
            InferredAlignment::Soft(m) => ("soft", m.edge_policy, alignment_to_csv(m), m.clone()),
            InferredAlignment::Hard(p) => ("hard", EdgePolicy::Leak, p.to_csv(), path_heatmap(p, n)?),
        };
        let alignment = format!("alignments/{id}.csv");
        let frames = format!("frames/{id}.csv");
        out.write(&alignment, text.as_bytes())?;
        out.write(&frames, frames_csv(&result.frames).as_bytes())?;
        if heat.steps() > 0 {
            out.write(&format!("heatmaps/{id}.pgm"), &to_pgm(&heat))?;
        }
        let acc = frame_accuracy(&result.frames, pair.content_frames(), model.frame_dim);
        accuracy += acc;
        let entry = IndexEntry {
            case_id: id,
            label: label.clone(),
            tokens: pair.tokens.clone(),
            exempt: config.task.exempt_positions(&pair.tokens),
            kind: kind.into(),
            edge_policy,
            alignment,
            frames,
            steps: result.frames.len(),
            stopped: result.stopped,
            truncated: result.truncated,
            frame_accuracy: Some(acc),
        };
        index.push_str(&serde_json::to_string(&entry).map_err(smattn::Error::from)?);
        index.push('\n');
    }
    out.write("index.jsonl", index.as_bytes())?;
    let mean = accuracy / pairs.len().max(1) as f64;
    println!("{label}: decoded {} cases, mean frame accuracy {mean:.4}", pairs.len());
    out.finish(
        "infer",
        config,
        inputs,
        json!({ "label": label, "cases": pairs.len(), "mean_frame_accuracy": mean }),
    )?;
    Ok(())
}

pub fn cmd_diagnose(config: &RunConfig, input: &Path) -> CliResult<()> {
    let index_path = if input.is_dir() { input.join("index.jsonl") } else { input.to_path_buf() };
    let base = index_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let text = String::from_utf8(read_input(&index_path, "alignment index")?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", index_path.display())))?;
    let mut inputs = vec![FileDigest::of_file(&index_path)?];
    let mut entries = Vec::new();
    for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let e: IndexEntry = serde_json::from_str(line)
            .map_err(|e| CliError::Usage(format!("{} line {}: {e}", index_path.display(), k + 1)))?;
        entries.push(e);
    }
    let label = entries.first().map_or("unknown".to_string(), |e| e.label.clone());
    let mut out = Outputs::create(config.out_dir())?;
    let mut cases = Vec::new();
    for e in &entries {
        let path = base.join(&e.alignment);
        let text = String::from_utf8(read_input(&path, "alignment")?)
            .map_err(|err| CliError::Usage(format!("{}: {err}", path.display())))?;
        inputs.push(FileDigest::of_file(&path)?);
        let n = e.tokens.len();
        let alignment = match e.kind.as_str() {
            "soft" => InferredAlignment::Soft(alignment_from_csv(&text, e.edge_policy)?),
            "hard" => InferredAlignment::Hard(HardAlignmentPath::from_csv(&text)?),
            other => return Err(CliError::Usage(format!("case {}: unknown alignment kind {other}", e.case_id))),
        };
        let metrics = match &alignment {
            InferredAlignment::Soft(m) if m.steps() > 0 => Some(compute_metrics(m, n)?),
            InferredAlignment::Hard(p) if !p.is_empty() => Some(compute_metrics::<f64>(p, n)?),
            _ => None,
        };
        if let Some(m) = metrics {
            out.write(&format!("metrics/{}.csv", e.case_id), metrics_to_csv(&m).as_bytes())?;
        }
        let classification = classify_inference(&alignment, n, &config.thresholds, &e.exempt)?;
        cases.push(CaseRow { case_id: e.case_id.clone(), classification });
    }
    let report = smattn::diagnostics::corpus_report(&label, cases)?;
    out.write("cases.csv", report.cases_csv().as_bytes())?;
    out.write("report.csv", report.to_csv().as_bytes())?;
    let table = render_table(std::slice::from_ref(&report));
    out.write("report.txt", table.as_bytes())?;
    out.write_json("report.json", &report)?;
    print!("{table}");
    out.finish(
        "diagnose",
        config,
        inputs,
        json!({
            "label": label,
            "failure_rate": report.failure_rate,
            "dominant_class": report.dominant_class(),
        }),
    )?;
    Ok(())
}

/// One check run by `oracle`.
#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub summary: String,
}

impl From<SweepReport> for OracleCheck {
    fn from(r: SweepReport) -> Self {
        Self {
            name: r.name.clone(),
            max_error: r.max_error,
            tolerance: r.tolerance,
            passed: r.ok(),
            summary: r.summary(),
        }
    }
}

fn single_check(name: &str, err: f64, tolerance: f64) -> OracleCheck {
    let passed = err <= tolerance;
    OracleCheck {
        name: name.into(),
        max_error: err,
        tolerance,
        passed,
        summary: format!(
            "{name}: {} (error {err:.3e}, tolerance {tolerance:e})",
            if passed { "ok" } else { "FAILED" }
        ),
    }
}

/// Sweeps of recursion-vs-enumeration and parallel-vs-recursive equivalence.
pub fn random_oracle_checks(instances: usize, seed: u64) -> CliResult<Vec<OracleCheck>> {
    Ok(vec![
        stepwise_sweep(instances, seed, 10, EdgePolicy::Clamp)?.into(),
        stepwise_sweep(instances, seed, 10, EdgePolicy::Leak)?.into(),
        monotonic_sweep(instances, seed, MONOTONIC_GUARD)?.into(),
        parallel_sweep(instances, seed, 64)?.into(),
    ])
}

/// Checks on one frozen probability matrix: exact recursion equivalence when
/// the matrix is small enough to enumerate, and sampled hard decodes against
/// closed-form marginals.
pub fn matrix_oracle_checks(p: &Probabilities, samples: usize, seed: u64) -> CliResult<Vec<OracleCheck>> {
    let (t, n) = (p.steps(), p.memory_len());
    let start = Row::one_hot(n, 0);
    let mut checks = Vec::new();
    if t <= STEPWISE_GUARD && n <= STEPWISE_GUARD {
        for policy in [EdgePolicy::Clamp, EdgePolicy::Leak] {
            let name = format!("stepwise recursion vs enumeration ({policy:?})").to_lowercase();
            checks.push(single_check(&name, stepwise_error(&start, p, policy)?, 1e-12));
        }
    }
    if t <= MONOTONIC_GUARD && n <= MONOTONIC_GUARD {
        checks.push(single_check("monotonic recursion vs enumeration", monotonic_error(&start, p)?, 1e-12));
    }
    for (name, family) in [
        ("monotonic hard samples vs marginals", Family::Monotonic),
        ("stepwise hard samples vs marginals (clamp)", Family::Stepwise(EdgePolicy::Clamp)),
        ("stepwise hard samples vs marginals (leak)", Family::Stepwise(EdgePolicy::Leak)),
    ] {
        let estimate = monte_carlo(p, family, samples, seed)?;
        let exact = decoder_marginals(p, family)?;
        checks.push(single_check(name, max_total_variation(&estimate, &exact), 0.02));
    }
    Ok(checks)
}

pub fn cmd_oracle(
    config: &RunConfig,
    random: Option<usize>,
    matrix: Option<&Path>,
    samples: usize,
) -> CliResult<()> {
    let (checks, inputs) = match (random, matrix) {
        (Some(count), None) => (random_oracle_checks(count, config.seed)?, Vec::new()),
        (None, Some(path)) => {
            let text = String::from_utf8(read_input(path, "probability matrix")?)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let rows = alignment_from_csv::<f64>(&text, EdgePolicy::Leak)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let rows: Vec<Vec<f64>> = rows.rows.into_iter().map(|r| r.into_weights()).collect();
            let p = Probabilities::from_rows(&rows)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            (matrix_oracle_checks(&p, samples, config.seed)?, vec![FileDigest::of_file(path)?])
        }
        _ => return Err(CliError::Usage("oracle needs exactly one of --random N or --matrix FILE".into())),
    };
    let mut out = Outputs::create(config.out_dir())?;
    let mut text = String::new();
    for c in &checks {
        text.push_str(&c.summary);
        text.push('\n');
    }
    print!("{text}");
    out.write("report.txt", text.as_bytes())?;
    out.write_json("report.json", &checks)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    out.finish("oracle", config, inputs, json!({ "passed": failed.is_empty(), "checks": checks.len() }))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(format!("oracle checks failed: {}", failed.join(", "))))
    }
}

/// Parses `path[:mode]` where mode is soft, hard_greedy or hard_sampled.
pub fn parse_checkpoint_spec(spec: &str) -> CliResult<(PathBuf, Option<InferenceMode>)> {
    for (suffix, mode) in [
        (":soft", InferenceMode::Soft),
        (":hard_greedy", InferenceMode::HardGreedy),
        (":hard_sampled", InferenceMode::HardSampled),
    ] {
        if let Some(path) = spec.strip_suffix(suffix) {
            return Ok((PathBuf::from(path), Some(mode)));
        }
    }
    Ok((PathBuf::from(spec), None))
}

/// Expectations from the stress section that do not hold.
pub fn stress_violations(config: &RunConfig, outcome: &TrendOutcome) -> Vec<String> {
    let mut bad = Vec::new();
    if let Some(want) = &config.stress.expect_lowest {
        if outcome.system(want).is_some() {
            match outcome.strictly_lowest_failure() {
                Some(got) if got == want => {}
                Some(got) => bad.push(format!("{got} has the lowest failure rate, expected {want}")),
                None => bad.push(format!("no strictly lowest failure rate, expected {want}")),
            }
        }
    }
    for (label, class) in &config.stress.expect_dominant {
        if let Some(s) = outcome.system(label) {
            if s.dominant_class != Some(*class) {
                let got = s.dominant_class.map_or("none", ErrorClass::name);
                bad.push(format!("{label} dominant error class is {got}, expected {}", class.name()));
            }
        }
    }
    bad
}

fn write_trend(out: &mut Outputs, outcome: &TrendOutcome) -> CliResult<String> {
    let mut runs = String::from("label,seed,final_loss,clipped_steps,heldout_accuracy,stress_accuracy,stress_failure_rate\n");
    for r in &outcome.runs {
        runs.push_str(&format!(
            "{},{},{:?},{},{:?},{:?},{:?}\n",
            r.label, r.seed, r.final_loss, r.clipped_steps, r.heldout.accuracy, r.stress.accuracy, r.stress.report.failure_rate
        ));
    }
    out.write("runs.csv", runs.as_bytes())?;
    for s in &outcome.systems {
        out.write(&format!("reports/{}.csv", s.label), s.pooled_stress.to_csv().as_bytes())?;
        out.write(&format!("cases/{}.csv", s.label), s.pooled_stress.cases_csv().as_bytes())?;
    }
    let pooled: Vec<_> = outcome.systems.iter().map(|s| s.pooled_stress.clone()).collect();
    let text = format!("{}\n{}", render_summary(&outcome.systems), render_table(&pooled));
    out.write("summary.txt", text.as_bytes())?;
    let compact: Vec<_> = outcome
        .systems
        .iter()
        .map(|s| {
            json!({
                "label": s.label,
                "mechanism": s.mechanism,
                "mode": s.mode,
                "seeds": s.seeds,
                "heldout_accuracy": s.heldout_accuracy,
                "mean_heldout_accuracy": s.mean_heldout_accuracy,
                "stress_failure_rate": s.stress_failure_rate,
                "mean_stress_failure_rate": s.mean_stress_failure_rate,
                "mean_stress_accuracy": s.mean_stress_accuracy,
                "dominant_class": s.dominant_class,
                "collapse": s.pooled_stress.collapse,
                "repeat": s.pooled_stress.repeat,
                "skip": s.pooled_stress.skip,
            })
        })
        .collect();
    out.write_json("summary.json", &compact)?;
    Ok(text)
}

pub fn cmd_stress(config: &RunConfig, checkpoints: &[String], keep_models: bool) -> CliResult<()> {
    let splits = Splits::generate(config)?;
    let mut config = config.clone();
    let mut out = Outputs::create(config.out_dir())?;
    let mut inputs = Vec::new();
    let outcome = if checkpoints.is_empty() {
        let root = out.root().to_path_buf();
        let mut saved = Vec::new();
        let outcome = experiment::run_trend(
            &config,
            &splits,
            |line| eprintln!("{line}"),
            |mechanism: Mechanism, seed, model: &ToyModel| {
                if keep_models {
                    let rel = format!("models/{}-seed{seed}.json", mechanism.name());
                    let path = root.join(&rel);
                    fs::create_dir_all(root.join("models")).map_err(|e| CliError::io(&root, e))?;
                    fs::write(&path, checkpoint_json(model, config.train.steps)?).map_err(|e| CliError::io(&path, e))?;
                    saved.push(rel);
                }
                Ok(())
            },
        )?;
        for rel in saved {
            out.record(&rel)?;
        }
        outcome
    } else {
        let mut roster = Vec::new();
        let mut runs = Vec::new();
        for spec in checkpoints {
            let (path, mode) = parse_checkpoint_spec(spec)?;
            let model = load_checkpoint(&path)?;
            inputs.push(FileDigest::of_file(&path)?);
            let mode = mode.unwrap_or(config.inference.mode);
            let entry = RosterEntry::new(model.config.mechanism, mode);
            InferenceConfig { mode, ..config.inference }
                .validate(entry.mechanism)
                .map_err(|e| CliError::Config(format!("{spec}: {e}")))?;
            if roster.iter().any(|r: &RosterEntry| r.label == entry.label) {
                return Err(CliError::Usage(format!("two checkpoints share the label {}", entry.label)));
            }
            let heldout = experiment::evaluate_entry(&config, &model, &entry, &splits.heldout, config.seed)?;
            let stress = experiment::evaluate_entry(&config, &model, &entry, &splits.stress, config.seed)?;
            eprintln!(
                "{}: held-out accuracy {:.4}, stress failure rate {:.3}",
                entry.label, heldout.accuracy, stress.report.failure_rate
            );
            runs.push(RunRecord {
                label: entry.label.clone(),
                seed: config.seed,
                final_loss: f64::NAN,
                clipped_steps: 0,
                parameters: model.parameter_count(),
                train_seconds: 0.0,
                heldout,
                stress,
            });
            roster.push(entry);
        }
        config.stress.roster = roster;
        let systems: Vec<SystemSummary> = experiment::summarize(&config, &runs)?;
        TrendOutcome { runs, systems }
    };
    let text = write_trend(&mut out, &outcome)?;
    print!("{text}");
    let violations = stress_violations(&config, &outcome);
    for v in &violations {
        println!("expectation failed: {v}");
    }
    out.finish(
        "stress",
        &config,
        inputs,
        json!({ "passed": violations.is_empty(), "violations": violations }),
    )?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(violations.join("; ")))
    }
}
