use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smattn::diagnostics::{ErrorClass, ErrorThresholds};
use smattn::toy::{InferenceConfig, InferenceMode, Mechanism, ModelConfig, ToyTaskSpec, TrainConfig};

use crate::error::{CliError, CliResult};

/// One trained system in a stress comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterEntry {
    pub label: String,
    pub mechanism: Mechanism,
    pub mode: InferenceMode,
}

impl RosterEntry {
    pub fn new(mechanism: Mechanism, mode: InferenceMode) -> Self {
        let label = match mode {
            InferenceMode::Soft if mechanism.is_selection_based() => format!("{}_soft", mechanism.name()),
            InferenceMode::Soft => mechanism.name().to_string(),
            InferenceMode::HardGreedy => format!("{}_hard", mechanism.name()),
            InferenceMode::HardSampled => format!("{}_sampled", mechanism.name()),
        };
        Self { label, mechanism, mode }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StressConfig {
    pub roster: Vec<RosterEntry>,
    /// Training seeds; results are averaged over them.
    pub seeds: Vec<u64>,
    /// Label whose failure rate must be strictly lowest.
    pub expect_lowest: Option<String>,
    /// Required dominant error class per label, pooled over seeds.
    pub expect_dominant: BTreeMap<String, ErrorClass>,
}

impl Default for StressConfig {
    fn default() -> Self {
        Self {
            roster: vec![
                RosterEntry::new(Mechanism::Lsa, InferenceMode::Soft),
                RosterEntry::new(Mechanism::Ma, InferenceMode::HardGreedy),
                RosterEntry::new(Mechanism::Sma, InferenceMode::Soft),
            ],
            seeds: vec![1, 2, 3, 4, 5],
            expect_lowest: Some("sma_soft".into()),
            expect_dominant: BTreeMap::from([("ma_hard".to_string(), ErrorClass::Skip)]),
        }
    }
}

/// Everything a command needs, read from one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: ToyTaskSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub thresholds: ErrorThresholds,
    /// Drives training and sampling. The dataset keeps `task.seed`.
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub stress: StressConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: ToyTaskSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            inference: InferenceConfig::default(),
            thresholds: ErrorThresholds::default(),
            seed: 0,
            out: None,
            stress: StressConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let wrap = |what: &str, e: smattn::Error| CliError::Config(format!("{what}: {e}"));
        self.task.validate().map_err(|e| wrap("task", e))?;
        self.model.validate().map_err(|e| wrap("model", e))?;
        self.train.validate().map_err(|e| wrap("train", e))?;
        self.inference.validate(self.model.mechanism).map_err(|e| wrap("inference", e))?;
        self.thresholds.validate().map_err(|e| wrap("thresholds", e))?;
        for entry in &self.stress.roster {
            let probe = InferenceConfig { mode: entry.mode, ..self.inference };
            probe
                .validate(entry.mechanism)
                .map_err(|e| wrap(&format!("stress roster entry {}", entry.label), e))?;
        }
        let mut labels: Vec<&str> = self.stress.roster.iter().map(|r| r.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("stress roster labels must be unique".into()));
        }
        if let Some(l) = &self.stress.expect_lowest {
            if !labels.contains(&l.as_str()) {
                return Err(CliError::Config(format!("stress.expect_lowest names unknown label {l}")));
            }
        }
        if let Some(l) = self.stress.expect_dominant.keys().find(|l| !labels.contains(&l.as_str())) {
            return Err(CliError::Config(format!("stress.expect_dominant names unknown label {l}")));
        }
        if self.stress.seeds.is_empty() {
            return Err(CliError::Config("stress.seeds must not be empty".into()));
        }
        Ok(())
    }

    /// Applies `--seed` and `--out`, then pushes the run seed into the
    /// training and inference sections.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>, command: &str) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        if out.is_some() {
            self.out = out;
        }
        if self.out.is_none() {
            self.out = Some(PathBuf::from("smattn-out").join(command));
        }
        self.train.seed = self.seed;
        self.inference.seed = self.seed;
        self
    }

    pub fn out_dir(&self) -> &Path {
        self.out.as_deref().unwrap_or(Path::new("smattn-out"))
    }

    /// Model configuration for one roster mechanism, sharing every other setting.
    pub fn model_for(&self, mechanism: Mechanism) -> ModelConfig {
        ModelConfig { mechanism, ..self.model.clone() }
    }

    pub fn sha256(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex_digest(canonical.as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
