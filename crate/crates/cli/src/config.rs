use std::fs;
use std::path::{Path, PathBuf};

use absclass_core::net::{CellKind, ModelSpec};
use absclass_core::train::TrainConfig;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "ABSCLASS_SEED";

/// Architecture knobs; the input dimension comes from the embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub cell: CellKind,
    pub bidirectional: bool,
    pub layers: usize,
    pub hidden_dim: usize,
    pub attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let s = ModelSpec::default();
        ModelConfig {
            cell: s.cell,
            bidirectional: s.bidirectional,
            layers: s.layers,
            hidden_dim: s.hidden_dim,
            attention: s.attention,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, input_dim: usize, seq_len: usize) -> ModelSpec {
        ModelSpec {
            cell: self.cell,
            input_dim,
            hidden_dim: self.hidden_dim,
            layers: self.layers,
            bidirectional: self.bidirectional,
            attention: self.attention,
            seq_len,
        }
    }
}

/// One JSON document configuring every subcommand. Command-line flags
/// override the matching field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub lemmas: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub idf: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub min_words: usize,
    /// Tokens kept per abstract (`d`).
    pub seq_len: usize,
    /// Minimum count for a major label; unset scales with the corpus.
    pub threshold: Option<usize>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Level-2 epochs; defaults to `train.epochs`.
    pub level2_epochs: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            test_corpus: None,
            stopwords: None,
            lemmas: None,
            embeddings: None,
            idf: None,
            schema: None,
            model_dir: None,
            min_words: 10,
            seq_len: absclass_core::features::DEFAULT_SEQ_LEN,
            threshold: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            level2_epochs: None,
            seed: None,
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Flag, then config, then the environment, then `train.seed`.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64> {
        let env = match std::env::var(SEED_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<u64>()
                    .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"))?,
            ),
            Err(_) => None,
        };
        let seed = flag.or(self.seed).or(env).unwrap_or(self.train.seed);
        self.seed = Some(seed);
        self.train.seed = seed;
        Ok(seed)
    }

    pub fn level2_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.level2_epochs.unwrap_or(self.train.epochs),
            ..self.train.clone()
        }
    }

    /// The config as echoed into artifacts. Output locations are left out so
    /// identical runs into different directories produce identical bytes.
    pub fn provenance(&self) -> serde_json::Value {
        let mut echo = self.clone();
        echo.model_dir = None;
        echo.workers = None;
        serde_json::to_value(echo).expect("config serializes")
    }
}

pub fn require<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    match value {
        Some(p) if p.exists() => Ok(p),
        Some(p) => bail!("{what} {} does not exist", p.display()),
        None => bail!("missing {what}: pass it as a flag or set it in the config file"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seq_len": 20, "model": {"cell": "lstm"}, "train": {"epochs": 2}}"#).unwrap();
        assert_eq!(cfg.seq_len, 20);
        assert_eq!(cfg.model.cell, CellKind::Lstm);
        assert_eq!(cfg.model.hidden_dim, 128);
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.threshold, None);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sequence_length": 3}"#).is_err());
    }

    #[test]
    fn flag_seed_wins() {
        let mut cfg = RunConfig { seed: Some(5), ..Default::default() };
        assert_eq!(cfg.resolve_seed(Some(9)).unwrap(), 9);
        assert_eq!(cfg.train.seed, 9);
        let mut cfg = RunConfig { seed: Some(5), ..Default::default() };
        assert_eq!(cfg.resolve_seed(None).unwrap(), 5);
    }

    #[test]
    fn level2_epochs_default_to_level1() {
        let mut cfg = RunConfig::default();
        cfg.train.epochs = 4;
        assert_eq!(cfg.level2_train_config().epochs, 4);
        cfg.level2_epochs = Some(11);
        assert_eq!(cfg.level2_train_config().epochs, 11);
    }
}
