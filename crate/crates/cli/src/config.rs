//! `key = value` experiment configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error. Lists are comma separated.

use std::fs;
use std::path::Path;

use neuralff::gnncore::ProcessorKind;
use neuralff::simulator::TerminationMode;
use neuralff::trainer::TrainConfig;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {reason}")]
    BadValue { line: usize, key: String, reason: String },
    #[error("cannot read {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    Default,
    Sweep,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub recipe: Recipe,
    pub train: TrainConfig,
    pub modes: Vec<TerminationMode>,
    pub scales: Vec<String>,
    pub sweep_sets: Vec<String>,
    pub runs: usize,
    pub t_b: u32,
    pub subroutines: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            recipe: Recipe::Default,
            train: TrainConfig::default(),
            modes: vec![
                TerminationMode::Threshold(1),
                TerminationMode::Threshold(3),
                TerminationMode::Threshold(5),
                TerminationMode::Bfs,
            ],
            scales: ["test_1x", "test_2x", "test_4x", "test_8x"].map(String::from).to_vec(),
            sweep_sets: Vec::new(),
            runs: 10,
            t_b: 5,
            subroutines: true,
        }
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut processor_set = false;
        let mut variety_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .filter(|(k, _)| !k.is_empty())
                .ok_or_else(|| ConfigError::Syntax { line, text: raw.to_string() })?;
            let bad = |reason: String| ConfigError::BadValue { line, key: key.to_string(), reason };
            macro_rules! num {
                () => {
                    value.parse().map_err(|e| bad(format!("{e}")))?
                };
            }
            let flag = || match value {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(bad("expected true or false".into())),
            };
            let t = &mut cfg.train;
            match key {
                "seed" => cfg.seed = num!(),
                "recipe" => {
                    cfg.recipe = match value {
                        "default" => Recipe::Default,
                        "sweep" => Recipe::Sweep,
                        "all" => Recipe::All,
                        _ => return Err(bad("expected default, sweep or all".into())),
                    }
                }
                "processor" => {
                    t.model.processor = value.parse::<ProcessorKind>().map_err(bad)?;
                    processor_set = true;
                }
                "latent" => t.model.latent = num!(),
                "embedding" => t.model.emb = num!(),
                "attention_heads" => t.model.attention_heads = num!(),
                "learning_rate" => t.learning_rate = num!(),
                "batch_size" => t.batch_size = num!(),
                "patience" => t.patience = num!(),
                "max_epochs" => t.max_epochs = num!(),
                "states_per_graph" => t.states_per_graph = num!(),
                "use_variety" => {
                    t.use_variety = flag()?;
                    variety_set = true;
                }
                "zero_cap_walks" => t.zero_cap_walks = flag()?,
                "redraw_weights" => t.redraw_weights = flag()?,
                "val_flow_graphs" => t.val_flow_graphs = num!(),
                "loss.predecessor" => t.loss.predecessor = num!(),
                "loss.termination" => t.loss.termination = num!(),
                "loss.reachability" => t.loss.reachability = num!(),
                "loss.bottleneck" => t.loss.bottleneck = num!(),
                "loss.capacity" => t.loss.capacity = num!(),
                "modes" => {
                    cfg.modes = list(value)
                        .iter()
                        .map(|m| m.parse::<TerminationMode>())
                        .collect::<Result<_, _>>()
                        .map_err(bad)?
                }
                "scales" => cfg.scales = list(value),
                "sweep_sets" => cfg.sweep_sets = list(value),
                "runs" => cfg.runs = num!(),
                "t_b" => cfg.t_b = num!(),
                "subroutines" => cfg.subroutines = flag()?,
                _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
            }
        }
        if processor_set && !variety_set {
            cfg.train.use_variety = cfg.train.model.processor == ProcessorKind::PnaNoStd;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), reason: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.modes.is_empty() || self.scales.is_empty() {
            return Err(ConfigError::Invalid("evaluation grid is empty".into()));
        }
        if self.runs == 0 || self.t_b == 0 {
            return Err(ConfigError::Invalid("runs and t_b must be at least 1".into()));
        }
        Ok(())
    }
}
