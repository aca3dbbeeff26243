use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use textseek_core::augment::EditOperatorRatios;
use textseek_model::ModelConfig;

use crate::error::{Result, TrainError};

/// Which objectives and branches a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Detection, similarity with word augmentation, and CTC, end to end.
    Joint,
    /// Detector and crop-based retrieval network trained independently.
    Separated,
    /// Image features classified into PHOC vectors instead of the text branch.
    PhocHead,
    /// Joint, but only the query-to-proposal similarity term.
    NoPpQq,
    /// Joint without word augmentation.
    NoWas,
    /// Joint without the CTC term.
    NoCtc,
    /// Neither word augmentation nor CTC.
    Baseline,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Joint,
        Mode::Separated,
        Mode::PhocHead,
        Mode::NoPpQq,
        Mode::NoWas,
        Mode::NoCtc,
        Mode::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Joint => "joint",
            Mode::Separated => "separated",
            Mode::PhocHead => "phoc_head",
            Mode::NoPpQq => "no_pp_qq",
            Mode::NoWas => "no_was",
            Mode::NoCtc => "no_ctc",
            Mode::Baseline => "baseline",
        }
    }

    pub fn uses_was(self) -> bool {
        !matches!(self, Mode::NoWas | Mode::Baseline | Mode::PhocHead)
    }

    pub fn uses_ctc(self) -> bool {
        !matches!(self, Mode::NoCtc | Mode::Baseline)
    }

    /// Whether the proposal-proposal and query-query terms are kept.
    pub fn uses_pp_qq(self) -> bool {
        !matches!(self, Mode::NoPpQq)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = TrainError;

    /// Accepts the mode names and the component spellings `baseline`,
    /// `+ctc`, `+was` and `+was+ctc`.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.trim().to_ascii_lowercase().chars().filter(|c| !c.is_whitespace()).collect();
        let mode = match norm.as_str() {
            "joint" | "+was+ctc" | "+ctc+was" | "ours" => Mode::Joint,
            "separated" => Mode::Separated,
            "phoc_head" | "phoc" => Mode::PhocHead,
            "no_pp_qq" => Mode::NoPpQq,
            "no_was" | "+ctc" => Mode::NoWas,
            "no_ctc" | "+was" => Mode::NoCtc,
            "baseline" => Mode::Baseline,
            _ => return Err(TrainError::Config(format!("unknown mode {s:?}"))),
        };
        Ok(mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// SGD with momentum and L2 weight decay.
    Sgd,
    /// Adam with decoupled weight decay; `momentum` is its first-moment rate.
    Adam,
}

/// How the per-element smooth-L1 values of one similarity row are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowReduce {
    Max,
    Mean,
}

/// Training hyperparameters; a flat TOML table where every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Iterations at which the learning rate is multiplied by
    /// `lr_decay_factor`. Empty means 60% and 85% of `iterations`.
    pub lr_decay_steps: Vec<usize>,
    pub lr_decay_factor: f64,
    /// Linear learning-rate ramp over the first iterations (0 disables).
    pub warmup_iterations: usize,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip (0 disables).
    pub grad_clip: f64,
    /// Word augmentation ratios, `insert:delete:replace:keep`.
    pub was_ratios: String,
    pub seed: u64,
    pub row_reduce: RowReduce,
    /// Detected proposals kept per ground-truth word in addition to the
    /// ground-truth box itself.
    pub matched_per_gt: usize,
    pub match_iou: f64,
    pub log_every: usize,
    /// Checkpoint interval in iterations (0: only at the end).
    pub checkpoint_every: usize,
    pub channels: usize,
    pub steps: usize,
    pub backbone_width: usize,
    pub roi_height: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::desk(1);
        TrainConfig {
            mode: Mode::Joint,
            iterations: 5000,
            batch_size: 4,
            lr: 0.01,
            lr_decay_steps: Vec::new(),
            lr_decay_factor: 0.1,
            warmup_iterations: 100,
            optimizer: OptimizerKind::Sgd,
            momentum: 0.9,
            weight_decay: 1e-4,
            grad_clip: 10.0,
            was_ratios: "1:1:1:5".into(),
            seed: 20210806,
            row_reduce: RowReduce::Max,
            matched_per_gt: 2,
            match_iou: 0.5,
            log_every: 10,
            checkpoint_every: 0,
            channels: m.channels,
            steps: m.steps,
            backbone_width: m.backbone_width,
            roi_height: m.roi_height,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        TrainConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sets one key from its string form, as given on a command line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table: toml::Table = toml::from_str(&self.to_toml()).expect("own output parses");
        let current = table
            .get(key)
            .ok_or_else(|| TrainError::Config(format!("unknown key {key:?}")))?;
        let parsed = match current {
            toml::Value::String(_) => toml::Value::String(value.to_string()),
            toml::Value::Array(_) => {
                let items: std::result::Result<Vec<toml::Value>, _> = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<i64>().map(toml::Value::Integer))
                    .collect();
                toml::Value::Array(items.map_err(|e| TrainError::Config(format!("{key}: {e}")))?)
            }
            _ => {
                let probe = format!("v = {value}");
                let t: toml::Table = toml::from_str(&probe).map_err(|e| TrainError::Config(format!("{key}: {e}")))?;
                t["v"].clone()
            }
        };
        table.insert(key.to_string(), parsed);
        let updated: TrainConfig = table.try_into().map_err(|e: toml::de::Error| TrainError::Config(e.to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 || self.grad_clip < 0.0 {
            return bad("momentum must lie in [0, 1); weight decay and clip must be non-negative");
        }
        if !(self.match_iou > 0.0 && self.match_iou <= 1.0) {
            return bad("match_iou must lie in (0, 1]");
        }
        self.ratios()?;
        Ok(())
    }

    pub fn ratios(&self) -> Result<EditOperatorRatios> {
        Ok(EditOperatorRatios::parse(&self.was_ratios)?)
    }

    /// Iterations at which the rate decays.
    pub fn decay_steps(&self) -> Vec<usize> {
        if self.lr_decay_steps.is_empty() {
            let at = |f: f64| (self.iterations as f64 * f).round() as usize;
            vec![at(0.6), at(0.85)]
        } else {
            self.lr_decay_steps.clone()
        }
    }

    /// Learning rate used for the update at `iteration` (0-based).
    pub fn lr_at(&self, iteration: usize) -> f64 {
        let decays = self.decay_steps().iter().filter(|&&s| s > 0 && iteration >= s).count();
        let mut lr = self.lr * self.lr_decay_factor.powi(decays as i32);
        if iteration < self.warmup_iterations {
            lr *= (iteration + 1) as f64 / self.warmup_iterations as f64;
        }
        lr
    }

    pub fn model_config(&self, charset_size: usize) -> ModelConfig {
        ModelConfig {
            channels: self.channels,
            steps: self.steps,
            backbone_width: self.backbone_width,
            roi_height: self.roi_height,
            ..ModelConfig::desk(charset_size)
        }
    }
}
