//! Training configuration and its flat `key = value` file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AsteError, Result};
use crate::stage1::Stage1Hyper;
use crate::stage2::Stage2Hyper;

/// How the decay coefficient is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMode {
    /// `lr_e = lr / (1 + decay * e)`.
    InverseTime,
    /// Constant `lr`, with an L2 term `decay * theta` added to every gradient.
    WeightDecay,
}

/// Stage-one validation metric used to pick the best epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Mean of unified and opinion F1.
    Mean,
    Unified,
    Opinion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_mode: DecayMode,
    pub dropout: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// Recorded for reproducibility; every computation runs on the CPU.
    pub device: String,
    pub hidden: usize,
    pub gcn_layers: usize,
    pub train_embeddings: bool,
    pub emb_dim: usize,
    pub pos_dim: usize,
    pub pos_cap: usize,
    pub stage2_hidden: usize,
    pub threshold: f64,
    pub selection: Selection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            lr_decay: 0.001,
            decay_mode: DecayMode::InverseTime,
            dropout: 0.5,
            max_epochs: 40,
            batch_size: 1,
            seed: 1,
            epsilon: 0.5,
            device: "cpu".into(),
            hidden: 50,
            gcn_layers: 1,
            train_embeddings: false,
            emb_dim: 300,
            pos_dim: 25,
            pos_cap: 50,
            stage2_hidden: 50,
            threshold: 0.5,
            selection: Selection::Mean,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| AsteError::Config(format!("bad value {value:?} for {key}")))
}

impl FromStr for DecayMode {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "inverse-time" => Ok(DecayMode::InverseTime),
            "weight-decay" => Ok(DecayMode::WeightDecay),
            _ => Err(()),
        }
    }
}

impl fmt::Display for DecayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecayMode::InverseTime => "inverse-time",
            DecayMode::WeightDecay => "weight-decay",
        })
    }
}

impl FromStr for Selection {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "mean" => Ok(Selection::Mean),
            "unified" => Ok(Selection::Unified),
            "opinion" => Ok(Selection::Opinion),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::Mean => "mean",
            Selection::Unified => "unified",
            Selection::Opinion => "opinion",
        })
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 18] = [
        "lr",
        "lr_decay",
        "decay_mode",
        "dropout",
        "max_epochs",
        "batch_size",
        "seed",
        "epsilon",
        "device",
        "hidden",
        "gcn_layers",
        "train_embeddings",
        "emb_dim",
        "pos_dim",
        "pos_cap",
        "stage2_hidden",
        "threshold",
        "selection",
    ];

    /// Sets one field from its textual form. Unknown keys are a `ConfigError`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "lr" => self.lr = parse_value(key, v)?,
            "lr_decay" => self.lr_decay = parse_value(key, v)?,
            "decay_mode" => self.decay_mode = parse_value(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "max_epochs" => self.max_epochs = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "epsilon" => self.epsilon = parse_value(key, v)?,
            "device" => self.device = v.to_owned(),
            "hidden" => self.hidden = parse_value(key, v)?,
            "gcn_layers" => self.gcn_layers = parse_value(key, v)?,
            "train_embeddings" => self.train_embeddings = parse_value(key, v)?,
            "emb_dim" => self.emb_dim = parse_value(key, v)?,
            "pos_dim" => self.pos_dim = parse_value(key, v)?,
            "pos_cap" => self.pos_cap = parse_value(key, v)?,
            "stage2_hidden" => self.stage2_hidden = parse_value(key, v)?,
            "threshold" => self.threshold = parse_value(key, v)?,
            "selection" => self.selection = parse_value(key, v)?,
            other => return Err(AsteError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| AsteError::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(k, v)
    }

    /// Applies a config file's lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| AsteError::format(i + 1, format!("expected key = value, got {line:?}")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AsteError::io(path, e))?;
        let mut config = Self::default();
        config.apply_text(&text)?;
        Ok(config)
    }

    /// The file form; `apply_text` on a default config reproduces `self`.
    pub fn to_text(&self) -> String {
        let lines = [
            format!("lr = {}", self.lr),
            format!("lr_decay = {}", self.lr_decay),
            format!("decay_mode = {}", self.decay_mode),
            format!("dropout = {}", self.dropout),
            format!("max_epochs = {}", self.max_epochs),
            format!("batch_size = {}", self.batch_size),
            format!("seed = {}", self.seed),
            format!("epsilon = {}", self.epsilon),
            format!("device = {}", self.device),
            format!("hidden = {}", self.hidden),
            format!("gcn_layers = {}", self.gcn_layers),
            format!("train_embeddings = {}", self.train_embeddings),
            format!("emb_dim = {}", self.emb_dim),
            format!("pos_dim = {}", self.pos_dim),
            format!("pos_cap = {}", self.pos_cap),
            format!("stage2_hidden = {}", self.stage2_hidden),
            format!("threshold = {}", self.threshold),
            format!("selection = {}", self.selection),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lr", self.lr), ("lr_decay", self.lr_decay)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(AsteError::Config(format!("{name} {v} not in (0, 1]")));
            }
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(AsteError::Config("max_epochs and batch_size must be at least 1".into()));
        }
        if self.emb_dim == 0 {
            return Err(AsteError::Config("emb_dim must be positive".into()));
        }
        self.stage1_hyper().validate()?;
        self.stage2_hyper().validate()
    }

    pub fn stage1_hyper(&self) -> Stage1Hyper {
        Stage1Hyper {
            hidden: self.hidden,
            gcn_layers: self.gcn_layers,
            dropout: self.dropout,
            epsilon: self.epsilon,
            train_embeddings: self.train_embeddings,
        }
    }

    pub fn stage2_hyper(&self) -> Stage2Hyper {
        Stage2Hyper {
            pos_dim: self.pos_dim,
            pos_cap: self.pos_cap,
            hidden: self.stage2_hidden,
            dropout: self.dropout,
            threshold: self.threshold,
        }
    }

    /// Step size for epoch `epoch` (0-based).
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        match self.decay_mode {
            DecayMode::InverseTime => self.lr / (1.0 + self.lr_decay * epoch as f64),
            DecayMode::WeightDecay => self.lr,
        }
    }

    /// L2 coefficient added to gradients.
    pub fn weight_decay(&self) -> f64 {
        match self.decay_mode {
            DecayMode::InverseTime => 0.0,
            DecayMode::WeightDecay => self.lr_decay,
        }
    }
}
