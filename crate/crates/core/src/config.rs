//! Run configuration file: `key = value` lines (TOML syntax) under
//! `[backbone]`, `[loss]`, `[train]` and `[eval]`. Unknown sections or keys
//! are rejected; every key is optional.
//!
//! ```toml
//! [backbone]
//! preset = "tiny"        # or "vgg16-shape"
//! c_mid = 16
//!
//! [loss]
//! kind = "dfl"           # wce | fl | dfl
//! gamma = 1.0
//! mu = 0.5
//!
//! [train]
//! lr = 1e-3
//! epochs = 20
//!
//! [eval]
//! tol = 0.0075
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::{uniform_thresholds, DEFAULT_TOLERANCE};
use crate::loss::LossConfig;
use crate::model::{BackboneConfig, ModelConfig, DEFAULT_C_MID, NUM_STAGES};
use crate::train::TrainConfig;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackboneSection {
    preset: Option<String>,
    widths: Option<[usize; NUM_STAGES]>,
    layers: Option<[usize; NUM_STAGES]>,
    dilation: Option<usize>,
    c_mid: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    lr: Option<f64>,
    momentum: Option<f64>,
    weight_decay: Option<f64>,
    epochs: Option<usize>,
    seed: Option<u64>,
    batch: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    tol: Option<f64>,
    thresholds: Option<usize>,
    nms: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    backbone: BackboneSection,
    #[serde(default)]
    loss: LossConfig,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    eval: EvalSection,
}

/// Benchmark settings.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Matching radius as a fraction of the image diagonal.
    pub tol: f64,
    pub thresholds: Vec<f64>,
    pub nms: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tol: DEFAULT_TOLERANCE,
            thresholds: uniform_thresholds(99),
            nms: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::tiny(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let file: FileConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let b = file.backbone;
        let mut backbone = BackboneConfig::preset(b.preset.as_deref().unwrap_or("tiny"))?;
        if let Some(w) = b.widths {
            backbone.widths = w;
        }
        if let Some(l) = b.layers {
            backbone.layers = l;
        }
        if let Some(d) = b.dilation {
            backbone.dilation = d;
        }
        let model = ModelConfig {
            backbone,
            c_mid: b.c_mid.unwrap_or(DEFAULT_C_MID),
        };
        let d = TrainConfig::default();
        let t = file.train;
        let train = TrainConfig {
            lr: t.lr.unwrap_or(d.lr),
            momentum: t.momentum.unwrap_or(d.momentum),
            weight_decay: t.weight_decay.unwrap_or(d.weight_decay),
            epochs: t.epochs.unwrap_or(d.epochs),
            seed: t.seed.unwrap_or(d.seed),
            batch: t.batch.unwrap_or(d.batch),
            loss: file.loss,
        };
        let e = file.eval;
        let eval = EvalConfig {
            tol: e.tol.unwrap_or(DEFAULT_TOLERANCE),
            thresholds: uniform_thresholds(e.thresholds.unwrap_or(99)),
            nms: e.nms.unwrap_or(true),
        };
        let cfg = RunConfig { model, train, eval };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(self.eval.tol > 0.0 && self.eval.tol < 1.0) {
            return Err(Error::Config(format!("eval tol must lie in (0, 1), got {}", self.eval.tol)));
        }
        if self.eval.thresholds.is_empty() {
            return Err(Error::Config("eval needs at least one threshold".into()));
        }
        Ok(())
    }
}
