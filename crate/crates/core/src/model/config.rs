use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_STAGES: usize = 5;
pub const STRIDES: [usize; NUM_STAGES] = [1, 2, 4, 8, 16];
/// Channel count of every fused feature.
pub const SEM_CHANNELS: usize = 21;
/// Group-norm groups over the 21 fused channels (3 groups of 7).
pub const SEM_GROUPS: usize = 3;
/// Width of the hidden layers of the PPW spatial attention stack.
pub const DEFAULT_C_MID: usize = 16;

/// Per-stage layout of the VGG-style backbone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub preset: String,
    pub widths: [usize; NUM_STAGES],
    pub layers: [usize; NUM_STAGES],
    /// Dilation of the stage-5 convolutions.
    pub dilation: usize,
}

impl BackboneConfig {
    /// VGG16 convolution blocks: 13 layers, widths 64..512.
    pub fn vgg16_shape() -> Self {
        BackboneConfig {
            preset: "vgg16-shape".into(),
            widths: [64, 128, 256, 512, 512],
            layers: [2, 2, 3, 3, 3],
            dilation: 2,
        }
    }

    pub fn tiny() -> Self {
        BackboneConfig {
            preset: "tiny".into(),
            widths: [8, 16, 32, 64, 64],
            layers: [1, 1, 2, 2, 2],
            dilation: 2,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "tiny" => Ok(Self::tiny()),
            "vgg16-shape" | "vgg16" => Ok(Self::vgg16_shape()),
            other => Err(Error::Config(format!("unknown backbone preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilation == 0 {
            return Err(Error::Config("stage-5 dilation must be >= 1".into()));
        }
        if self.widths.contains(&0) || self.layers.contains(&0) {
            return Err(Error::Config(format!(
                "every stage needs at least one layer of non-zero width: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub c_mid: usize,
}

impl ModelConfig {
    pub fn new(backbone: BackboneConfig) -> Self {
        ModelConfig {
            backbone,
            c_mid: DEFAULT_C_MID,
        }
    }

    pub fn tiny() -> Self {
        Self::new(BackboneConfig::tiny())
    }

    pub fn vgg16_shape() -> Self {
        Self::new(BackboneConfig::vgg16_shape())
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.c_mid == 0 {
            return Err(Error::Config("c_mid must be >= 1".into()));
        }
        Ok(())
    }
}
