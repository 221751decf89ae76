//! The compact twice-fusion network: a five-stage VGG-style backbone, the
//! semantic enhancement cascade (first fusion), per-stage side heads and
//! pseudo pixel-level weighting (second fusion).

mod checkpoint;
mod config;
mod network;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{BackboneConfig, ModelConfig, DEFAULT_C_MID, NUM_STAGES, SEM_CHANNELS, SEM_GROUPS, STRIDES};
pub use network::{Bound, FeatureSet, ForwardOutput, Prediction};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Backbone,
    Sem,
    Head,
    Ppw,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor<T>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvSlot {
    pub weight: usize,
    pub bias: Option<usize>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct SemSlot {
    pub conv: ConvSlot,
    pub gamma: usize,
    pub beta: usize,
}

/// Indices into the parameter list, resolved once at construction.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub backbone: Vec<Vec<ConvSlot>>,
    pub sem: Vec<SemSlot>,
    pub heads: Vec<ConvSlot>,
    pub ppw_channel: usize,
    pub ppw_attention: [ConvSlot; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub non_backbone: usize,
}

impl ParamCount {
    pub fn backbone(&self) -> usize {
        self.total - self.non_backbone
    }
}

/// Network weights plus the configuration that shaped them.
#[derive(Clone, Debug)]
pub struct Ctfn<T> {
    config: ModelConfig,
    params: Vec<Param<T>>,
    layout: Layout,
}

pub type Ctfn32 = Ctfn<f32>;
pub type Ctfn64 = Ctfn<f64>;

struct Builder<'a, T> {
    params: Vec<Param<T>>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn push(&mut self, name: String, group: ParamGroup, value: Tensor<T>) -> usize {
        self.params.push(Param { name, group, value });
        self.params.len() - 1
    }

    /// Kaiming fan-in normal weights and zero bias.
    fn conv(&mut self, name: &str, group: ParamGroup, cout: usize, cin: usize, k: usize, bias: bool) -> ConvSlot {
        let fan_in = (cin * k * k) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid std");
        let shape = [cout, cin, k, k];
        let w = Tensor::from_fn(&shape, |_| T::lit(normal.sample(self.rng)));
        let weight = self.push(format!("{name}.weight"), group, w);
        let bias = bias.then(|| self.push(format!("{name}.bias"), group, Tensor::zeros(&[cout])));
        ConvSlot { weight, bias }
    }
}

impl<T: Scalar> Ctfn<T> {
    /// Builds a model with deterministic seeded initialization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            params: Vec::new(),
            rng: &mut rng,
        };
        let bb = &config.backbone;

        let mut backbone = Vec::with_capacity(NUM_STAGES);
        let mut cin = 3;
        for s in 0..NUM_STAGES {
            let mut convs = Vec::with_capacity(bb.layers[s]);
            for l in 0..bb.layers[s] {
                let name = format!("backbone.stage{}.conv{}", s + 1, l + 1);
                convs.push(b.conv(&name, ParamGroup::Backbone, bb.widths[s], cin, 3, true));
                cin = bb.widths[s];
            }
            backbone.push(convs);
        }

        let sem = (0..NUM_STAGES)
            .map(|s| {
                let name = format!("sem.stage{}", s + 1);
                let conv = b.conv(&format!("{name}.reduce"), ParamGroup::Sem, SEM_CHANNELS, bb.widths[s], 1, true);
                let gamma = b.push(format!("{name}.norm.gamma"), ParamGroup::Sem, Tensor::full(&[SEM_CHANNELS], T::one()));
                let beta = b.push(format!("{name}.norm.beta"), ParamGroup::Sem, Tensor::zeros(&[SEM_CHANNELS]));
                SemSlot { conv, gamma, beta }
            })
            .collect();

        let heads = (0..NUM_STAGES)
            .map(|s| b.conv(&format!("head.stage{}", s + 1), ParamGroup::Head, 1, SEM_CHANNELS, 1, true))
            .collect();

        // Unit channel weights: the fused map starts as the attention-weighted
        // average of the side maps.
        let ppw_channel = b.push(
            "ppw.channel.weight".into(),
            ParamGroup::Ppw,
            Tensor::full(&[1, NUM_STAGES, 1, 1], T::one()),
        );
        let c_mid = config.c_mid;
        let ppw_attention = [
            b.conv("ppw.attention1", ParamGroup::Ppw, c_mid, NUM_STAGES, 3, true),
            b.conv("ppw.attention2", ParamGroup::Ppw, c_mid, c_mid, 3, true),
            b.conv("ppw.attention3", ParamGroup::Ppw, NUM_STAGES, c_mid, 3, true),
        ];

        let params = b.params;
        Ok(Ctfn {
            config,
            params,
            layout: Layout {
                backbone,
                sem,
                heads,
                ppw_channel,
                ppw_attention,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn count_params(&self) -> ParamCount {
        let total = self.params.iter().map(|p| p.value.numel()).sum();
        let backbone: usize = self
            .params
            .iter()
            .filter(|p| p.group == ParamGroup::Backbone)
            .map(|p| p.value.numel())
            .sum();
        ParamCount {
            total,
            non_backbone: total - backbone,
        }
    }

    /// Same weights in another element type.
    pub fn cast<U: Scalar>(&self) -> Ctfn<U> {
        Ctfn {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    group: p.group,
                    value: p.value.cast(),
                })
                .collect(),
            layout: self.layout.clone(),
        }
    }

    /// Replaces every parameter value, checking names and shapes.
    pub fn load_values(&mut self, values: Vec<(String, Tensor<T>)>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::ConfigMismatch {
                expected: format!("{} parameters", self.params.len()),
                found: format!("{} parameters", values.len()),
            });
        }
        for (param, (name, value)) in self.params.iter().zip(&values) {
            if param.name != *name || param.value.shape() != value.shape() {
                return Err(Error::ConfigMismatch {
                    expected: format!("{} {:?}", param.name, param.value.shape()),
                    found: format!("{name} {:?}", value.shape()),
                });
            }
        }
        for (param, (_, value)) in self.params.iter_mut().zip(values) {
            param.value = value;
        }
        Ok(())
    }
}
