use super::config::{NUM_STAGES, SEM_GROUPS, STRIDES};
use super::{ConvSlot, Ctfn};
use crate::error::{Error, Result};
use crate::map::EdgeMap;
use crate::scalar::Scalar;
use crate::tensor::{ConvGeometry, Tape, Tensor, Var};

/// Parameters of a model recorded on a tape, in parameter-list order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// The five per-stage features with their strides relative to the input.
#[derive(Clone, Debug)]
pub struct FeatureSet {
    pub features: Vec<Var>,
    pub strides: [usize; NUM_STAGES],
}

/// Logit maps at input resolution.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub side_logits: Vec<Var>,
    pub fused_logits: Var,
}

/// Sigmoid probabilities of all six outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub side: Vec<EdgeMap<T>>,
    pub fused: EdgeMap<T>,
}

/// Smallest input side the five-stage backbone accepts.
pub const MIN_INPUT: usize = 16;

/// Subtracted from every input intensity before the first conv.
pub const INPUT_MEAN: f64 = 0.5;

impl<T: Scalar> Ctfn<T> {
    /// Records every parameter on `tape`.
    pub fn bind(&self, tape: &mut Tape<T>, requires_grad: bool) -> Bound {
        Bound {
            vars: self
                .params
                .iter()
                .map(|p| tape.leaf(p.value.clone(), requires_grad))
                .collect(),
        }
    }

    /// Records the parameters as constants except `index`, which is taken
    /// from `var` (used to differentiate with respect to a single tensor).
    pub fn bind_with(&self, tape: &mut Tape<T>, index: usize, var: Var) -> Result<Bound> {
        if tape.shape(var) != self.params[index].value.shape() {
            return Err(Error::ShapeMismatch {
                op: "bind_with",
                lhs: self.params[index].value.shape().to_vec(),
                rhs: tape.shape(var).to_vec(),
            });
        }
        let vars = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| if i == index { var } else { tape.constant(p.value.clone()) })
            .collect();
        Ok(Bound { vars })
    }

    fn conv(&self, tape: &mut Tape<T>, bound: &Bound, slot: ConvSlot, x: Var, geom: ConvGeometry) -> Result<Var> {
        let bias = slot.bias.map(|b| bound.vars[b]);
        tape.conv2d(x, bound.vars[slot.weight], bias, geom)
    }

    /// Backbone pass: stage outputs at strides 1, 2, 4, 8 and 16 (ceil
    /// pooling), with the configured dilation in stage 5.
    pub fn extract_features(&self, tape: &mut Tape<T>, bound: &Bound, image: Var) -> Result<FeatureSet> {
        let (_, c, h, w) = tape.value(image).dims4("extract_features")?;
        if c != 3 || h < MIN_INPUT || w < MIN_INPUT {
            return Err(Error::InvalidShape {
                op: "extract_features",
                detail: format!(
                    "expected [N, 3, H, W] with H, W >= {MIN_INPUT}, got {:?}",
                    tape.shape(image)
                ),
            });
        }
        let offset = tape.constant(Tensor::full(tape.shape(image), T::lit(-INPUT_MEAN)));
        let mut x = tape.add(image, offset)?;
        let mut features = Vec::with_capacity(NUM_STAGES);
        for (stage, convs) in self.layout.backbone.iter().enumerate() {
            if stage > 0 {
                x = tape.max_pool2(x)?;
            }
            let dilation = if stage == NUM_STAGES - 1 {
                self.config.backbone.dilation
            } else {
                1
            };
            for &slot in convs {
                x = self.conv(tape, bound, slot, x, ConvGeometry::same(3, dilation))?;
                x = tape.relu(x)?;
            }
            features.push(x);
        }
        Ok(FeatureSet {
            features,
            strides: STRIDES,
        })
    }

    /// First fusion, coarse to fine: each stage is reduced to 21 channels
    /// by a 1x1 conv and group-normalized; every finer stage is averaged
    /// with the upsampled fused result of the stage above.
    pub fn sem_fuse(&self, tape: &mut Tape<T>, bound: &Bound, fs: &FeatureSet) -> Result<FeatureSet> {
        let one_by_one = ConvGeometry::same(1, 1);
        let mut fused: Vec<Option<Var>> = vec![None; NUM_STAGES];
        for i in (0..NUM_STAGES).rev() {
            let slot = self.layout.sem[i];
            let reduced = self.conv(tape, bound, slot.conv, fs.features[i], one_by_one)?;
            let t = tape.group_norm(reduced, SEM_GROUPS, bound.vars[slot.gamma], bound.vars[slot.beta])?;
            fused[i] = Some(match fused.get(i + 1).copied().flatten() {
                None => t,
                Some(coarse) => {
                    let (_, _, h, w) = tape.value(t).dims4("sem_fuse")?;
                    let up = tape.bilinear_resize(coarse, h, w)?;
                    let sum = tape.add(up, t)?;
                    tape.scale(sum, T::lit(0.5))?
                }
            });
        }
        Ok(FeatureSet {
            features: fused.into_iter().map(|v| v.expect("every stage fused")).collect(),
            strides: fs.strides,
        })
    }

    /// Per-stage 1x1 heads (21 -> 1) upsampled to `out_h x out_w`.
    pub fn side_outputs(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        fs: &FeatureSet,
        out_h: usize,
        out_w: usize,
    ) -> Result<Vec<Var>> {
        fs.features
            .iter()
            .zip(&self.layout.heads)
            .map(|(&f, &slot)| {
                let logit = self.conv(tape, bound, slot, f, ConvGeometry::same(1, 1))?;
                tape.bilinear_resize(logit, out_h, out_w)
            })
            .collect()
    }

    /// Spatial weights `Ws`: three 3x3 convs with ReLUs, softmax across the
    /// five scale channels at every pixel.
    pub fn ppw_attention(&self, tape: &mut Tape<T>, bound: &Bound, stacked: Var) -> Result<Var> {
        let [a1, a2, a3] = self.layout.ppw_attention;
        let geom = ConvGeometry::same(3, 1);
        let h = self.conv(tape, bound, a1, stacked, geom)?;
        let h = tape.relu(h)?;
        let h = self.conv(tape, bound, a2, h, geom)?;
        let h = tape.relu(h)?;
        let logits = self.conv(tape, bound, a3, h, geom)?;
        tape.softmax(logits, 1)
    }

    /// Second fusion: `P = Σ_i Wc_i · Ws_i ⊙ X_i`, with the channel weights
    /// `Wc` applied by a bias-free 1x1 conv over the attention-weighted maps.
    pub fn ppw_fuse(&self, tape: &mut Tape<T>, bound: &Bound, stacked: Var) -> Result<Var> {
        let (_, l, _, _) = tape.value(stacked).dims4("ppw_fuse")?;
        if l != NUM_STAGES {
            return Err(Error::InvalidShape {
                op: "ppw_fuse",
                detail: format!("expected {NUM_STAGES} stacked maps, got {l}"),
            });
        }
        let spatial = self.ppw_attention(tape, bound, stacked)?;
        let weighted = tape.mul(stacked, spatial)?;
        let channel = bound.vars[self.layout.ppw_channel];
        tape.conv2d(weighted, channel, None, ConvGeometry::same(1, 1))
    }

    pub fn forward(&self, tape: &mut Tape<T>, bound: &Bound, image: Var) -> Result<ForwardOutput> {
        let (_, _, h, w) = tape.value(image).dims4("forward")?;
        let features = self.extract_features(tape, bound, image)?;
        let fused = self.sem_fuse(tape, bound, &features)?;
        let side_logits = self.side_outputs(tape, bound, &fused, h, w)?;
        let stacked = tape.concat_channels(&side_logits)?;
        let fused_logits = self.ppw_fuse(tape, bound, stacked)?;
        Ok(ForwardOutput {
            side_logits,
            fused_logits,
        })
    }

    /// Inference on a `[1,3,H,W]` image: probabilities for the five side
    /// outputs and the fused output.
    pub fn predict(&self, image: &Tensor<T>) -> Result<Prediction<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(image.clone());
        let out = self.forward(&mut tape, &bound, x)?;
        let mut prob = |v: Var| -> Result<EdgeMap<T>> {
            let p = tape.sigmoid(v)?;
            EdgeMap::from_tensor(tape.value(p))
        };
        let side = out.side_logits.iter().map(|v| prob(*v)).collect::<Result<Vec<_>>>()?;
        let fused = prob(out.fused_logits)?;
        Ok(Prediction { side, fused })
    }
}
