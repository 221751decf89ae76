//! Weighted cross-entropy, focal and dynamic focal losses for edge maps.
//!
//! Every loss is a sum over pixels of `-c·w·log(p)` on edge pixels and
//! `-c·w·log(1-p)` on non-edge pixels, where `c` is the class-balance
//! weight from [`LabelMap::class_weights`] and `w` the per-pixel
//! modulating factor:
//!
//! * WCE: `w = 1`
//! * focal: `w = ω = (1-p)^γ` on edges, `p^γ` on non-edges
//! * dynamic focal: `w = ω' = (μ + ε·ω) / (ε + μ)` at epoch `ε`
//!
//! Ignored pixels contribute nothing. The modulating factor is part of the
//! differentiated expression.

mod labels;

pub use labels::{Label, LabelMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::EdgeMap;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Var};

/// Lower bound applied to log arguments.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Wce,
    #[serde(alias = "fl")]
    Focal,
    #[serde(alias = "dfl")]
    DynamicFocal,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wce" => Ok(LossKind::Wce),
            "fl" | "focal" => Ok(LossKind::Focal),
            "dfl" | "dynamic_focal" | "dynamicfocal" => Ok(LossKind::DynamicFocal),
            other => Err(Error::Config(format!("unknown loss kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Edge-class balance multiplier λ.
    pub lambda: f64,
    /// Focal exponent γ.
    pub gamma: f64,
    /// Schedule constant μ of the dynamic focal weight.
    pub mu: f64,
    /// Consensus threshold above which a pixel is an edge.
    pub gt_threshold: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kind: LossKind::DynamicFocal,
            lambda: 1.1,
            gamma: 1.0,
            mu: 0.5,
            gt_threshold: 0.3,
        }
    }
}

impl LossConfig {
    pub fn wce(lambda: f64) -> Self {
        LossConfig {
            kind: LossKind::Wce,
            lambda,
            ..Default::default()
        }
    }

    pub fn focal(lambda: f64, gamma: f64) -> Self {
        LossConfig {
            kind: LossKind::Focal,
            lambda,
            gamma,
            ..Default::default()
        }
    }

    pub fn dynamic_focal(lambda: f64, gamma: f64, mu: f64) -> Self {
        LossConfig {
            kind: LossKind::DynamicFocal,
            lambda,
            gamma,
            mu,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(0.0..1.0).contains(&self.gt_threshold) {
            return Err(Error::Config(format!(
                "gt_threshold must lie in [0, 1), got {}",
                self.gt_threshold
            )));
        }
        Ok(())
    }

    fn schedule<T: Scalar>(&self, epoch: usize) -> Result<Schedule<T>> {
        self.validate()?;
        let gamma = T::lit(self.gamma);
        Ok(match self.kind {
            LossKind::Wce => Schedule::Uniform,
            LossKind::Focal => Schedule::Focal { gamma },
            LossKind::DynamicFocal => {
                if self.mu == 0.0 && epoch == 0 {
                    return Err(Error::InvalidArgument(
                        "dynamic focal weight undefined for mu = 0 at epoch 0".into(),
                    ));
                }
                Schedule::Dynamic {
                    gamma,
                    mu: T::lit(self.mu),
                    epoch: T::from_usize(epoch).unwrap(),
                }
            }
        })
    }
}

/// Focal modulating factor ω.
pub fn focal_weight<T: Scalar>(p: T, is_edge: bool, gamma: T) -> T {
    if is_edge {
        (T::one() - p).powf(gamma)
    } else {
        p.powf(gamma)
    }
}

/// Dynamic focal factor ω' = (μ + ε·ω)/(ε + μ).
pub fn dynamic_weight<T: Scalar>(p: T, is_edge: bool, gamma: T, mu: T, epoch: T) -> T {
    (mu + epoch * focal_weight(p, is_edge, gamma)) / (epoch + mu)
}

#[derive(Clone, Copy)]
enum Schedule<T> {
    Uniform,
    Focal { gamma: T },
    Dynamic { gamma: T, mu: T, epoch: T },
}

impl<T: Scalar> Schedule<T> {
    /// Modulating factor and its derivative with respect to the logit.
    fn weight(&self, p: T, q: T, is_edge: bool) -> (T, T) {
        let focal = |gamma: T| {
            let w = focal_weight(p, is_edge, gamma);
            // dω/dz with dp/dz = p·q
            let slope = if is_edge { -gamma * p * w } else { gamma * q * w };
            (w, slope)
        };
        match *self {
            Schedule::Uniform => (T::one(), T::zero()),
            Schedule::Focal { gamma } => focal(gamma),
            Schedule::Dynamic { gamma, mu, epoch } => {
                let (w, s) = focal(gamma);
                let denom = epoch + mu;
                ((mu + epoch * w) / denom, epoch * s / denom)
            }
        }
    }
}

/// Pixel statistics shared by the probability and logit entry points:
/// `p`, `1-p`, and the floored logs with their logit derivatives.
struct PixelProb<T> {
    p: T,
    q: T,
    log_p: T,
    log_q: T,
    dlog_p: T,
    dlog_q: T,
}

impl<T: Scalar> PixelProb<T> {
    fn from_prob(p: T) -> Self {
        let floor = T::lit(LOG_FLOOR);
        let q = T::one() - p;
        PixelProb {
            p,
            q,
            log_p: p.max(floor).ln(),
            log_q: q.max(floor).ln(),
            dlog_p: q,
            dlog_q: -p,
        }
    }

    fn from_logit(z: T) -> Self {
        let floor = T::lit(LOG_FLOOR).ln();
        let log_p = -softplus(-z);
        let log_q = -softplus(z);
        let p = crate::tensor::sigmoid(z);
        let q = crate::tensor::sigmoid(-z);
        PixelProb {
            p,
            q,
            log_p: log_p.max(floor),
            log_q: log_q.max(floor),
            dlog_p: if log_p > floor { q } else { T::zero() },
            dlog_q: if log_q > floor { -p } else { T::zero() },
        }
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Sum of per-pixel terms and, when `grad` is given, d(loss)/d(logit).
fn accumulate<T: Scalar>(
    pixels: impl Iterator<Item = PixelProb<T>>,
    labels: &LabelMap,
    cfg: &LossConfig,
    epoch: usize,
    mut grad: Option<&mut Vec<T>>,
) -> Result<T> {
    let schedule = cfg.schedule::<T>(epoch)?;
    let (alpha, beta) = labels.class_weights(cfg.lambda);
    let (alpha, beta) = (T::lit(alpha), T::lit(beta));
    let mut total = T::zero();
    for (px, label) in pixels.zip(labels.labels()) {
        let (value, dz) = match label {
            Label::Ignore => (T::zero(), T::zero()),
            Label::Edge => {
                let (w, s) = schedule.weight(px.p, px.q, true);
                (-alpha * w * px.log_p, -alpha * (s * px.log_p + w * px.dlog_p))
            }
            Label::NonEdge => {
                let (w, s) = schedule.weight(px.p, px.q, false);
                (-beta * w * px.log_q, -beta * (s * px.log_q + w * px.dlog_q))
            }
        };
        total += value;
        if let Some(g) = grad.as_deref_mut() {
            g.push(dz);
        }
    }
    Ok(total)
}

fn check_size(n: usize, labels: &LabelMap) -> Result<()> {
    if n != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "loss",
            lhs: vec![n],
            rhs: vec![labels.height(), labels.width()],
        });
    }
    Ok(())
}

/// Loss of a probability map.
pub fn loss_value<T: Scalar>(pred: &EdgeMap<T>, labels: &LabelMap, cfg: &LossConfig, epoch: usize) -> Result<T> {
    check_size(pred.data().len(), labels)?;
    accumulate(
        pred.data().iter().map(|p| PixelProb::from_prob(*p)),
        labels,
        cfg,
        epoch,
        None,
    )
}

pub fn wce<T: Scalar>(pred: &EdgeMap<T>, labels: &LabelMap, lambda: f64) -> Result<T> {
    loss_value(pred, labels, &LossConfig::wce(lambda), 0)
}

pub fn focal<T: Scalar>(pred: &EdgeMap<T>, labels: &LabelMap, lambda: f64, gamma: f64) -> Result<T> {
    loss_value(pred, labels, &LossConfig::focal(lambda, gamma), 0)
}

pub fn dynamic_focal<T: Scalar>(
    pred: &EdgeMap<T>,
    labels: &LabelMap,
    lambda: f64,
    gamma: f64,
    mu: f64,
    epoch: usize,
) -> Result<T> {
    loss_value(pred, labels, &LossConfig::dynamic_focal(lambda, gamma, mu), epoch)
}

/// Records the loss of a `[1,1,H,W]` logit map on the tape, evaluated in
/// log-sigmoid form.
pub fn loss_from_logits<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    labels: &LabelMap,
    cfg: &LossConfig,
    epoch: usize,
) -> Result<Var> {
    let z = tape.value(logits).data();
    check_size(z.len(), labels)?;
    let mut grad = Vec::with_capacity(z.len());
    let value = accumulate(
        z.iter().map(|z| PixelProb::from_logit(*z)),
        labels,
        cfg,
        epoch,
        Some(&mut grad),
    )?;
    tape.reduce("edge_loss", logits, value, grad)
}

/// Deep supervision: the configured loss on every side output plus the
/// fused output, each with weight 1.
pub fn supervision_loss<T: Scalar>(
    tape: &mut Tape<T>,
    side_logits: &[Var],
    fused_logits: Var,
    labels: &LabelMap,
    cfg: &LossConfig,
    epoch: usize,
) -> Result<Var> {
    let mut total = loss_from_logits(tape, fused_logits, labels, cfg, epoch)?;
    for &side in side_logits {
        let term = loss_from_logits(tape, side, labels, cfg, epoch)?;
        total = tape.add(total, term)?;
    }
    Ok(total)
}

/// [`supervision_loss`] evaluated on probability maps.
pub fn supervision_loss_value<T: Scalar>(
    side_probs: &[EdgeMap<T>],
    fused_prob: &EdgeMap<T>,
    labels: &LabelMap,
    cfg: &LossConfig,
    epoch: usize,
) -> Result<T> {
    let mut total = loss_value(fused_prob, labels, cfg, epoch)?;
    for side in side_probs {
        total += loss_value(side, labels, cfg, epoch)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, Tensor};

    fn map(values: &[f64]) -> EdgeMap<f64> {
        EdgeMap::new(1, values.len(), values.to_vec()).unwrap()
    }

    fn labels(ls: &[Label]) -> LabelMap {
        LabelMap::from_labels(1, ls.len(), ls.to_vec())
    }

    #[test]
    fn two_pixel_wce_by_hand() {
        let l = labels(&[Label::Edge, Label::NonEdge]);
        let v = wce(&map(&[0.8, 0.4]), &l, 1.1).unwrap();
        let expected = -0.55 * 0.8f64.ln() - 0.5 * 0.6f64.ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.378141).abs() < 1e-6);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let l = labels(&[Label::Edge, Label::NonEdge, Label::Ignore]);
        let v = wce(&map(&[1.0, 0.0, 0.3]), &l, 1.1).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn lone_edge_pixel_has_no_weight() {
        let v = wce(&map(&[0.5]), &labels(&[Label::Edge]), 1.1).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn focal_weight_examples() {
        assert!((focal_weight(0.9, true, 2.0) - 0.01f64).abs() < 1e-12);
        assert_eq!(focal_weight(0.3, false, 0.0f64), 1.0);
        let w = dynamic_weight(0.8, true, 1.0, 0.5, 1.0f64);
        assert!((w - 0.7 / 1.5).abs() < 1e-12);
        assert!((w - 0.4667).abs() < 5e-5);
    }

    #[test]
    fn focal_with_zero_gamma_is_wce() {
        let l = labels(&[Label::Edge, Label::NonEdge, Label::NonEdge]);
        let p = map(&[0.3, 0.6, 0.1]);
        assert_eq!(focal(&p, &l, 1.1, 0.0).unwrap(), wce(&p, &l, 1.1).unwrap());
    }

    #[test]
    fn dynamic_at_epoch_zero_is_wce() {
        let l = labels(&[Label::Edge, Label::NonEdge, Label::NonEdge]);
        let p = map(&[0.3, 0.6, 0.1]);
        for mu in [1e-9, 0.5, 3.0] {
            assert_eq!(
                dynamic_focal(&p, &l, 1.1, 2.0, mu, 0).unwrap(),
                wce(&p, &l, 1.1).unwrap()
            );
        }
    }

    #[test]
    fn undefined_schedule_rejected() {
        let l = labels(&[Label::Edge, Label::NonEdge]);
        let p = map(&[0.3, 0.6]);
        assert!(dynamic_focal(&p, &l, 1.1, 1.0, 0.0, 0).is_err());
        assert!(dynamic_focal(&p, &l, 1.1, 1.0, 0.0, 1).is_ok());
    }

    #[test]
    fn ignored_pixels_have_no_gradient() {
        let l = labels(&[Label::Edge, Label::Ignore, Label::NonEdge]);
        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(Tensor::new(&[1, 1, 1, 3], vec![0.3, -1.2, 0.7]).unwrap(), true);
        let loss = loss_from_logits(&mut tape, z, &l, &LossConfig::default(), 2).unwrap();
        let g = tape.backward(loss).unwrap().get(&tape, z).unwrap();
        assert_eq!(g.data()[1], 0.0);
        assert!(g.data()[0] != 0.0 && g.data()[2] != 0.0);
    }

    #[test]
    fn logit_and_probability_paths_agree() {
        let l = labels(&[Label::Edge, Label::NonEdge, Label::NonEdge, Label::Edge]);
        let z = [0.4, -2.0, 1.5, -0.3];
        let p: Vec<f64> = z.iter().map(|v| crate::tensor::sigmoid(*v)).collect();
        for cfg in [
            LossConfig::wce(1.1),
            LossConfig::focal(1.1, 2.0),
            LossConfig::dynamic_focal(1.1, 1.0, 0.5),
        ] {
            let mut tape = Tape::<f64>::new();
            let zv = tape.constant(Tensor::new(&[1, 1, 1, 4], z.to_vec()).unwrap());
            let a = loss_from_logits(&mut tape, zv, &l, &cfg, 3).unwrap();
            let b = loss_value(&map(&p), &l, &cfg, 3).unwrap();
            assert!((tape.value(a).item() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_logits_stay_finite() {
        let l = labels(&[Label::Edge, Label::NonEdge]);
        let mut tape = Tape::<f32>::new();
        let z = tape.leaf(Tensor::new(&[1, 1, 1, 2], vec![-200.0, 200.0]).unwrap(), true);
        let loss = loss_from_logits(&mut tape, z, &l, &LossConfig::default(), 1).unwrap();
        let v = tape.value(loss).item();
        assert!(v.is_finite() && v > 0.0);
        let g = tape.backward(loss).unwrap().get(&tape, z).unwrap();
        assert!(g.is_finite());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let l = LabelMap::from_labels(
            4,
            4,
            (0..16)
                .map(|i| match i % 5 {
                    0 | 3 => Label::Edge,
                    4 => Label::Ignore,
                    _ => Label::NonEdge,
                })
                .collect(),
        );
        let z = Tensor::from_fn(&[1, 1, 4, 4], |i| ((i * 7) % 9) as f64 * 0.4 - 1.6);
        for cfg in [
            LossConfig::wce(1.1),
            LossConfig::focal(1.1, 2.0),
            LossConfig::dynamic_focal(1.2, 1.0, 0.5),
        ] {
            let r = grad_check(|t, v| loss_from_logits(t, v, &l, &cfg, 2), &z, 1e-4).unwrap();
            assert!(r.max_rel_error < 1e-6, "{cfg:?}: {r:?}");
        }
    }

    #[test]
    fn supervision_is_sum_of_identical_terms() {
        let l = labels(&[Label::Edge, Label::NonEdge, Label::NonEdge]);
        let p = map(&[0.6, 0.2, 0.5]);
        let cfg = LossConfig::default();
        let single = loss_value(&p, &l, &cfg, 1).unwrap();
        let sides = vec![p.clone(); 5];
        let total = supervision_loss_value(&sides, &p, &l, &cfg, 1).unwrap();
        assert!((total - 6.0 * single).abs() < 1e-12);
        let perfect = map(&[1.0, 0.0, 0.0]);
        assert_eq!(supervision_loss_value(&vec![perfect.clone(); 5], &perfect, &l, &cfg, 1).unwrap(), 0.0);
    }

    #[test]
    fn fused_gradient_unaffected_by_side_terms() {
        let l = labels(&[Label::Edge, Label::NonEdge, Label::NonEdge]);
        let cfg = LossConfig::default();
        let fused = Tensor::new(&[1, 1, 1, 3], vec![0.2, -0.4, 1.0]).unwrap();
        let side = Tensor::new(&[1, 1, 1, 3], vec![-0.7, 0.1, 0.3]).unwrap();

        let mut tape = Tape::<f64>::new();
        let f = tape.leaf(fused.clone(), true);
        let sides: Vec<Var> = (0..5).map(|_| tape.leaf(side.clone(), true)).collect();
        let total = supervision_loss(&mut tape, &sides, f, &l, &cfg, 1).unwrap();
        let g_total = tape.backward(total).unwrap().get(&tape, f).unwrap();

        let mut tape2 = Tape::<f64>::new();
        let f2 = tape2.leaf(fused, true);
        let single = loss_from_logits(&mut tape2, f2, &l, &cfg, 1).unwrap();
        let g_single = tape2.backward(single).unwrap().get(&tape2, f2).unwrap();
        assert_eq!(g_total, g_single);
    }
}
