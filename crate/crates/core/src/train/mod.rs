//! SGD training with deep supervision, epoch-indexed loss schedule,
//! per-epoch CSV log and checkpoints.

mod sgd;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use sgd::{sgd_step, Sgd};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalResult};
use crate::loss::{supervision_loss, LabelMap, LossConfig};
use crate::map::EdgeMap;
use crate::model::{save_checkpoint, Ctfn};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Samples whose gradients are averaged per update.
    pub batch: usize,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 2e-4,
            epochs: 20,
            seed: 0,
            batch: 1,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch == 0 {
            return bad("batch must be >= 1".into());
        }
        self.loss.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
    /// Mean loss on the validation set, when one was given.
    pub val_loss: Option<f64>,
}

pub const LOG_HEADER: &str = "epoch,mean_loss,seconds";

/// `epoch,mean_loss,seconds` CSV.
pub fn write_log<W: Write>(out: &mut W, log: &[EpochLog]) -> std::io::Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for e in log {
        writeln!(out, "{},{:.9e},{:.3}", e.epoch, e.mean_loss, e.seconds)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub log: Vec<EpochLog>,
    /// Epoch with the lowest validation (or training) loss.
    pub best_epoch: usize,
    pub best_loss: f64,
    pub final_checkpoint: Option<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
}

/// Where and whether to write artifacts.
#[derive(Clone, Debug, Default)]
pub struct TrainOutput {
    /// Receives `log.csv`, `final.ckpt` and `best.ckpt`.
    pub dir: Option<PathBuf>,
}

struct Prepared<'a, T> {
    sample: &'a Sample<T>,
    batch: Tensor<T>,
    labels: LabelMap,
}

fn prepare<'a, T: Scalar>(samples: &'a [Sample<T>], cfg: &LossConfig) -> Result<Vec<Prepared<'a, T>>> {
    samples
        .iter()
        .map(|s| {
            Ok(Prepared {
                sample: s,
                batch: s.batch(),
                labels: s.labels(cfg.gt_threshold)?,
            })
        })
        .collect()
}

/// Loss and parameter gradients for one sample. Any non-finite value met
/// on the way is reported against the sample.
fn loss_and_grads<T: Scalar>(
    model: &Ctfn<T>,
    p: &Prepared<'_, T>,
    cfg: &LossConfig,
    epoch: usize,
    with_grad: bool,
) -> Result<(f64, Option<Vec<Tensor<T>>>)> {
    step_inner(model, p, cfg, epoch, with_grad).map_err(|e| match e {
        Error::NonFinite(_) => Error::NonFiniteLoss {
            sample: p.sample.id.clone(),
            epoch,
        },
        other => other,
    })
}

fn step_inner<T: Scalar>(
    model: &Ctfn<T>,
    p: &Prepared<'_, T>,
    cfg: &LossConfig,
    epoch: usize,
    with_grad: bool,
) -> Result<(f64, Option<Vec<Tensor<T>>>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, with_grad);
    let x = tape.constant(p.batch.clone());
    let out = model.forward(&mut tape, &bound, x)?;
    let loss = supervision_loss(&mut tape, &out.side_logits, out.fused_logits, &p.labels, cfg, epoch)?;
    let value = tape.value(loss).item().as_f64();
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss {
            sample: p.sample.id.clone(),
            epoch,
        });
    }
    if !with_grad {
        return Ok((value, None));
    }
    let grads = tape.backward(loss)?;
    let g = bound.vars().iter().map(|v| grads.get_or_zeros(&tape, *v)).collect();
    Ok((value, Some(g)))
}

fn write_artifact<T: Scalar>(model: &Ctfn<T>, dir: &Path, name: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    save_checkpoint(model, &path)?;
    Ok(path)
}

fn save_log(dir: &Path, log: &[EpochLog]) -> Result<()> {
    let path = dir.join("log.csv");
    let mut buf = Vec::new();
    write_log(&mut buf, log).map_err(|e| Error::io(&path, e))?;
    std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))
}

/// Trains `model` in place. Epoch `e` (from 0) is passed to the loss, so a
/// dynamic focal loss is plain weighted cross-entropy during epoch 0.
/// Sample order is reshuffled every epoch from `cfg.seed`. `on_epoch` sees
/// each log row as soon as it is complete.
pub fn train<T: Scalar>(
    model: &mut Ctfn<T>,
    train_set: &[Sample<T>],
    val_set: Option<&[Sample<T>]>,
    cfg: &TrainConfig,
    output: &TrainOutput,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if let Some(dir) = &output.dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let train_data = prepare(train_set, &cfg.loss)?;
    let val_data = val_set.map(|v| prepare(v, &cfg.loss)).transpose()?;
    let mut opt = Sgd::new(model.params(), cfg.lr, cfg.momentum, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64)> = None;
    let mut best_checkpoint = None;

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut acc: Option<Vec<Tensor<T>>> = None;
            for &i in chunk {
                let (value, grads) = loss_and_grads(model, &train_data[i], &cfg.loss, epoch, true)?;
                total += value;
                let grads = grads.expect("gradients requested");
                acc = Some(match acc {
                    None => grads,
                    Some(mut a) => {
                        for (a, g) in a.iter_mut().zip(&grads) {
                            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                                *x += *y;
                            }
                        }
                        a
                    }
                });
            }
            let mut grads = acc.expect("non-empty chunk");
            if chunk.len() > 1 {
                let inv = T::lit(1.0 / chunk.len() as f64);
                grads.iter_mut().flat_map(|g| g.data_mut()).for_each(|x| *x *= inv);
            }
            opt.step(model.params_mut(), &grads)?;
            if model.params().iter().any(|p| !p.value.is_finite()) {
                let last = chunk[chunk.len() - 1];
                return Err(Error::NonFiniteLoss {
                    sample: train_data[last].sample.id.clone(),
                    epoch,
                });
            }
        }
        let mean_loss = total / train_data.len() as f64;
        let val_loss = match &val_data {
            Some(v) if !v.is_empty() => {
                let mut sum = 0.0;
                for p in v {
                    sum += loss_and_grads(model, p, &cfg.loss, epoch, false)?.0;
                }
                Some(sum / v.len() as f64)
            }
            _ => None,
        };
        let row = EpochLog {
            epoch,
            mean_loss,
            seconds: start.elapsed().as_secs_f64(),
            val_loss,
        };
        let score = val_loss.unwrap_or(mean_loss);
        let improved = best.is_none_or(|(_, b)| score < b);
        if improved {
            best = Some((epoch, score));
        }
        if let Some(dir) = &output.dir {
            if improved {
                best_checkpoint = Some(write_artifact(model, dir, "best.ckpt")?);
            }
        }
        log.push(row);
        if let Some(dir) = &output.dir {
            save_log(dir, &log)?;
        }
        on_epoch(&row);
    }

    let final_checkpoint = match &output.dir {
        Some(dir) => Some(write_artifact(model, dir, "final.ckpt")?),
        None => None,
    };
    let (best_epoch, best_loss) = best.expect("at least one epoch");
    Ok(TrainReport {
        log,
        best_epoch,
        best_loss,
        final_checkpoint,
        best_checkpoint,
    })
}

/// Fused edge maps for every sample, in order.
pub fn predict_all<T: Scalar>(model: &Ctfn<T>, samples: &[Sample<T>]) -> Result<Vec<EdgeMap<T>>> {
    samples.iter().map(|s| Ok(model.predict(&s.batch())?.fused)).collect()
}

/// Benchmarks the fused output on `samples` with NMS thinning.
pub fn evaluate_model<T: Scalar>(
    model: &Ctfn<T>,
    samples: &[Sample<T>],
    tol_frac: f64,
    thresholds: &[f64],
) -> Result<EvalResult> {
    let preds = predict_all(model, samples)?;
    let gts: Vec<_> = samples.iter().map(Sample::boundaries).collect();
    evaluate(&preds, &gts, tol_frac, thresholds, true)
}
