//! Finite-difference gradient suite over every differentiable op, the loss
//! family and the fusion modules, run in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::loss::{loss_from_logits, supervision_loss, Label, LabelMap, LossConfig};
use crate::model::{Ctfn, FeatureSet, ModelConfig, STRIDES};
use crate::tensor::{grad_check, ConvGeometry, GradCheckReport, Tape, Tensor, Var};

/// Maximum relative error a suite entry may report.
pub const SUITE_TOLERANCE: f64 = 1e-4;
const EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub report: GradCheckReport,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < SUITE_TOLERANCE
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Values bounded away from zero, so ReLU kinks and pooling ties stay
/// further than the difference step.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) { m } else { -m }
    })
}

/// Reduces `y` to a scalar through a fixed random weighting, so every
/// output coordinate contributes a distinct gradient.
fn probe(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&mut rng, tape.shape(y), 1.0);
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

fn labels(rng: &mut ChaCha8Rng, h: usize, w: usize) -> LabelMap {
    let l = (0..h * w)
        .map(|_| match rng.random_range(0..10) {
            0..=1 => Label::Edge,
            2 => Label::Ignore,
            _ => Label::NonEdge,
        })
        .collect();
    LabelMap::from_labels(h, w, l)
}

/// Runs the suite. `full` adds end-to-end checks through the whole network.
pub fn gradient_suite(full: bool) -> Result<Vec<SuiteEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = Vec::new();
    let mut check = |name: &'static str, f: &dyn Fn(&mut Tape<f64>, Var) -> Result<Var>, x: &Tensor<f64>| {
        grad_check(f, x, EPS).map(|report| out.push(SuiteEntry { name, report }))
    };

    let x = random(&mut rng, &[1, 3, 8, 8], 1.0);
    let w = random(&mut rng, &[4, 3, 3, 3], 0.5);
    let b = random(&mut rng, &[4], 0.5);
    let geom = ConvGeometry::same(3, 1);
    let dilated = ConvGeometry {
        stride: 2,
        padding: 2,
        dilation: 2,
    };
    check(
        "conv2d/input",
        &|t, v| {
            let (w, b) = (t.constant(w.clone()), t.constant(b.clone()));
            let y = t.conv2d(v, w, Some(b), geom)?;
            probe(t, y, 1)
        },
        &x,
    )?;
    check(
        "conv2d/weight",
        &|t, v| {
            let (x, b) = (t.constant(x.clone()), t.constant(b.clone()));
            let y = t.conv2d(x, v, Some(b), geom)?;
            probe(t, y, 2)
        },
        &w,
    )?;
    check(
        "conv2d/bias",
        &|t, v| {
            let (x, w) = (t.constant(x.clone()), t.constant(w.clone()));
            let y = t.conv2d(x, w, Some(v), geom)?;
            probe(t, y, 3)
        },
        &b,
    )?;
    check(
        "conv2d/strided-dilated",
        &|t, v| {
            let w = t.constant(w.clone());
            let y = t.conv2d(v, w, None, dilated)?;
            probe(t, y, 4)
        },
        &x,
    )?;

    let g = random(&mut rng, &[1, 6, 5, 5], 2.0);
    let gamma = random(&mut rng, &[6], 1.5);
    let beta = random(&mut rng, &[6], 1.0);
    check(
        "group_norm/input",
        &|t, v| {
            let (ga, be) = (t.constant(gamma.clone()), t.constant(beta.clone()));
            let y = t.group_norm(v, 3, ga, be)?;
            probe(t, y, 5)
        },
        &g,
    )?;
    check(
        "group_norm/gamma",
        &|t, v| {
            let (x, be) = (t.constant(g.clone()), t.constant(beta.clone()));
            let y = t.group_norm(x, 3, v, be)?;
            probe(t, y, 6)
        },
        &gamma,
    )?;
    check(
        "group_norm/beta",
        &|t, v| {
            let (x, ga) = (t.constant(g.clone()), t.constant(gamma.clone()));
            let y = t.group_norm(x, 3, ga, v)?;
            probe(t, y, 7)
        },
        &beta,
    )?;

    let small = random(&mut rng, &[1, 2, 5, 5], 1.0);
    check(
        "bilinear_resize/up",
        &|t, v| {
            let y = t.bilinear_resize(v, 11, 9)?;
            probe(t, y, 8)
        },
        &small,
    )?;
    check(
        "bilinear_resize/down",
        &|t, v| {
            let y = t.bilinear_resize(v, 3, 2)?;
            probe(t, y, 9)
        },
        &small,
    )?;
    let distinct = {
        let mut vals: Vec<f64> = (0..70).map(|i| i as f64 * 0.05).collect();
        for i in (1..vals.len()).rev() {
            vals.swap(i, rng.random_range(0..=i));
        }
        Tensor::new(&[1, 2, 5, 7], vals)?
    };
    check(
        "max_pool2",
        &|t, v| {
            let y = t.max_pool2(v)?;
            probe(t, y, 10)
        },
        &distinct,
    )?;

    let p = away_from_zero(&mut rng, &[1, 4, 4, 4]);
    let q = random(&mut rng, &[1, 4, 4, 4], 1.0);
    check("relu", &|t, v| { let y = t.relu(v)?; probe(t, y, 11) }, &p)?;
    check("sigmoid", &|t, v| { let y = t.sigmoid(v)?; probe(t, y, 12) }, &q)?;
    check("softmax", &|t, v| { let y = t.softmax(v, 1)?; probe(t, y, 13) }, &q)?;
    check(
        "add/mul/scale",
        &|t, v| {
            let c = t.constant(p.clone());
            let s = t.add(v, c)?;
            let m = t.mul(s, v)?;
            let y = t.scale(m, -0.7)?;
            probe(t, y, 14)
        },
        &q,
    )?;
    check(
        "concat_channels",
        &|t, v| {
            let c = t.constant(p.clone());
            let y = t.concat_channels(&[c, v, v])?;
            probe(t, y, 15)
        },
        &q,
    )?;

    let z = random(&mut rng, &[1, 1, 8, 8], 3.0);
    let lab = labels(&mut rng, 8, 8);
    let losses: [(&'static str, LossConfig, usize); 3] = [
        ("loss/wce", LossConfig::wce(1.1), 0),
        ("loss/focal", LossConfig::focal(1.1, 2.0), 0),
        ("loss/dynamic_focal", LossConfig::dynamic_focal(1.1, 1.0, 0.5), 3),
    ];
    for (name, cfg, epoch) in losses {
        check(name, &|t, v| loss_from_logits(t, v, &lab, &cfg, epoch), &z)?;
    }
    let side: Vec<Tensor<f64>> = (0..5).map(|_| random(&mut rng, &[1, 1, 8, 8], 2.0)).collect();
    check(
        "loss/deep_supervision",
        &|t, v| {
            let s: Vec<Var> = side.iter().map(|x| t.constant(x.clone())).collect();
            supervision_loss(t, &s, v, &lab, &LossConfig::default(), 2)
        },
        &z,
    )?;

    let model = Ctfn::<f64>::new(ModelConfig::tiny(), 11)?;
    let widths = model.config().backbone.widths;
    let feats: Vec<Tensor<f64>> = (0..5)
        .map(|i| {
            let s = 16 / STRIDES[i];
            random(&mut rng, &[1, widths[i], s, s], 1.0)
        })
        .collect();
    for (name, stage) in [("sem_fuse/finest", 0usize), ("sem_fuse/coarsest", 4)] {
        let model = &model;
        let feats = &feats;
        check(
            name,
            &move |t, v| {
                let bound = model.bind(t, false);
                let features = feats
                    .iter()
                    .enumerate()
                    .map(|(i, f)| if i == stage { v } else { t.constant(f.clone()) })
                    .collect();
                let fs = model.sem_fuse(t, &bound, &FeatureSet { features, strides: STRIDES })?;
                probe(t, fs.features[0], 16)
            },
            &feats[stage],
        )?;
    }
    let stacked = random(&mut rng, &[1, 5, 8, 8], 2.0);
    check(
        "ppw_fuse",
        &|t, v| {
            let bound = model.bind(t, false);
            let y = model.ppw_fuse(t, &bound, v)?;
            probe(t, y, 17)
        },
        &stacked,
    )?;

    if full {
        let image = Tensor::from_fn(&[1, 3, 16, 16], |_| rng.random_range(0.0..1.0));
        let lab = labels(&mut rng, 16, 16);
        let cfg = LossConfig::default();
        check(
            "network/image",
            &|t, v| {
                let bound = model.bind(t, false);
                let out = model.forward(t, &bound, v)?;
                supervision_loss(t, &out.side_logits, out.fused_logits, &lab, &cfg, 1)
            },
            &image,
        )?;
        for name in ["ppw.channel.weight", "sem.stage3.norm.gamma", "head.stage5.weight"] {
            let index = model
                .params()
                .iter()
                .position(|p| p.name == name)
                .expect("parameter exists");
            let value = model.params()[index].value.clone();
            let entry_name: &'static str = match name {
                "ppw.channel.weight" => "network/ppw.channel.weight",
                "sem.stage3.norm.gamma" => "network/sem.stage3.norm.gamma",
                _ => "network/head.stage5.weight",
            };
            check(
                entry_name,
                &|t, v| {
                    let bound = model.bind_with(t, index, v)?;
                    let x = t.constant(image.clone());
                    let out = model.forward(t, &bound, x)?;
                    supervision_loss(t, &out.side_logits, out.fused_logits, &lab, &cfg, 1)
                },
                &value,
            )?;
        }
    }
    Ok(out)
}
