//! Loop-level reference implementations shared by the integration tests.
#![allow(dead_code)]

mod brute;
#[allow(unused_imports)]
pub use brute::brute_force_matching;

use ctfn::tensor::Tensor;
use ctfn::{Ctfn, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain `[C, H, W]` array.
#[derive(Clone, Debug)]
pub struct Planes {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Planes {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Planes { c, h, w, v: vec![0.0; c * h * w] }
    }

    pub fn from_tensor(t: &Tensor<f64>) -> Self {
        let s = t.shape();
        assert_eq!(s[0], 1, "batch of one");
        Planes { c: s[1], h: s[2], w: s[3], v: t.data().to_vec() }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.v[(c * self.h + y) * self.w + x]
    }

    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.v[(c * self.h + y) * self.w + x]
    }
}

/// Stride-1 "same" convolution, zero padding `dil * (k - 1) / 2`.
pub fn conv(x: &Planes, weight: &[f64], co: usize, k: usize, bias: Option<&[f64]>, dil: usize) -> Planes {
    let pad = (dil * (k - 1) / 2) as isize;
    let mut out = Planes::zeros(co, x.h, x.w);
    for o in 0..co {
        for y in 0..x.h {
            for xx in 0..x.w {
                let mut acc = bias.map_or(0.0, |b| b[o]);
                for ci in 0..x.c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let sy = y as isize + (ky * dil) as isize - pad;
                            let sx = xx as isize + (kx * dil) as isize - pad;
                            if sy < 0 || sx < 0 || sy >= x.h as isize || sx >= x.w as isize {
                                continue;
                            }
                            let wv = weight[((o * x.c + ci) * k + ky) * k + kx];
                            acc += wv * x.at(ci, sy as usize, sx as usize);
                        }
                    }
                }
                *out.at_mut(o, y, xx) = acc;
            }
        }
    }
    out
}

pub fn group_norm(x: &Planes, groups: usize, gamma: &[f64], beta: &[f64]) -> Planes {
    let per = x.c / groups;
    let n = (per * x.h * x.w) as f64;
    let mut out = x.clone();
    for g in 0..groups {
        let chans = g * per..(g + 1) * per;
        let vals = || chans.clone().flat_map(|c| (0..x.h * x.w).map(move |i| (c, i)));
        let mean = vals().map(|(c, i)| x.v[c * x.h * x.w + i]).sum::<f64>() / n;
        let var = vals().map(|(c, i)| (x.v[c * x.h * x.w + i] - mean).powi(2)).sum::<f64>() / n;
        let rstd = 1.0 / (var + 1e-5).sqrt();
        for (c, i) in vals() {
            let idx = c * x.h * x.w + i;
            out.v[idx] = (x.v[idx] - mean) * rstd * gamma[c] + beta[c];
        }
    }
    out
}

/// Bilinear, half-pixel centres, source coordinates clamped at zero.
pub fn resize(x: &Planes, oh: usize, ow: usize) -> Planes {
    let src = |d: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let s = ((d as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Planes::zeros(x.c, oh, ow);
    for c in 0..x.c {
        for y in 0..oh {
            let (y0, y1, fy) = src(y, x.h, oh);
            for xx in 0..ow {
                let (x0, x1, fx) = src(xx, x.w, ow);
                let top = x.at(c, y0, x0) * (1.0 - fx) + x.at(c, y0, x1) * fx;
                let bot = x.at(c, y1, x0) * (1.0 - fx) + x.at(c, y1, x1) * fx;
                *out.at_mut(c, y, xx) = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

fn relu(mut x: Planes) -> Planes {
    x.v.iter_mut().for_each(|v| *v = v.max(0.0));
    x
}

pub fn param<'a>(model: &'a Ctfn<f64>, name: &str) -> &'a [f64] {
    model
        .param(name)
        .unwrap_or_else(|| panic!("no parameter {name}"))
        .value
        .data()
}

/// Coarse-to-fine cascade written straight from its definition:
/// `x'_5 = T_5`, `x'_i = (up(x'_{i+1}) + T_i) / 2`, `T_i = GN(conv1x1(x_i))`.
pub fn sem_oracle(model: &Ctfn<f64>, features: &[Planes]) -> Vec<Planes> {
    let t = |i: usize| {
        let s = format!("sem.stage{}", i + 1);
        let r = conv(
            &features[i],
            param(model, &format!("{s}.reduce.weight")),
            21,
            1,
            Some(param(model, &format!("{s}.reduce.bias"))),
            1,
        );
        group_norm(&r, 3, param(model, &format!("{s}.norm.gamma")), param(model, &format!("{s}.norm.beta")))
    };
    let mut out: Vec<Option<Planes>> = vec![None; 5];
    out[4] = Some(t(4));
    for i in (0..4).rev() {
        let ti = t(i);
        let up = resize(out[i + 1].as_ref().unwrap(), ti.h, ti.w);
        let mut xi = ti.clone();
        for (v, u) in xi.v.iter_mut().zip(&up.v) {
            *v = (*v + u) / 2.0;
        }
        out[i] = Some(xi);
    }
    out.into_iter().map(Option::unwrap).collect()
}

/// Spatial attention weights of the PPW module, softmax over scales.
pub fn ppw_weights(model: &Ctfn<f64>, stacked: &Planes) -> Planes {
    let c_mid = model.config().c_mid;
    let layer = |x: &Planes, n: usize, co: usize| {
        conv(
            x,
            param(model, &format!("ppw.attention{n}.weight")),
            co,
            3,
            Some(param(model, &format!("ppw.attention{n}.bias"))),
            1,
        )
    };
    let h1 = relu(layer(stacked, 1, c_mid));
    let h2 = relu(layer(&h1, 2, c_mid));
    let a = layer(&h2, 3, 5);
    let mut ws = a.clone();
    for y in 0..a.h {
        for x in 0..a.w {
            let m = (0..5).map(|c| a.at(c, y, x)).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..5).map(|c| (a.at(c, y, x) - m).exp()).sum();
            for c in 0..5 {
                *ws.at_mut(c, y, x) = (a.at(c, y, x) - m).exp() / z;
            }
        }
    }
    ws
}

/// `P(x, y) = Σ_i Wc_i · Ws_i(x, y) · X_i(x, y)` as an explicit triple loop.
pub fn ppw_oracle(model: &Ctfn<f64>, stacked: &Planes) -> Planes {
    let ws = ppw_weights(model, stacked);
    let wc = param(model, "ppw.channel.weight");
    let mut p = Planes::zeros(1, stacked.h, stacked.w);
    for i in 0..5 {
        for y in 0..stacked.h {
            for x in 0..stacked.w {
                *p.at_mut(0, y, x) += wc[i] * ws.at(i, y, x) * stacked.at(i, y, x);
            }
        }
    }
    p
}

/// Overwrites every parameter with uniform noise of the given scale.
pub fn randomize(model: &mut Ctfn<f64>, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.params_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Runs the model's PPW fusion on a stacked `[1, 5, H, W]` input.
pub fn ppw_model(model: &Ctfn<f64>, stacked: &Tensor<f64>) -> (Tensor<f64>, Tensor<f64>) {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false);
    let x = tape.constant(stacked.clone());
    let ws = model.ppw_attention(&mut tape, &bound, x).unwrap();
    let p = model.ppw_fuse(&mut tape, &bound, x).unwrap();
    (tape.value(p).clone(), tape.value(ws).clone())
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
