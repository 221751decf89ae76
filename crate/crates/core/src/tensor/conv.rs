use rayon::prelude::*;

use super::tape::Op;
use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stride, zero-padding and dilation of a 2-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvGeometry {
    pub fn same(kernel: usize, dilation: usize) -> Self {
        ConvGeometry {
            stride: 1,
            padding: dilation * (kernel - 1) / 2,
            dilation,
        }
    }

    /// Output length along one axis, or `None` when the kernel does not fit.
    pub fn output_len(&self, input: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = input + 2 * self.padding;
        (padded >= span).then(|| (padded - span) / self.stride + 1)
    }

    /// Range of output positions whose tap `k` lands inside an input of length `input`.
    fn valid_range(&self, k: usize, input: usize, output: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let off = (k * self.dilation) as isize - self.padding as isize;
        // need 0 <= o*s + off < input
        let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
        let hi = (input as isize - 1 - off).div_euclid(s) + 1;
        let hi = hi.clamp(0, output as isize);
        (lo.min(hi) as usize, hi as usize)
    }
}

struct Dims {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn dims(x: &[usize], w: &[usize], geom: &ConvGeometry) -> Result<Dims> {
    let mismatch = || Error::ShapeMismatch {
        op: "conv2d",
        lhs: x.to_vec(),
        rhs: w.to_vec(),
    };
    let ([n, cin, h, wd], [cout, wcin, kh, kw]) = (x, w) else {
        return Err(mismatch());
    };
    if cin != wcin || *kh == 0 || *kw == 0 {
        return Err(mismatch());
    }
    if geom.stride == 0 || geom.dilation == 0 {
        return Err(Error::InvalidArgument(format!("conv2d geometry {geom:?}")));
    }
    let (Some(oh), Some(ow)) = (geom.output_len(*h, *kh), geom.output_len(*wd, *kw)) else {
        return Err(mismatch());
    };
    Ok(Dims {
        n: *n,
        cin: *cin,
        h: *h,
        w: *wd,
        cout: *cout,
        kh: *kh,
        kw: *kw,
        oh,
        ow,
    })
}

pub(crate) fn forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    geom: &ConvGeometry,
) -> Result<Tensor<T>> {
    let d = dims(x.shape(), w.shape(), geom)?;
    if let Some(b) = bias {
        if b.shape() != [d.cout] {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                lhs: vec![d.cout],
                rhs: b.shape().to_vec(),
            });
        }
    }
    let (xd, wd) = (x.data(), w.data());
    let s = geom.stride;
    let mut out = vec![T::zero(); d.n * d.cout * d.oh * d.ow];
    out.par_chunks_mut(d.oh * d.ow)
        .enumerate()
        .for_each(|(plane, o)| {
            let (ni, co) = (plane / d.cout, plane % d.cout);
            if let Some(b) = bias {
                o.fill(b.data()[co]);
            }
            for ci in 0..d.cin {
                let xin = &xd[(ni * d.cin + ci) * d.h * d.w..][..d.h * d.w];
                for ky in 0..d.kh {
                    let (y0, y1) = geom.valid_range(ky, d.h, d.oh);
                    for kx in 0..d.kw {
                        let (x0, x1) = geom.valid_range(kx, d.w, d.ow);
                        let wv = wd[((co * d.cin + ci) * d.kh + ky) * d.kw + kx];
                        let xoff = kx * geom.dilation;
                        for oy in y0..y1 {
                            let iy = oy * s + ky * geom.dilation - geom.padding;
                            let row = &xin[iy * d.w..(iy + 1) * d.w];
                            let orow = &mut o[oy * d.ow..(oy + 1) * d.ow];
                            for ox in x0..x1 {
                                orow[ox] += wv * row[ox * s + xoff - geom.padding];
                            }
                        }
                    }
                }
            }
        });
    Tensor::new(&[d.n, d.cout, d.oh, d.ow], out)
}

pub(crate) fn grad_input<T: Scalar>(
    x_shape: &[usize],
    w: &Tensor<T>,
    g: &[T],
    geom: &ConvGeometry,
) -> Vec<T> {
    let d = dims(x_shape, w.shape(), geom).expect("validated in forward");
    let wd = w.data();
    let s = geom.stride;
    let mut gx = vec![T::zero(); d.n * d.cin * d.h * d.w];
    gx.par_chunks_mut(d.h * d.w)
        .enumerate()
        .for_each(|(plane, gin)| {
            let (ni, ci) = (plane / d.cin, plane % d.cin);
            for co in 0..d.cout {
                let gout = &g[(ni * d.cout + co) * d.oh * d.ow..][..d.oh * d.ow];
                for ky in 0..d.kh {
                    let (y0, y1) = geom.valid_range(ky, d.h, d.oh);
                    for kx in 0..d.kw {
                        let (x0, x1) = geom.valid_range(kx, d.w, d.ow);
                        let wv = wd[((co * d.cin + ci) * d.kh + ky) * d.kw + kx];
                        let xoff = kx * geom.dilation;
                        for oy in y0..y1 {
                            let iy = oy * s + ky * geom.dilation - geom.padding;
                            let grow = &gout[oy * d.ow..(oy + 1) * d.ow];
                            let irow = &mut gin[iy * d.w..(iy + 1) * d.w];
                            for ox in x0..x1 {
                                irow[ox * s + xoff - geom.padding] += wv * grow[ox];
                            }
                        }
                    }
                }
            }
        });
    gx
}

pub(crate) fn grad_weight<T: Scalar>(
    x: &Tensor<T>,
    w_shape: &[usize],
    g: &[T],
    geom: &ConvGeometry,
) -> Vec<T> {
    let d = dims(x.shape(), w_shape, geom).expect("validated in forward");
    let xd = x.data();
    let s = geom.stride;
    let ksize = d.cin * d.kh * d.kw;
    let mut gw = vec![T::zero(); d.cout * ksize];
    gw.par_chunks_mut(ksize).enumerate().for_each(|(co, gwc)| {
        for ni in 0..d.n {
            let gout = &g[(ni * d.cout + co) * d.oh * d.ow..][..d.oh * d.ow];
            for ci in 0..d.cin {
                let xin = &xd[(ni * d.cin + ci) * d.h * d.w..][..d.h * d.w];
                for ky in 0..d.kh {
                    let (y0, y1) = geom.valid_range(ky, d.h, d.oh);
                    for kx in 0..d.kw {
                        let (x0, x1) = geom.valid_range(kx, d.w, d.ow);
                        let xoff = kx * geom.dilation;
                        let mut acc = T::zero();
                        for oy in y0..y1 {
                            let iy = oy * s + ky * geom.dilation - geom.padding;
                            let row = &xin[iy * d.w..(iy + 1) * d.w];
                            let grow = &gout[oy * d.ow..(oy + 1) * d.ow];
                            for ox in x0..x1 {
                                acc += grow[ox] * row[ox * s + xoff - geom.padding];
                            }
                        }
                        gwc[(ci * d.kh + ky) * d.kw + kx] += acc;
                    }
                }
            }
        }
    });
    gw
}

pub(crate) fn grad_bias<T: Scalar>(out_shape: &[usize], g: &[T]) -> Vec<T> {
    let (n, c) = (out_shape[0], out_shape[1]);
    let plane: usize = out_shape[2..].iter().product();
    let mut gb = vec![T::zero(); c];
    for ni in 0..n {
        for (co, b) in gb.iter_mut().enumerate() {
            *b += g[(ni * c + co) * plane..][..plane].iter().copied().sum::<T>();
        }
    }
    gb
}

impl<T: Scalar> Tape<T> {
    /// Zero-padded 2-D cross-correlation of `input [N,Cin,H,W]` with
    /// `weight [Cout,Cin,kh,kw]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let out = forward(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            &geom,
        )?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        let op = Op::Conv2d {
            input,
            weight,
            bias,
            geom,
        };
        self.push("conv2d", out, op, &inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, data).unwrap()
    }

    /// Direct summation over every tap with explicit bounds checks.
    fn oracle(x: &Tensor<f64>, w: &Tensor<f64>, g: ConvGeometry) -> Tensor<f64> {
        let [n, cin, h, wd] = x.shape().try_into().unwrap();
        let [cout, _, kh, kw] = w.shape().try_into().unwrap();
        let oh = (h + 2 * g.padding - g.dilation * (kh - 1) - 1) / g.stride + 1;
        let ow = (wd + 2 * g.padding - g.dilation * (kw - 1) - 1) / g.stride + 1;
        let mut out = Tensor::zeros(&[n, cout, oh, ow]);
        for a in 0..n {
            for co in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ci in 0..cin {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * g.stride + ky * g.dilation) as isize - g.padding as isize;
                                    let ix = (ox * g.stride + kx * g.dilation) as isize - g.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += w.data()[((co * cin + ci) * kh + ky) * kw + kx]
                                        * x.data()[((a * cin + ci) * h + iy as usize) * wd + ix as usize];
                                }
                            }
                        }
                        out.data_mut()[((a * cout + co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn pointwise_kernel_scales() {
        let x = t(&[1, 1, 3, 3], vec![1.0; 9]);
        let w = t(&[1, 1, 1, 1], vec![2.0]);
        let geom = ConvGeometry { stride: 1, padding: 0, dilation: 1 };
        let y = forward(&x, &w, None, &geom).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert!(y.data().iter().all(|v| *v == 2.0));
    }

    #[test]
    fn box_filter_preserves_constant_interior() {
        let x = t(&[1, 1, 5, 5], vec![0.7; 25]);
        let w = t(&[1, 1, 3, 3], vec![1.0 / 9.0; 9]);
        let y = forward(&x, &w, None, &ConvGeometry::same(3, 1)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 5, 5]);
        assert!((y.data()[2 * 5 + 2] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn dilated_delta_scatters_weights() {
        let mut x = Tensor::zeros(&[1, 1, 7, 7]);
        x.data_mut()[3 * 7 + 3] = 1.0;
        let w = Tensor::from_fn(&[1, 1, 3, 3], |i| (i + 1) as f64);
        let geom = ConvGeometry::same(3, 2);
        let y = forward(&x, &w, None, &geom).unwrap();
        assert_eq!(y, oracle(&x, &w, geom));
        // cross-correlation flips: output at (3-2(ky-1), 3-2(kx-1)) holds w[ky,kx]
        for ky in 0..3 {
            for kx in 0..3 {
                let (oy, ox) = (3 + 2 - 2 * ky, 3 + 2 - 2 * kx);
                assert_eq!(y.data()[oy * 7 + ox], w.data()[ky * 3 + kx]);
            }
        }
        assert_eq!(y.data().iter().filter(|v| **v != 0.0).count(), 9);
    }

    #[test]
    fn matches_oracle_with_stride_and_padding() {
        let x = Tensor::from_fn(&[2, 3, 7, 6], |i| ((i * 37) % 11) as f64 - 5.0);
        let w = Tensor::from_fn(&[4, 3, 3, 2], |i| ((i * 13) % 7) as f64 * 0.1 - 0.3);
        for geom in [
            ConvGeometry { stride: 2, padding: 1, dilation: 1 },
            ConvGeometry { stride: 1, padding: 2, dilation: 2 },
            ConvGeometry { stride: 3, padding: 0, dilation: 1 },
        ] {
            let y = forward(&x, &w, None, &geom).unwrap();
            assert!(y.max_abs_diff(&oracle(&x, &w, geom)) < 1e-12, "{geom:?}");
        }
    }

    #[test]
    fn channel_mismatch_names_both_shapes() {
        let x = Tensor::<f32>::zeros(&[1, 3, 4, 4]);
        let w = Tensor::<f32>::zeros(&[2, 4, 3, 3]);
        let msg = forward(&x, &w, None, &ConvGeometry::same(3, 1)).unwrap_err().to_string();
        assert!(msg.contains("[1, 3, 4, 4]") && msg.contains("[2, 4, 3, 3]"), "{msg}");
    }
}
