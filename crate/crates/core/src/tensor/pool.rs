use super::tape::Op;
use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// 2x2 stride-2 max pooling in ceil mode: a trailing odd row or column
/// forms a partial window. Returns the output and the flat argmax of
/// each window (first maximum in scan order).
fn forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = x.dims4("max_pool2")?;
    if h < 2 || w < 2 {
        return Err(Error::InvalidShape {
            op: "max_pool2",
            detail: format!("spatial size {h}x{w} below 2x2"),
        });
    }
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let data = x.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for p in 0..n * c {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let (iy, ix) = (2 * oy + dy, 2 * ox + dx);
                    if iy < h && ix < w {
                        let i = base + iy * w + ix;
                        if data[i] > data[best] {
                            best = i;
                        }
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(&[n, c, oh, ow], out)?, argmax))
}

pub(crate) fn backward<T: Scalar>(numel: usize, argmax: &[usize], g: &[T]) -> Vec<T> {
    let mut dx = vec![T::zero(); numel];
    for (&i, &gv) in argmax.iter().zip(g) {
        dx[i] += gv;
    }
    dx
}

impl<T: Scalar> Tape<T> {
    pub fn max_pool2(&mut self, input: Var) -> Result<Var> {
        let (out, argmax) = forward(self.value(input))?;
        self.push("max_pool2", out, Op::MaxPool { input, argmax }, &[input])
    }
}
