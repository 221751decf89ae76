use super::tape::Op;
use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `(outer, len, inner)` strides for iterating slices along `axis`.
fn layout(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn forward<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if axis >= x.shape().len() {
        return Err(Error::InvalidShape {
            op: "softmax",
            detail: format!("axis {axis} out of range for {:?}", x.shape()),
        });
    }
    let (outer, len, inner) = layout(x.shape(), axis);
    let data = x.data();
    let mut out = vec![T::zero(); data.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| data[idx(k)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for k in 0..len {
                let e = (data[idx(k)] - max).exp();
                out[idx(k)] = e;
                total += e;
            }
            for k in 0..len {
                out[idx(k)] /= total;
            }
        }
    }
    Tensor::new(x.shape(), out)
}

pub(crate) fn backward<T: Scalar>(y: &Tensor<T>, axis: usize, g: &[T]) -> Vec<T> {
    let (outer, len, inner) = layout(y.shape(), axis);
    let yd = y.data();
    let mut dx = vec![T::zero(); yd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let dot: T = (0..len).map(|k| g[idx(k)] * yd[idx(k)]).sum();
            for k in 0..len {
                dx[idx(k)] = yd[idx(k)] * (g[idx(k)] - dot);
            }
        }
    }
    dx
}

impl<T: Scalar> Tape<T> {
    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&mut self, input: Var, axis: usize) -> Result<Var> {
        let out = forward(self.value(input), axis)?;
        self.push("softmax", out, Op::Softmax { input, axis }, &[input])
    }
}
