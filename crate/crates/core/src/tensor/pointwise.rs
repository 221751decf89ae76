use super::tape::Op;
use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

impl<T: Scalar> Tape<T> {
    fn map(&mut self, name: &'static str, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Result<Var> {
        let v = self.value(x);
        let out = Tensor::new(v.shape(), v.data().iter().map(|a| f(*a)).collect())?;
        self.push(name, out, op, &[x])
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::new(va.shape(), data)?;
        self.push(name, out, op, &[a, b])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map("relu", x, |a| a.max(T::zero()), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map("sigmoid", x, sigmoid, Op::Sigmoid(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, k: T) -> Result<Var> {
        self.map("scale", x, |a| a * k, Op::Scale(x, k))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let total = v.data().iter().copied().sum();
        let ones = vec![T::one(); v.numel()];
        self.reduce("sum", x, total, ones)
    }

    /// Records a scalar function of `x` whose gradient has already been
    /// computed by the caller.
    pub(crate) fn reduce(&mut self, name: &'static str, x: Var, value: T, local_grad: Vec<T>) -> Result<Var> {
        debug_assert_eq!(local_grad.len(), self.value(x).numel());
        self.push(name, Tensor::scalar(value), Op::Reduce { input: x, local_grad }, &[x])
    }

    /// Concatenates 4-D tensors along the channel axis.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| Error::InvalidShape {
            op: "concat",
            detail: "no inputs".into(),
        })?;
        let (n, _, h, w) = self.value(first).dims4("concat")?;
        let mut total_c = 0;
        for v in inputs {
            let (vn, vc, vh, vw) = self.value(*v).dims4("concat")?;
            if (vn, vh, vw) != (n, h, w) {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: self.shape(first).to_vec(),
                    rhs: self.shape(*v).to_vec(),
                });
            }
            total_c += vc;
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total_c * plane);
        for ni in 0..n {
            for v in inputs {
                let t = self.value(*v);
                let c = t.shape()[1];
                data.extend_from_slice(&t.data()[ni * c * plane..(ni + 1) * c * plane]);
            }
        }
        let out = Tensor::new(&[n, total_c, h, w], data)?;
        self.push("concat", out, Op::ConcatChannels(inputs.to_vec()), inputs)
    }
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
