use crate::error::{Error, Result};
use crate::model::Param;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One momentum SGD update with L2 weight decay folded into the gradient:
/// `v = m*v + (g + wd*p)`, `p -= lr*v`.
pub fn sgd_step<T: Scalar>(
    param: &mut Tensor<T>,
    velocity: &mut Tensor<T>,
    grad: &Tensor<T>,
    lr: T,
    momentum: T,
    weight_decay: T,
) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != velocity.shape() {
        return Err(Error::ShapeMismatch {
            op: "sgd_step",
            lhs: param.shape().to_vec(),
            rhs: grad.shape().to_vec(),
        });
    }
    for ((p, v), g) in param.data_mut().iter_mut().zip(velocity.data_mut()).zip(grad.data()) {
        *v = momentum * *v + (*g + weight_decay * *p);
        *p -= lr * *v;
    }
    Ok(())
}

/// Momentum SGD with one zero-initialised velocity buffer per parameter.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub lr: T,
    pub momentum: T,
    pub weight_decay: T,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(params: &[Param<T>], lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            lr: T::lit(lr),
            momentum: T::lit(momentum),
            weight_decay: T::lit(weight_decay),
            velocity: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [Param<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameters, {} velocity buffers, {} gradients",
                params.len(),
                self.velocity.len(),
                grads.len()
            )));
        }
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            sgd_step(&mut p.value, v, g, self.lr, self.momentum, self.weight_decay)?;
        }
        Ok(())
    }
}
