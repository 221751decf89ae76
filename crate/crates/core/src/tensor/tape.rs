use super::conv::{self, ConvGeometry};
use super::{norm, pool, resize, softmax, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    GroupNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Resize(Var),
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Softmax {
        input: Var,
        axis: usize,
    },
    ConcatChannels(Vec<Var>),
    /// Scalar output whose gradient with respect to `input` was computed
    /// during the forward pass.
    Reduce {
        input: Var,
        local_grad: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Append-only record of a forward computation. Nodes are stored in
/// creation order, which is a topological order of the graph.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input value. Only leaves with `requires_grad` receive
    /// gradients, and only nodes depending on them are differentiated.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub(crate) fn push(
        &mut self,
        name: &'static str,
        value: Tensor<T>,
        op: Op<T>,
        inputs: &[Var],
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Reverse-mode sweep from a scalar `loss`. Gradients of every node that
    /// depends on a trainable leaf are accumulated across all consumers.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![T::one()]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.backprop_node(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let send = |grads: &mut [Option<Vec<T>>], v: Var, delta: Vec<T>| {
            accumulate(&mut grads[v.0], delta)
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let x = val(*input);
                let w = val(*weight);
                if wants(*input) {
                    send(grads, *input, conv::grad_input(x.shape(), w, g, geom));
                }
                if wants(*weight) {
                    send(grads, *weight, conv::grad_weight(x, w.shape(), g, geom));
                }
                if let Some(b) = bias {
                    if wants(*b) {
                        send(grads, *b, conv::grad_bias(node.value.shape(), g));
                    }
                }
            }
            Op::GroupNorm {
                input,
                gamma,
                beta,
                groups,
                xhat,
                rstd,
            } => {
                let shape = val(*input).shape();
                let gm = val(*gamma).data();
                let (dx, dgamma, dbeta) = norm::backward(shape, *groups, gm, xhat, rstd, g);
                if wants(*input) {
                    send(grads, *input, dx);
                }
                if wants(*gamma) {
                    send(grads, *gamma, dgamma);
                }
                if wants(*beta) {
                    send(grads, *beta, dbeta);
                }
            }
            Op::Resize(input) => {
                if wants(*input) {
                    let dx = resize::backward(val(*input).shape(), node.value.shape(), g);
                    send(grads, *input, dx);
                }
            }
            Op::MaxPool { input, argmax } => {
                if wants(*input) {
                    send(grads, *input, pool::backward(val(*input).numel(), argmax, g));
                }
            }
            Op::Relu(input) => {
                if wants(*input) {
                    let dx = val(*input)
                        .data()
                        .iter()
                        .zip(g)
                        .map(|(x, g)| if *x > T::zero() { *g } else { T::zero() })
                        .collect();
                    send(grads, *input, dx);
                }
            }
            Op::Sigmoid(input) => {
                if wants(*input) {
                    let dx = node
                        .value
                        .data()
                        .iter()
                        .zip(g)
                        .map(|(y, g)| *g * *y * (T::one() - *y))
                        .collect();
                    send(grads, *input, dx);
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    send(grads, *a, g.to_vec());
                }
                if wants(*b) {
                    send(grads, *b, g.to_vec());
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let d = val(*b).data().iter().zip(g).map(|(y, g)| *y * *g).collect();
                    send(grads, *a, d);
                }
                if wants(*b) {
                    let d = val(*a).data().iter().zip(g).map(|(x, g)| *x * *g).collect();
                    send(grads, *b, d);
                }
            }
            Op::Scale(input, k) => {
                if wants(*input) {
                    send(grads, *input, g.iter().map(|g| *g * *k).collect());
                }
            }
            Op::Softmax { input, axis } => {
                if wants(*input) {
                    send(grads, *input, softmax::backward(&node.value, *axis, g));
                }
            }
            Op::ConcatChannels(inputs) => {
                let (n, _, h, w) = node.value.dims4("concat").expect("4-D concat");
                let plane = h * w;
                let total_c = node.value.shape()[1];
                let mut offset = 0;
                for v in inputs {
                    let c = val(*v).shape()[1];
                    if wants(*v) {
                        let mut d = Vec::with_capacity(n * c * plane);
                        for ni in 0..n {
                            let start = (ni * total_c + offset) * plane;
                            d.extend_from_slice(&g[start..start + c * plane]);
                        }
                        send(grads, *v, d);
                    }
                    offset += c;
                }
            }
            Op::Reduce { input, local_grad } => {
                if wants(*input) {
                    let s = g[0];
                    send(grads, *input, local_grad.iter().map(|l| *l * s).collect());
                }
            }
        }
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Vec<T>>, delta: Vec<T>) {
    match slot {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e += d;
            }
        }
        None => *slot = Some(delta),
    }
}

/// Result of [`Tape::backward`]: one optional gradient buffer per node.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `var`, shaped like its value.
    /// `None` when the loss does not depend on `var` through trainable leaves.
    pub fn get(&self, tape: &Tape<T>, var: Var) -> Option<Tensor<T>> {
        let data = self.grads.get(var.0)?.as_ref()?;
        Some(Tensor::new(tape.shape(var), data.clone()).expect("gradient matches value shape"))
    }

    /// Like [`Gradients::get`] but substitutes zeros for a missing gradient.
    pub fn get_or_zeros(&self, tape: &Tape<T>, var: Var) -> Tensor<T> {
        self.get(tape, var)
            .unwrap_or_else(|| Tensor::zeros(tape.shape(var)))
    }
}
