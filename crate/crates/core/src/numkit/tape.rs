//! Reverse-mode gradients over a linear tape.
//!
//! The tape is rebuilt for every loss evaluation. Each recorded node owns its
//! forward value; `backward` walks the nodes once in reverse order and
//! accumulates adjoints. Nodes that depend on no parameter are never visited.

use super::kernel::{pow_grad, silu, silu_grad, Kernel};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Matmul(Var, Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    BroadcastRows(Var),
    BroadcastCols(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Silu(Var),
    Sin(Var),
    Cos(Var),
    Square(Var),
    Sqrt(Var),
    Powf(Var, f64),
    Recip(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<usize>,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct GradTape {
    nodes: Vec<Node>,
    n_params: usize,
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a trainable leaf; its gradient is reported by [`GradTape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        let id = self.n_params;
        self.n_params += 1;
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            param: Some(id),
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let tracked = match &op {
            Op::Leaf => false,
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Matmul(a, b) => {
                self.tracked(*a) || self.tracked(*b)
            }
            Op::Concat(parts) => parts.iter().any(|p| self.tracked(*p)),
            Op::Slice { src: a, .. }
            | Op::Scale(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumRows(a)
            | Op::BroadcastRows(a)
            | Op::BroadcastCols(a)
            | Op::Silu(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::Square(a)
            | Op::Sqrt(a)
            | Op::Powf(a, _)
            | Op::Recip(a) => self.tracked(*a),
        };
        self.nodes.push(Node {
            value,
            op,
            param: None,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        self.push(value, op)
    }

    /// Gradients of the scalar `loss` with respect to every registered parameter,
    /// in registration order. Untouched parameters get exact zeros.
    pub fn backward(&self, loss: Var) -> Result<Vec<Tensor>> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(Error::contract(format!(
                "gradient requires a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(loss_value.shape(), 1.0));
        let mut params: Vec<Option<Tensor>> = vec![None; self.n_params];

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if let Some(p) = node.param {
                params[p] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }

        Ok(params
            .into_iter()
            .zip(self.nodes.iter().filter(|n| n.param.is_some()))
            .map(|(g, n)| g.unwrap_or_else(|| Tensor::zeros(n.value.shape())))
            .collect())
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, contribution: Tensor| {
            if !self.tracked(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contribution),
                slot @ None => *slot = Some(contribution),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.tracked(*a) {
                    acc(*a, g.mul(val(*b)));
                }
                if self.tracked(*b) {
                    acc(*b, g.mul(val(*a)));
                }
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s)),
            Op::Matmul(a, b) => {
                if self.tracked(*a) {
                    acc(*a, g.matmul_nt(val(*b)));
                }
                if self.tracked(*b) {
                    acc(*b, val(*a).matmul_tn(g));
                }
            }
            Op::Sum(a) => acc(*a, Tensor::full(val(*a).shape(), g.item())),
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                acc(*a, Tensor::full(val(*a).shape(), g.item() / n));
            }
            Op::SumRows(a) => {
                let cols = val(*a).cols();
                acc(*a, g.broadcast_cols(cols));
            }
            Op::BroadcastRows(a) => acc(*a, g.sum_cols()),
            Op::BroadcastCols(a) => acc(*a, g.sum_rows()),
            Op::Concat(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = val(*p).cols();
                    if self.tracked(*p) {
                        acc(*p, g.slice_cols(start, w));
                    }
                    start += w;
                }
            }
            Op::Slice { src, start } => {
                let width = val(*src).cols();
                acc(*src, g.pad_cols(*start, width));
            }
            Op::Silu(a) => acc(*a, g.zip_map(val(*a), |g, x| g * silu_grad(x))),
            Op::Sin(a) => acc(*a, g.zip_map(val(*a), |g, x| g * x.cos())),
            Op::Cos(a) => acc(*a, g.zip_map(val(*a), |g, x| -g * x.sin())),
            Op::Square(a) => acc(*a, g.zip_map(val(*a), |g, x| 2.0 * g * x)),
            Op::Sqrt(a) => acc(*a, g.zip_map(val(*a), |g, x| g * pow_grad(x, 0.5))),
            Op::Powf(a, p) => acc(*a, g.zip_map(val(*a), |g, x| g * pow_grad(x, *p))),
            Op::Recip(a) => acc(*a, g.zip_map(val(*a), |g, x| -g / (x * x))),
        }
    }
}

impl Kernel for GradTape {
    type Value = Var;

    fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }
    fn primal<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        self.value(*v)
    }
    fn add(&mut self, a: &Var, b: &Var) -> Var {
        let v = self.value(*a).add(self.value(*b));
        self.push(v, Op::Add(*a, *b))
    }
    fn sub(&mut self, a: &Var, b: &Var) -> Var {
        let v = self.value(*a).sub(self.value(*b));
        self.push(v, Op::Sub(*a, *b))
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        let v = self.value(*a).mul(self.value(*b));
        self.push(v, Op::Mul(*a, *b))
    }
    fn scale(&mut self, a: &Var, s: f64) -> Var {
        let v = self.value(*a).scale(s);
        self.push(v, Op::Scale(*a, s))
    }
    fn matmul(&mut self, a: &Var, b: &Var) -> Var {
        let v = self.value(*a).matmul(self.value(*b));
        self.push(v, Op::Matmul(*a, *b))
    }
    fn sum(&mut self, a: &Var) -> Var {
        let v = Tensor::scalar(self.value(*a).sum());
        self.push(v, Op::Sum(*a))
    }
    fn mean(&mut self, a: &Var) -> Var {
        let x = self.value(*a);
        let v = Tensor::scalar(x.sum() / x.len() as f64);
        self.push(v, Op::Mean(*a))
    }
    fn sum_rows(&mut self, a: &Var) -> Var {
        let v = self.value(*a).sum_rows();
        self.push(v, Op::SumRows(*a))
    }
    fn broadcast_rows(&mut self, a: &Var, rows: usize) -> Var {
        let v = self.value(*a).broadcast_rows(rows);
        self.push(v, Op::BroadcastRows(*a))
    }
    fn broadcast_cols(&mut self, a: &Var, cols: usize) -> Var {
        let v = self.value(*a).broadcast_cols(cols);
        self.push(v, Op::BroadcastCols(*a))
    }
    fn concat_cols(&mut self, parts: &[&Var]) -> Var {
        let values: Vec<&Tensor> = parts.iter().map(|p| self.value(**p)).collect();
        let v = Tensor::concat_cols(&values);
        self.push(v, Op::Concat(parts.iter().map(|p| **p).collect()))
    }
    fn slice_cols(&mut self, a: &Var, start: usize, len: usize) -> Var {
        let v = self.value(*a).slice_cols(start, len);
        self.push(v, Op::Slice { src: *a, start })
    }
    fn silu(&mut self, a: &Var) -> Var {
        self.unary(*a, silu, Op::Silu(*a))
    }
    fn sin(&mut self, a: &Var) -> Var {
        self.unary(*a, f64::sin, Op::Sin(*a))
    }
    fn cos(&mut self, a: &Var) -> Var {
        self.unary(*a, f64::cos, Op::Cos(*a))
    }
    fn square(&mut self, a: &Var) -> Var {
        self.unary(*a, |x| x * x, Op::Square(*a))
    }
    fn sqrt(&mut self, a: &Var) -> Var {
        self.unary(*a, f64::sqrt, Op::Sqrt(*a))
    }
    fn powf(&mut self, a: &Var, p: f64) -> Var {
        self.unary(*a, |x| x.powf(p), Op::Powf(*a, p))
    }
    fn recip(&mut self, a: &Var) -> Var {
        self.unary(*a, |x| 1.0 / x, Op::Recip(*a))
    }
    fn stop_gradient(&mut self, a: &Var) -> Var {
        let v = self.value(*a).clone();
        self.push(v, Op::Leaf)
    }
}

/// Evaluates `loss_fn` on a fresh tape with `params` registered as trainable
/// leaves and returns the loss value together with `∂loss/∂p` for every `p`.
pub fn grad<F>(params: &[Tensor], loss_fn: F) -> Result<(f64, Vec<Tensor>)>
where
    F: FnOnce(&mut GradTape, &[Var]) -> Result<Var>,
{
    let mut tape = GradTape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = loss_fn(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item(), grads))
}
