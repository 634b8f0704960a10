use rand::Rng;

use super::param::{Param, ParamVisitor};
use super::tensor::{Scalar, Tensor2};
use crate::error::{Error, Result};

/// Weights `out x in` and bias `1 x out` of a fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> LinearParams<T> {
    /// Weight and bias drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        Self {
            weight: Param::uniform(out_dim, in_dim, bound, rng),
            bias: Param::uniform(1, out_dim, bound, rng),
        }
    }

    pub fn from_parts(weight: Tensor2<T>, bias: Tensor2<T>) -> Result<Self> {
        if bias.shape() != (1, weight.rows()) {
            return Err(Error::shape("linear params", weight.shape(), bias.shape()));
        }
        Ok(Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.rows()
    }
}

/// `y = x W^T + b`.
pub fn linear_fwd<T: Scalar>(x: &Tensor2<T>, p: &LinearParams<T>) -> Result<Tensor2<T>> {
    if x.cols() != p.in_dim() {
        return Err(Error::shape("linear_fwd", x.shape(), p.weight.shape()));
    }
    let mut y = x.matmul_nt(&p.weight.value)?;
    let b = p.bias.value.data();
    for r in 0..y.rows() {
        for (v, &bb) in y.row_mut(r).iter_mut().zip(b) {
            *v = *v + bb;
        }
    }
    Ok(y)
}

/// Accumulates `grad_W += g^T x`, `grad_b += sum_rows g` and returns `g W`.
pub fn linear_bwd<T: Scalar>(
    x: &Tensor2<T>,
    grad_out: &Tensor2<T>,
    p: &mut LinearParams<T>,
) -> Result<Tensor2<T>> {
    if grad_out.shape() != (x.rows(), p.out_dim()) {
        return Err(Error::shape(
            "linear_bwd",
            grad_out.shape(),
            (x.rows(), p.out_dim()),
        ));
    }
    grad_out.matmul_tn_acc(x, &mut p.weight.grad)?;
    p.bias.grad.add_assign(&grad_out.column_sums())?;
    grad_out.matmul(&p.weight.value)
}

/// Fully connected layer with a cached input for the backward pass.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub params: LinearParams<T>,
    input: Option<Tensor2<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(params: LinearParams<T>) -> Self {
        Self {
            params,
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        let y = linear_fwd(x, &self.params)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        linear_fwd(x, &self.params)
    }

    pub fn backward(&mut self, grad_out: &Tensor2<T>) -> Result<Tensor2<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::Numeric("linear backward without forward".into()))?;
        linear_bwd(&x, grad_out, &mut self.params)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&format!("{prefix}.weight"), &mut self.params.weight);
        f(&format!("{prefix}.bias"), &mut self.params.bias);
    }

    pub fn param_count(&self) -> usize {
        self.params.weight.len() + self.params.bias.len()
    }

    /// Multiply-adds per sample.
    pub fn macs(&self) -> usize {
        self.params.weight.len()
    }
}
