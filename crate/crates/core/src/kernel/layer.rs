use super::activation::{relu_bwd, relu_fwd};
use super::batchnorm::BatchNorm;
use super::linear::{Linear, LinearParams};
use super::param::{BufferVisitor, Mode, ParamVisitor};
use super::tensor::{Scalar, Tensor2};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Linear(Linear<T>),
    BatchNorm(BatchNorm<T>),
    Relu { input: Option<Tensor2<T>> },
}

impl<T: Scalar> Layer<T> {
    pub fn linear(params: LinearParams<T>) -> Self {
        Layer::Linear(Linear::new(params))
    }

    pub fn batchnorm(dim: usize) -> Self {
        Layer::BatchNorm(BatchNorm::new(dim))
    }

    pub fn relu() -> Self {
        Layer::Relu { input: None }
    }

    fn tag(&self) -> &'static str {
        match self {
            Layer::Linear(_) => "fc",
            Layer::BatchNorm(_) => "bn",
            Layer::Relu { .. } => "relu",
        }
    }

    pub fn forward(&mut self, x: &Tensor2<T>, mode: Mode) -> Result<Tensor2<T>> {
        match self {
            Layer::Linear(l) => l.forward(x),
            Layer::BatchNorm(b) => b.forward(x, mode),
            Layer::Relu { input } => {
                *input = Some(x.clone());
                Ok(relu_fwd(x))
            }
        }
    }

    pub fn infer(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        match self {
            Layer::Linear(l) => l.infer(x),
            Layer::BatchNorm(b) => b.infer(x),
            Layer::Relu { .. } => Ok(relu_fwd(x)),
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor2<T>) -> Result<Tensor2<T>> {
        match self {
            Layer::Linear(l) => l.backward(grad_out),
            Layer::BatchNorm(b) => b.backward(grad_out),
            Layer::Relu { input } => {
                let x = input
                    .take()
                    .ok_or_else(|| Error::Numeric("relu backward without forward".into()))?;
                relu_bwd(&x, grad_out)
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Linear(l) => l.param_count(),
            Layer::BatchNorm(b) => b.param_count(),
            Layer::Relu { .. } => 0,
        }
    }

    pub fn macs(&self) -> usize {
        match self {
            Layer::Linear(l) => l.macs(),
            _ => 0,
        }
    }
}

/// Layers applied in order. Parameter names are `<prefix>.<index>.<fc|bn>.<field>`.
#[derive(Debug, Clone, Default)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn forward(&mut self, x: &Tensor2<T>, mode: Mode) -> Result<Tensor2<T>> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, mode)?;
        }
        Ok(h)
    }

    pub fn infer(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.infer(&h)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad_out: &Tensor2<T>) -> Result<Tensor2<T>> {
        let mut g = grad_out.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            let name = format!("{prefix}.{i}.{}", l.tag());
            match l {
                Layer::Linear(lin) => lin.visit_params(&name, f),
                Layer::BatchNorm(bn) => bn.visit_params(&name, f),
                Layer::Relu { .. } => {}
            }
        }
    }

    pub fn visit_buffers(&mut self, prefix: &str, f: &mut BufferVisitor<'_, T>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            if let Layer::BatchNorm(bn) = l {
                bn.visit_buffers(&format!("{prefix}.{i}.bn"), f);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn macs(&self) -> usize {
        self.layers.iter().map(Layer::macs).sum()
    }
}
