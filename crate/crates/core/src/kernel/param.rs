use rand::Rng;

use super::tensor::{Scalar, Tensor2};

/// A learnable tensor with its gradient accumulator and momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor2<T>,
    pub grad: Tensor2<T>,
    pub velocity: Tensor2<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor2<T>) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Tensor2::zeros(r, c),
            velocity: Tensor2::zeros(r, c),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Tensor2::zeros(rows, cols))
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| T::from_f64_lossy(rng.random_range(-bound..=bound)))
            .collect();
        Self::new(Tensor2::from_vec(rows, cols, data).expect("sized by construction"))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// Forward-pass mode of layers carrying batch statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

/// Non-learnable state a layer must persist (batchnorm running statistics).
pub type BufferVisitor<'a, T> = dyn FnMut(&str, &mut Tensor2<T>) + 'a;
pub type ParamVisitor<'a, T> = dyn FnMut(&str, &mut Param<T>) + 'a;
