use super::tensor::{Scalar, Tensor2};
use crate::error::{Error, Result};

/// Norm below which a row cannot be normalized.
pub const NORM_FLOOR: f64 = 1e-12;

pub fn relu_fwd<T: Scalar>(x: &Tensor2<T>) -> Tensor2<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gates the gradient by `x > 0`; the subgradient at exactly 0 is 0.
pub fn relu_bwd<T: Scalar>(x: &Tensor2<T>, grad_out: &Tensor2<T>) -> Result<Tensor2<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::shape("relu_bwd", x.shape(), grad_out.shape()));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor2::from_vec(x.rows(), x.cols(), data)
}

/// Row-wise unit vectors, together with the row norms needed by the backward pass.
pub fn l2_normalize_fwd<T: Scalar>(x: &Tensor2<T>) -> Result<(Tensor2<T>, Vec<T>)> {
    let floor = T::from_f64_lossy(NORM_FLOOR);
    let mut y = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let norm = x.row(r).iter().map(|&v| v * v).sum::<T>().sqrt();
        if !(norm > floor) {
            return Err(Error::DegenerateEmbedding {
                row: r,
                norm: norm.to_f64().unwrap_or(f64::NAN),
            });
        }
        y.row_mut(r).iter_mut().for_each(|v| *v = *v / norm);
        norms.push(norm);
    }
    Ok((y, norms))
}

/// `dx = (g - y (y . g)) / |x|` per row.
pub fn l2_normalize_bwd<T: Scalar>(
    y: &Tensor2<T>,
    norms: &[T],
    grad_out: &Tensor2<T>,
) -> Result<Tensor2<T>> {
    if y.shape() != grad_out.shape() || norms.len() != y.rows() {
        return Err(Error::shape(
            "l2_normalize_bwd",
            y.shape(),
            grad_out.shape(),
        ));
    }
    let mut dx = grad_out.clone();
    for r in 0..y.rows() {
        let yr = y.row(r);
        let dot: T = yr.iter().zip(grad_out.row(r)).map(|(&a, &b)| a * b).sum();
        let inv = T::one() / norms[r];
        for (o, &yv) in dx.row_mut(r).iter_mut().zip(yr) {
            *o = (*o - yv * dot) * inv;
        }
    }
    Ok(dx)
}
