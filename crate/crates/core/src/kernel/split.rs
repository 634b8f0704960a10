use super::tensor::{Scalar, Tensor2};
use crate::error::{Error, Result};

/// Splits columns into `parts` contiguous chunks of equal width.
pub fn split_cols<T: Scalar>(x: &Tensor2<T>, parts: usize) -> Result<Vec<Tensor2<T>>> {
    if parts == 0 || x.cols() % parts != 0 {
        return Err(Error::Config(format!(
            "cannot split {} columns into {parts} equal paths",
            x.cols()
        )));
    }
    let w = x.cols() / parts;
    let mut out: Vec<Vec<T>> = (0..parts)
        .map(|_| Vec::with_capacity(x.rows() * w))
        .collect();
    for r in 0..x.rows() {
        for (p, chunk) in x.row(r).chunks_exact(w).enumerate() {
            out[p].extend_from_slice(chunk);
        }
    }
    out.into_iter()
        .map(|d| Tensor2::from_vec(x.rows(), w, d))
        .collect()
}

/// Concatenates column blocks that share a row count.
pub fn concat_cols<T: Scalar>(parts: &[Tensor2<T>]) -> Result<Tensor2<T>> {
    let rows = parts.first().map_or(0, Tensor2::rows);
    for p in parts {
        if p.rows() != rows {
            return Err(Error::shape("concat", (rows, parts[0].cols()), p.shape()));
        }
    }
    let cols: usize = parts.iter().map(Tensor2::cols).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for p in parts {
            data.extend_from_slice(p.row(r));
        }
    }
    Tensor2::from_vec(rows, cols, data)
}

pub fn split4<T: Scalar>(x: &Tensor2<T>) -> Result<Vec<Tensor2<T>>> {
    split_cols(x, 4)
}

pub fn concat4<T: Scalar>(parts: &[Tensor2<T>]) -> Result<Tensor2<T>> {
    if parts.len() != 4 {
        return Err(Error::Config(format!(
            "concat4 needs 4 parts, got {}",
            parts.len()
        )));
    }
    concat_cols(parts)
}

/// The gradient of a split is the concatenation of the chunk gradients.
pub fn split_bwd<T: Scalar>(grads: &[Tensor2<T>]) -> Result<Tensor2<T>> {
    concat_cols(grads)
}

/// The gradient of a concatenation is the same split of the output gradient.
pub fn concat_bwd<T: Scalar>(grad_out: &Tensor2<T>, parts: usize) -> Result<Vec<Tensor2<T>>> {
    split_cols(grad_out, parts)
}
