use super::param::{BufferVisitor, Mode, Param, ParamVisitor};
use super::tensor::{Scalar, Tensor2};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor2<T>,
    pub running_var: Tensor2<T>,
    pub eps: T,
    pub momentum: T,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Param::new(Tensor2::filled(1, dim, T::one())),
            beta: Param::zeros(1, dim),
            running_mean: Tensor2::zeros(1, dim),
            running_var: Tensor2::filled(1, dim, T::one()),
            eps: T::from_f64_lossy(DEFAULT_EPS),
            momentum: T::from_f64_lossy(DEFAULT_MOMENTUM),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.value.cols()
    }
}

/// Values the backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    mode: Mode,
    x_hat: Tensor2<T>,
    inv_std: Vec<T>,
}

/// Normalizes each column, then scales by gamma and shifts by beta.
///
/// In train mode the batch statistics are used and the running statistics
/// are updated (running variance uses the unbiased estimate). In eval mode
/// only the running statistics are read, so each row is processed
/// independently of the rest of the batch.
pub fn batchnorm_fwd<T: Scalar>(
    x: &Tensor2<T>,
    p: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<(Tensor2<T>, BatchNormCache<T>)> {
    let d = p.dim();
    if x.cols() != d {
        return Err(Error::shape("batchnorm_fwd", x.shape(), (1, d)));
    }
    let n = x.rows();
    let (mean, inv_std) = match mode {
        Mode::Train => {
            if n < 2 {
                return Err(Error::BatchTooSmall { rows: n });
            }
            let nf = T::from_usize(n).unwrap();
            let mut mean = vec![T::zero(); d];
            for r in 0..n {
                for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                    *m = *m + v;
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / nf);
            let mut var = vec![T::zero(); d];
            for r in 0..n {
                for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                    let c = v - m;
                    *s = *s + c * c;
                }
            }
            var.iter_mut().for_each(|v| *v = *v / nf);

            let one = T::one();
            let unbias = nf / (nf - one);
            let rm = p.running_mean.data_mut();
            for (r, &m) in rm.iter_mut().zip(&mean) {
                *r = (one - p.momentum) * *r + p.momentum * m;
            }
            let rv = p.running_var.data_mut();
            for (r, &v) in rv.iter_mut().zip(&var) {
                *r = (one - p.momentum) * *r + p.momentum * v * unbias;
            }
            let inv_std: Vec<T> = var.iter().map(|&v| one / (v + p.eps).sqrt()).collect();
            (mean, inv_std)
        }
        Mode::Eval => {
            let mean = p.running_mean.data().to_vec();
            let inv_std = p
                .running_var
                .data()
                .iter()
                .map(|&v| T::one() / (v + p.eps).sqrt())
                .collect();
            (mean, inv_std)
        }
    };

    let gamma = p.gamma.value.data();
    let beta = p.beta.value.data();
    let mut x_hat = Tensor2::zeros(n, d);
    let mut y = Tensor2::zeros(n, d);
    for r in 0..n {
        let xr = x.row(r);
        let hr = x_hat.row_mut(r);
        for j in 0..d {
            hr[j] = (xr[j] - mean[j]) * inv_std[j];
        }
        let yr = y.row_mut(r);
        for j in 0..d {
            yr[j] = gamma[j] * x_hat.get(r, j) + beta[j];
        }
    }
    Ok((
        y,
        BatchNormCache {
            mode,
            x_hat,
            inv_std,
        },
    ))
}

/// Accumulates gamma/beta gradients and returns the input gradient. In train
/// mode the gradient flows through the batch mean and variance.
pub fn batchnorm_bwd<T: Scalar>(
    grad_out: &Tensor2<T>,
    cache: &BatchNormCache<T>,
    p: &mut BatchNormParams<T>,
) -> Result<Tensor2<T>> {
    let (n, d) = cache.x_hat.shape();
    if grad_out.shape() != (n, d) {
        return Err(Error::shape("batchnorm_bwd", grad_out.shape(), (n, d)));
    }
    let mut sum_g = vec![T::zero(); d];
    let mut sum_gx = vec![T::zero(); d];
    for r in 0..n {
        let g = grad_out.row(r);
        let h = cache.x_hat.row(r);
        for j in 0..d {
            sum_g[j] = sum_g[j] + g[j];
            sum_gx[j] = sum_gx[j] + g[j] * h[j];
        }
    }
    for j in 0..d {
        let gg = p.gamma.grad.data_mut();
        gg[j] = gg[j] + sum_gx[j];
        let bg = p.beta.grad.data_mut();
        bg[j] = bg[j] + sum_g[j];
    }

    let gamma = p.gamma.value.data();
    let mut dx = Tensor2::zeros(n, d);
    match cache.mode {
        Mode::Eval => {
            for r in 0..n {
                let g = grad_out.row(r);
                let o = dx.row_mut(r);
                for j in 0..d {
                    o[j] = g[j] * gamma[j] * cache.inv_std[j];
                }
            }
        }
        Mode::Train => {
            let nf = T::from_usize(n).unwrap();
            for r in 0..n {
                let g = grad_out.row(r);
                let h = cache.x_hat.row(r);
                let o = dx.row_mut(r);
                for j in 0..d {
                    // dL/dx = gamma * inv_std / N * (N g - sum g - x_hat * sum(g x_hat))
                    o[j] = gamma[j] * cache.inv_std[j] / nf
                        * (nf * g[j] - sum_g[j] - h[j] * sum_gx[j]);
                }
            }
        }
    }
    Ok(dx)
}

#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub params: BatchNormParams<T>,
    cache: Option<BatchNormCache<T>>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            params: BatchNormParams::new(dim),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor2<T>, mode: Mode) -> Result<Tensor2<T>> {
        let (y, cache) = batchnorm_fwd(x, &mut self.params, mode)?;
        self.cache = Some(cache);
        Ok(y)
    }

    /// Eval-mode forward that leaves the layer untouched.
    pub fn infer(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        let d = self.params.dim();
        if x.cols() != d {
            return Err(Error::shape("batchnorm_fwd", x.shape(), (1, d)));
        }
        let mean = self.params.running_mean.data();
        let gamma = self.params.gamma.value.data();
        let beta = self.params.beta.value.data();
        let inv_std: Vec<T> = self
            .params
            .running_var
            .data()
            .iter()
            .map(|&v| T::one() / (v + self.params.eps).sqrt())
            .collect();
        let mut y = x.clone();
        for r in 0..y.rows() {
            for (j, v) in y.row_mut(r).iter_mut().enumerate() {
                *v = gamma[j] * ((*v - mean[j]) * inv_std[j]) + beta[j];
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor2<T>) -> Result<Tensor2<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Numeric("batchnorm backward without forward".into()))?;
        batchnorm_bwd(grad_out, &cache, &mut self.params)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&format!("{prefix}.gamma"), &mut self.params.gamma);
        f(&format!("{prefix}.beta"), &mut self.params.beta);
    }

    pub fn visit_buffers(&mut self, prefix: &str, f: &mut BufferVisitor<'_, T>) {
        f(
            &format!("{prefix}.running_mean"),
            &mut self.params.running_mean,
        );
        f(
            &format!("{prefix}.running_var"),
            &mut self.params.running_var,
        );
    }

    pub fn param_count(&self) -> usize {
        2 * self.params.dim()
    }
}
