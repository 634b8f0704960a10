use serde::{Deserialize, Serialize};

use super::param::Param;
use super::tensor::Scalar;
use crate::error::{Error, Result};

/// SGD with heavy-ball momentum and L2 weight decay:
/// `v <- momentum * v + grad + wd * param`, `param <- param - lr * v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        if weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight decay must be nonnegative, got {weight_decay}"
            )));
        }
        Ok(Self {
            lr,
            momentum,
            weight_decay,
        })
    }

    pub fn with_lr(self, lr: f64) -> Result<Self> {
        Self::new(lr, self.momentum, self.weight_decay)
    }

    /// Applies one update and zeroes the gradient.
    pub fn step<T: Scalar>(&self, p: &mut Param<T>) {
        let lr = T::from_f64_lossy(self.lr);
        let mu = T::from_f64_lossy(self.momentum);
        let wd = T::from_f64_lossy(self.weight_decay);
        let value = p.value.data_mut();
        let grad = p.grad.data_mut();
        let vel = p.velocity.data_mut();
        for ((w, g), v) in value.iter_mut().zip(grad.iter_mut()).zip(vel.iter_mut()) {
            *v = mu * *v + *g + wd * *w;
            *w = *w - lr * *v;
            *g = T::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Tensor2;

    fn param(v: f64, g: f64) -> Param<f64> {
        let mut p = Param::new(Tensor2::filled(1, 3, v));
        p.grad.fill(g);
        p
    }

    #[test]
    fn plain_step_moves_by_lr_times_grad() {
        let sgd = Sgd::new(0.1, 0.0, 0.0).unwrap();
        let mut p = param(1.0, 2.0);
        sgd.step(&mut p);
        assert!(p.value.data().iter().all(|&w| (w - 0.8).abs() < 1e-15));
        assert!(p.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_grad_leaves_param_unchanged() {
        let sgd = Sgd::new(0.1, 0.9, 0.0).unwrap();
        let mut p = param(0.7, 0.0);
        sgd.step(&mut p);
        assert!(p.value.data().iter().all(|&w| w == 0.7));
    }

    #[test]
    fn two_momentum_steps_follow_recurrence() {
        let (lr, g) = (0.05, 1.5);
        let sgd = Sgd::new(lr, 0.9, 0.0).unwrap();
        let mut p = param(0.0, g);
        sgd.step(&mut p);
        p.grad.fill(g);
        sgd.step(&mut p);
        // v1 = g, v2 = 0.9 g + g, total = lr g (1 + 1.9)
        let want = -lr * g * (1.0 + 1.9);
        assert!(p.value.data().iter().all(|&w| (w - want).abs() < 1e-14));
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let sgd = Sgd::new(0.1, 0.0, 0.5).unwrap();
        let mut p = param(2.0, 0.0);
        sgd.step(&mut p);
        assert!(p.value.data().iter().all(|&w| (w - 1.9).abs() < 1e-15));
    }

    #[test]
    fn nonpositive_lr_is_rejected() {
        assert!(matches!(Sgd::new(0.0, 0.9, 0.0), Err(Error::Config(_))));
        assert!(matches!(Sgd::new(-1.0, 0.9, 0.0), Err(Error::Config(_))));
    }
}
