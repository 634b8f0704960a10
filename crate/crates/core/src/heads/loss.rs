//! Similarity, dual classification and KL losses, all reduced by batch mean.

use serde::{Deserialize, Serialize};

use super::head::{Head, HeadParams};
use crate::error::{Error, Result};
use crate::kernel::{Scalar, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 0.25,
        }
    }
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            lambda3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "weights.{name} must be nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn needs_head(&self) -> bool {
        self.lambda2 > 0.0 || self.lambda3 > 0.0
    }
}

/// A scalar loss over a query/gallery pair with gradients for both branches.
#[derive(Debug, Clone)]
pub struct PairLoss<T> {
    pub value: T,
    pub grad_q: Tensor2<T>,
    pub grad_g: Tensor2<T>,
}

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor2<T>, b: &Tensor2<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    if a.rows() == 0 {
        return Err(Error::Config(format!("{op}: empty batch")));
    }
    Ok(())
}

fn batch_size<T: Scalar>(n: usize) -> T {
    T::from_usize(n).unwrap()
}

/// Mean over rows of `|fq_i - fg_i|_2`. The subgradient at a zero
/// difference is 0.
pub fn sim_loss<T: Scalar>(fq: &Tensor2<T>, fg: &Tensor2<T>) -> Result<PairLoss<T>> {
    same_shape("sim_loss", fq, fg)?;
    let n = batch_size::<T>(fq.rows());
    let mut grad_q = Tensor2::zeros(fq.rows(), fq.cols());
    let mut total = T::zero();
    for r in 0..fq.rows() {
        let norm = fq
            .row(r)
            .iter()
            .zip(fg.row(r))
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt();
        total = total + norm;
        if norm > T::zero() {
            let scale = T::one() / (norm * n);
            for ((o, &a), &b) in grad_q.row_mut(r).iter_mut().zip(fq.row(r)).zip(fg.row(r)) {
                *o = (a - b) * scale;
            }
        }
    }
    let grad_g = grad_q.map(|v| -v);
    Ok(PairLoss {
        value: total / n,
        grad_q,
        grad_g,
    })
}

/// Row-wise `log softmax` via log-sum-exp.
pub fn log_softmax<T: Scalar>(logits: &Tensor2<T>) -> Tensor2<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        row.iter_mut().for_each(|v| *v = *v - lse);
    }
    out
}

/// Mean cross-entropy against one-hot targets mixed with `smoothing / C`
/// uniform mass. Returns the value and the gradient w.r.t. the logits.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor2<T>,
    labels: &[usize],
    smoothing: f64,
) -> Result<(T, Tensor2<T>)> {
    let (rows, classes) = logits.shape();
    if labels.len() != rows {
        return Err(Error::shape(
            "cross_entropy",
            logits.shape(),
            (labels.len(), 1),
        ));
    }
    if rows == 0 {
        return Err(Error::Config("cross_entropy: empty batch".into()));
    }
    let n = batch_size::<T>(rows);
    let eps = T::from_f64_lossy(smoothing);
    let off = eps / T::from_usize(classes).unwrap();
    let on = T::one() - eps + off;
    let logp = log_softmax(logits);
    let mut grad = Tensor2::zeros(rows, classes);
    let mut total = T::zero();
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Label { label: y, classes });
        }
        let lp = logp.row(r);
        let g = grad.row_mut(r);
        for c in 0..classes {
            let target = if c == y { on } else { off };
            if target > T::zero() {
                total = total - target * lp[c];
            }
            g[c] = (lp[c].exp() - target) / n;
        }
    }
    Ok((total / n, grad))
}

/// Mean over rows of `KL(softmax(lq) || softmax(lg))` and its gradients.
pub fn kl_from_logits<T: Scalar>(lq: &Tensor2<T>, lg: &Tensor2<T>) -> Result<PairLoss<T>> {
    same_shape("kl_loss", lq, lg)?;
    let n = batch_size::<T>(lq.rows());
    let log_p = log_softmax(lq);
    let log_q = log_softmax(lg);
    let mut grad_q = Tensor2::zeros(lq.rows(), lq.cols());
    let mut grad_g = Tensor2::zeros(lq.rows(), lq.cols());
    let mut total = T::zero();
    for r in 0..lq.rows() {
        let lp = log_p.row(r);
        let lqr = log_q.row(r);
        let kl: T = lp.iter().zip(lqr).map(|(&a, &b)| a.exp() * (a - b)).sum();
        total = total + kl;
        let gq = grad_q.row_mut(r);
        for c in 0..lp.len() {
            // d/da_c = p_c (log p_c - log q_c - KL)
            gq[c] = lp[c].exp() * (lp[c] - lqr[c] - kl) / n;
        }
        let gg = grad_g.row_mut(r);
        for c in 0..lp.len() {
            // d/db_c = q_c - p_c
            gg[c] = (lqr[c].exp() - lp[c].exp()) / n;
        }
    }
    Ok(PairLoss {
        value: total / n,
        grad_q,
        grad_g,
    })
}

/// `(1/N) sum_i [CE(head(fq_i), y_i) + CE(head(fg_i), y_i)]` through the
/// shared head. Head parameter gradients are accumulated into `params`.
pub fn dual_cls_loss<T: Scalar>(
    head: &dyn Head<T>,
    params: &mut HeadParams<T>,
    fq: &Tensor2<T>,
    fg: &Tensor2<T>,
    labels: &[usize],
) -> Result<PairLoss<T>> {
    let t = total_loss(
        Some((head, params)),
        fq,
        fg,
        labels,
        &LossWeights::new(0.0, 1.0, 0.0),
    )?;
    Ok(PairLoss {
        value: t.cls,
        grad_q: t.grad_q,
        grad_g: t.grad_g,
    })
}

/// Mean `KL(P_q || P_g)` of the shared head's class probabilities.
pub fn kl_loss<T: Scalar>(
    head: &dyn Head<T>,
    params: &mut HeadParams<T>,
    fq: &Tensor2<T>,
    fg: &Tensor2<T>,
    labels: &[usize],
) -> Result<PairLoss<T>> {
    let t = total_loss(
        Some((head, params)),
        fq,
        fg,
        labels,
        &LossWeights::new(0.0, 0.0, 1.0),
    )?;
    Ok(PairLoss {
        value: t.kl,
        grad_q: t.grad_q,
        grad_g: t.grad_g,
    })
}

#[derive(Debug, Clone)]
pub struct TotalLoss<T> {
    pub total: T,
    pub sim: T,
    pub cls: T,
    pub kl: T,
    pub grad_q: Tensor2<T>,
    pub grad_g: Tensor2<T>,
}

/// `lambda1 * L_sim + lambda2 * L_cls + lambda3 * L_KL`.
///
/// The head is evaluated once per branch and its logits feed both the
/// classification and KL terms. Components with zero weight are still
/// reported when they are computable; the head may be omitted only when
/// `lambda2 = lambda3 = 0`.
pub fn total_loss<T: Scalar>(
    head: Option<(&dyn Head<T>, &mut HeadParams<T>)>,
    fq: &Tensor2<T>,
    fg: &Tensor2<T>,
    labels: &[usize],
    weights: &LossWeights,
) -> Result<TotalLoss<T>> {
    weights.validate()?;
    let l1 = T::from_f64_lossy(weights.lambda1);
    let l2 = T::from_f64_lossy(weights.lambda2);
    let l3 = T::from_f64_lossy(weights.lambda3);

    let sim = sim_loss(fq, fg)?;
    let mut grad_q = sim.grad_q.map(|v| v * l1);
    let mut grad_g = sim.grad_g.map(|v| v * l1);
    let mut out = TotalLoss {
        total: l1 * sim.value,
        sim: sim.value,
        cls: T::zero(),
        kl: T::zero(),
        grad_q: Tensor2::zeros(0, 0),
        grad_g: Tensor2::zeros(0, 0),
    };

    match head {
        Some((head, params)) => {
            let (lq, cache_q) = head.forward(fq, labels, params)?;
            let (lg, cache_g) = head.forward(fg, labels, params)?;
            let smoothing = head.smoothing();
            let (ce_q, dq) = softmax_cross_entropy(&lq, labels, smoothing)?;
            let (ce_g, dg) = softmax_cross_entropy(&lg, labels, smoothing)?;
            let kl = kl_from_logits(&lq, &lg)?;
            out.cls = ce_q + ce_g;
            out.kl = kl.value;
            out.total = out.total + l2 * out.cls + l3 * out.kl;

            if weights.needs_head() {
                let mut glq = dq.map(|v| v * l2);
                glq.add_assign(&kl.grad_q.map(|v| v * l3))?;
                let mut glg = dg.map(|v| v * l2);
                glg.add_assign(&kl.grad_g.map(|v| v * l3))?;
                grad_q.add_assign(&head.backward(&cache_q, &glq, params)?)?;
                grad_g.add_assign(&head.backward(&cache_g, &glg, params)?)?;
            }
        }
        None if weights.needs_head() => {
            return Err(Error::Config(
                "classification or KL weight is nonzero but no head was given".into(),
            ));
        }
        None => {}
    }
    out.grad_q = grad_q;
    out.grad_g = grad_g;
    Ok(out)
}
