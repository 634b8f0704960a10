//! Central finite-difference oracle for analytic gradients.
//!
//! The function under test maps a list of input blobs to a scalar loss and
//! the analytic gradient of that loss with respect to every blob. Each entry
//! of every blob is perturbed by `±h` and the numeric derivative compared to
//! the analytic one with the error measure `|a - n| / max(1, |n|)`.

use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(blob, index)` of the worst entry.
    pub worst: (usize, usize),
    pub checked: usize,
}

pub type LossAndGrad = (f64, Vec<Vec<f64>>);

pub fn finite_diff_check<F>(inputs: &[Vec<f64>], h: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&[Vec<f64>]) -> Result<LossAndGrad>,
{
    let (loss, analytic) = f(inputs)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("oracle: base loss is {loss}")));
    }
    if analytic.len() != inputs.len()
        || analytic.iter().zip(inputs).any(|(g, x)| g.len() != x.len())
    {
        return Err(Error::Numeric(
            "oracle: analytic gradient layout differs from inputs".into(),
        ));
    }

    let mut work = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for b in 0..inputs.len() {
        for i in 0..inputs[b].len() {
            let orig = work[b][i];
            work[b][i] = orig + h;
            let (plus, _) = f(&work)?;
            work[b][i] = orig - h;
            let (minus, _) = f(&work)?;
            work[b][i] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[b][i];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(Error::Numeric(format!(
                    "oracle: non-finite derivative at blob {b} index {i} (analytic {a}, numeric {numeric})"
                )));
            }
            let err = (a - numeric).abs() / numeric.abs().max(1.0);
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = (b, i);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_gradient_of_a_cubic_passes() {
        let x = vec![vec![0.3, -1.2, 2.0]];
        let rep = finite_diff_check(&x, DEFAULT_STEP, |v| {
            let loss = v[0].iter().map(|a| a * a * a).sum();
            Ok((loss, vec![v[0].iter().map(|a| 3.0 * a * a).collect()]))
        })
        .unwrap();
        assert!(rep.max_rel_err < 1e-8, "{rep:?}");
        assert_eq!(rep.checked, 3);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let x = vec![vec![1.0, 2.0]];
        let rep = finite_diff_check(&x, DEFAULT_STEP, |v| {
            let loss = v[0].iter().map(|a| a * a).sum();
            Ok((loss, vec![vec![2.0 * v[0][0], 2.0 * v[0][1] + 3.0]]))
        })
        .unwrap();
        assert!(rep.max_rel_err > 0.7);
        assert_eq!(rep.worst, (0, 1));
    }

    #[test]
    fn non_finite_loss_is_an_oracle_failure() {
        let x = vec![vec![1.0]];
        let err = finite_diff_check(&x, DEFAULT_STEP, |_| Ok((f64::NAN, vec![vec![0.0]])));
        assert!(matches!(err, Err(Error::Numeric(_))));
    }
}
