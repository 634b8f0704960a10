use std::collections::BTreeMap;
use std::fmt::Debug;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{
    l2_normalize_bwd, l2_normalize_fwd, linear_bwd, linear_fwd, LinearParams, Scalar, Tensor2,
};

/// Shared classifier weights `C x U` and bias `1 x C`.
pub type HeadParams<T> = LinearParams<T>;

pub const COS_CLAMP: f64 = 1e-7;
/// How far outside [-1, 1] a raw cosine may drift before it is treated as a bug.
const COS_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Softmax,
    LabelSmoothingSoftmax,
    AmSoftmax,
    Arcface,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Softmax => "softmax",
            HeadKind::LabelSmoothingSoftmax => "label_smoothing_softmax",
            HeadKind::AmSoftmax => "am_softmax",
            HeadKind::Arcface => "arcface",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub kind: HeadKind,
    /// Filled from the training identities when left at 0.
    #[serde(default)]
    pub num_classes: usize,
    /// Filled from the unified dimension when left at 0.
    #[serde(default)]
    pub feat_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self::new(HeadKind::Arcface, 0, 0)
    }
}

impl HeadConfig {
    pub fn new(kind: HeadKind, num_classes: usize, feat_dim: usize) -> Self {
        Self {
            kind,
            num_classes,
            feat_dim,
            scale: None,
            margin: None,
            smoothing: None,
        }
    }

    pub fn with_scale_margin(mut self, s: f64, m: f64) -> Self {
        self.scale = Some(s);
        self.margin = Some(m);
        self
    }

    pub fn scale(&self) -> f64 {
        self.scale.unwrap_or(64.0)
    }

    pub fn margin(&self) -> f64 {
        self.margin.unwrap_or(match self.kind {
            HeadKind::Arcface => 0.5,
            HeadKind::AmSoftmax => 0.35,
            _ => 0.0,
        })
    }

    pub fn smoothing(&self) -> f64 {
        match self.kind {
            HeadKind::LabelSmoothingSoftmax => self.smoothing.unwrap_or(0.1),
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 1 || self.feat_dim < 1 {
            return Err(Error::Config(format!(
                "head: num_classes ({}) and feat_dim ({}) must be positive",
                self.num_classes, self.feat_dim
            )));
        }
        let s = self.scale();
        if !(s > 0.0) {
            return Err(Error::Config(format!(
                "head.scale must be positive, got {s}"
            )));
        }
        let m = self.margin();
        if self.kind == HeadKind::Arcface && !(0.0..std::f64::consts::FRAC_PI_2).contains(&m) {
            return Err(Error::Config(format!(
                "head.margin must lie in [0, pi/2), got {m}"
            )));
        }
        if m < 0.0 {
            return Err(Error::Config(format!(
                "head.margin must be nonnegative, got {m}"
            )));
        }
        let e = self.smoothing();
        if !(0.0..1.0).contains(&e) {
            return Err(Error::Config(format!(
                "head.smoothing must lie in [0, 1), got {e}"
            )));
        }
        Ok(())
    }

    /// Class weights uniform in `[-1/sqrt(U), 1/sqrt(U)]`, zero bias.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> Result<HeadParams<T>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = LinearParams::init(self.feat_dim, self.num_classes, &mut rng);
        p.bias.value.fill(T::zero());
        Ok(p)
    }
}

/// Whatever the backward pass needs from one forward call.
#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    input: Tensor2<T>,
    cosine: Option<CosineCache<T>>,
}

#[derive(Debug, Clone)]
struct CosineCache<T> {
    f_hat: Tensor2<T>,
    f_norms: Vec<T>,
    w_hat: Tensor2<T>,
    w_norms: Vec<T>,
    labels: Vec<usize>,
    /// d(target logit)/d(cos theta) per row.
    target_slope: Vec<T>,
}

/// A classification head: turns unified-space features into class logits.
/// Heads are stateless; the shared parameters are passed in so both
/// branches can use the same `W, b`.
pub trait Head<T: Scalar>: Debug + Send + Sync {
    fn config(&self) -> &HeadConfig;

    fn forward(
        &self,
        f: &Tensor2<T>,
        labels: &[usize],
        params: &HeadParams<T>,
    ) -> Result<(Tensor2<T>, HeadCache<T>)>;

    /// Accumulates parameter gradients and returns the feature gradient.
    fn backward(
        &self,
        cache: &HeadCache<T>,
        grad_logits: &Tensor2<T>,
        params: &mut HeadParams<T>,
    ) -> Result<Tensor2<T>>;

    fn smoothing(&self) -> f64 {
        self.config().smoothing()
    }
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::shape("labels", (rows, 1), (labels.len(), 1)));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Label {
            label: bad,
            classes,
        });
    }
    Ok(())
}

/// Plain affine logits `f W^T + b` (softmax and label-smoothing softmax).
#[derive(Debug, Clone)]
pub struct AffineHead {
    config: HeadConfig,
}

impl<T: Scalar> Head<T> for AffineHead {
    fn config(&self) -> &HeadConfig {
        &self.config
    }

    fn forward(
        &self,
        f: &Tensor2<T>,
        labels: &[usize],
        params: &HeadParams<T>,
    ) -> Result<(Tensor2<T>, HeadCache<T>)> {
        check_labels(labels, f.rows(), params.out_dim())?;
        let logits = linear_fwd(f, params)?;
        Ok((
            logits,
            HeadCache {
                input: f.clone(),
                cosine: None,
            },
        ))
    }

    fn backward(
        &self,
        cache: &HeadCache<T>,
        grad_logits: &Tensor2<T>,
        params: &mut HeadParams<T>,
    ) -> Result<Tensor2<T>> {
        linear_bwd(&cache.input, grad_logits, params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MarginStyle {
    /// target `s cos(theta + m)`
    Additive,
    /// target `s (cos theta - m)`
    Cosine,
}

/// Normalized-feature, normalized-weight heads with a margin on the target
/// class. The bias is unused.
#[derive(Debug, Clone)]
pub struct CosineMarginHead {
    config: HeadConfig,
    style: MarginStyle,
}

impl<T: Scalar> Head<T> for CosineMarginHead {
    fn config(&self) -> &HeadConfig {
        &self.config
    }

    fn forward(
        &self,
        f: &Tensor2<T>,
        labels: &[usize],
        params: &HeadParams<T>,
    ) -> Result<(Tensor2<T>, HeadCache<T>)> {
        check_labels(labels, f.rows(), params.out_dim())?;
        if f.cols() != params.in_dim() {
            return Err(Error::shape(
                "head_logits",
                f.shape(),
                params.weight.shape(),
            ));
        }
        let s = T::from_f64_lossy(self.config.scale());
        let m = self.config.margin();
        let (f_hat, f_norms) = l2_normalize_fwd(f)?;
        let (w_hat, w_norms) = l2_normalize_fwd(&params.weight.value)?;
        let cos = f_hat.matmul_nt(&w_hat)?;
        let mut logits = cos.map(|c| s * c);
        let mut target_slope = Vec::with_capacity(f.rows());
        let lo = -1.0 + COS_CLAMP;
        let hi = 1.0 - COS_CLAMP;
        for (i, &y) in labels.iter().enumerate() {
            let c = cos.get(i, y).to_f64().unwrap_or(f64::NAN);
            if !c.is_finite() || c.abs() > 1.0 + COS_TOLERANCE {
                return Err(Error::Numeric(format!(
                    "row {i}: cosine {c} outside [-1, 1]"
                )));
            }
            let (logit, slope) = match self.style {
                MarginStyle::Additive => {
                    // cos(theta + m) = cos theta cos m - sin theta sin m; the
                    // clamp only guards the slope, whose denominator is sin theta.
                    let c1 = c.clamp(-1.0, 1.0);
                    let sin_theta = (1.0 - c1 * c1).max(0.0).sqrt();
                    let logit = c1 * m.cos() - sin_theta * m.sin();
                    let theta = c.clamp(lo, hi).acos();
                    (logit, (theta + m).sin() / theta.sin())
                }
                MarginStyle::Cosine => (c - m, 1.0),
            };
            logits.set(i, y, s * T::from_f64_lossy(logit));
            target_slope.push(s * T::from_f64_lossy(slope));
        }
        Ok((
            logits,
            HeadCache {
                input: f.clone(),
                cosine: Some(CosineCache {
                    f_hat,
                    f_norms,
                    w_hat,
                    w_norms,
                    labels: labels.to_vec(),
                    target_slope,
                }),
            },
        ))
    }

    fn backward(
        &self,
        cache: &HeadCache<T>,
        grad_logits: &Tensor2<T>,
        params: &mut HeadParams<T>,
    ) -> Result<Tensor2<T>> {
        let cc = cache
            .cosine
            .as_ref()
            .ok_or_else(|| Error::Numeric("cosine head cache missing".into()))?;
        let s = T::from_f64_lossy(self.config.scale());
        let mut dcos = grad_logits.map(|g| s * g);
        for (i, &y) in cc.labels.iter().enumerate() {
            dcos.set(i, y, grad_logits.get(i, y) * cc.target_slope[i]);
        }
        let df_hat = dcos.matmul(&cc.w_hat)?;
        let mut dw_hat = Tensor2::zeros(cc.w_hat.rows(), cc.w_hat.cols());
        dcos.matmul_tn_acc(&cc.f_hat, &mut dw_hat)?;
        let dw = l2_normalize_bwd(&cc.w_hat, &cc.w_norms, &dw_hat)?;
        params.weight.grad.add_assign(&dw)?;
        debug_assert_eq!(cache.input.rows(), cc.f_hat.rows());
        l2_normalize_bwd(&cc.f_hat, &cc.f_norms, &df_hat)
    }
}

pub type HeadBuilder<T> = fn(&HeadConfig) -> Result<Box<dyn Head<T>>>;

/// Head strategies keyed by kind name.
pub struct HeadRegistry<T: Scalar> {
    builders: BTreeMap<&'static str, HeadBuilder<T>>,
}

impl<T: Scalar> Default for HeadRegistry<T> {
    fn default() -> Self {
        let mut r = Self {
            builders: BTreeMap::new(),
        };
        fn affine<T: Scalar>(c: &HeadConfig) -> Result<Box<dyn Head<T>>> {
            Ok(Box::new(AffineHead { config: *c }))
        }
        r.register(HeadKind::Softmax.name(), affine::<T>);
        r.register(HeadKind::LabelSmoothingSoftmax.name(), affine::<T>);
        r.register(HeadKind::AmSoftmax.name(), |c| {
            Ok(Box::new(CosineMarginHead {
                config: *c,
                style: MarginStyle::Cosine,
            }))
        });
        r.register(HeadKind::Arcface.name(), |c| {
            Ok(Box::new(CosineMarginHead {
                config: *c,
                style: MarginStyle::Additive,
            }))
        });
        r
    }
}

impl<T: Scalar> HeadRegistry<T> {
    pub fn register(&mut self, name: &'static str, builder: HeadBuilder<T>) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.builders.keys().copied()
    }

    pub fn build(&self, config: &HeadConfig) -> Result<Box<dyn Head<T>>> {
        config.validate()?;
        let b = self
            .builders
            .get(config.kind.name())
            .ok_or_else(|| Error::Config(format!("unknown head {:?}", config.kind.name())))?;
        b(config)
    }
}

pub fn build_head<T: Scalar>(config: &HeadConfig) -> Result<Box<dyn Head<T>>> {
    HeadRegistry::default().build(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_from(w: Vec<Vec<f64>>) -> HeadParams<f64> {
        let c = w.len();
        LinearParams::from_parts(Tensor2::from_rows(&w).unwrap(), Tensor2::zeros(1, c)).unwrap()
    }

    #[test]
    fn margin_free_arcface_is_cosine_similarity() {
        let cfg = HeadConfig::new(HeadKind::Arcface, 3, 2).with_scale_margin(1.0, 0.0);
        let head = build_head::<f64>(&cfg).unwrap();
        let p = params_from(vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 1.0]]);
        let f = Tensor2::from_rows(&[vec![3.0, 4.0], vec![-1.0, 0.5]]).unwrap();
        let (logits, _) = head.forward(&f, &[0, 2], &p).unwrap();
        for i in 0..2 {
            let fr = f.row(i);
            let fnorm = (fr[0] * fr[0] + fr[1] * fr[1]).sqrt();
            for c in 0..3 {
                let w = p.weight.value.row(c);
                let wnorm = (w[0] * w[0] + w[1] * w[1]).sqrt();
                let cos = (fr[0] * w[0] + fr[1] * w[1]) / (fnorm * wnorm);
                assert!((logits.get(i, c) - cos).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn aligned_target_gets_scaled_cos_margin() {
        let cfg = HeadConfig::new(HeadKind::Arcface, 2, 2);
        let head = build_head::<f64>(&cfg).unwrap();
        let p = params_from(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let f = Tensor2::from_rows(&[vec![2.0, 0.0]]).unwrap();
        let (logits, _) = head.forward(&f, &[0], &p).unwrap();
        assert!((logits.get(0, 0) - 64.0 * 0.5f64.cos()).abs() < 1e-12);
        assert!((logits.get(0, 0) - 56.16).abs() < 1e-2);
        assert_eq!(logits.get(0, 1), 0.0);
    }

    #[test]
    fn zero_margin_arcface_and_am_softmax_agree() {
        let p = params_from(vec![vec![0.3, -0.2, 0.9], vec![1.0, 1.0, 0.0]]);
        let f = Tensor2::from_rows(&[vec![0.5, 0.1, -0.7], vec![2.0, -1.0, 0.2]]).unwrap();
        let arc = build_head::<f64>(
            &HeadConfig::new(HeadKind::Arcface, 2, 3).with_scale_margin(30.0, 0.0),
        )
        .unwrap();
        let am = build_head::<f64>(
            &HeadConfig::new(HeadKind::AmSoftmax, 2, 3).with_scale_margin(30.0, 0.0),
        )
        .unwrap();
        let (a, _) = arc.forward(&f, &[1, 0], &p).unwrap();
        let (b, _) = am.forward(&f, &[1, 0], &p).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let head = build_head::<f64>(&HeadConfig::new(HeadKind::Softmax, 2, 2)).unwrap();
        let p = params_from(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let f = Tensor2::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            head.forward(&f, &[2], &p),
            Err(Error::Label {
                label: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = HeadConfig::new(HeadKind::Arcface, 4, 4);
        c.margin = Some(1.6);
        assert!(c.validate().is_err());
        c.margin = Some(0.5);
        c.scale = Some(0.0);
        assert!(c.validate().is_err());
        let mut ls = HeadConfig::new(HeadKind::LabelSmoothingSoftmax, 4, 4);
        ls.smoothing = Some(1.0);
        assert!(ls.validate().is_err());
        assert_eq!(
            HeadConfig::new(HeadKind::LabelSmoothingSoftmax, 4, 4).smoothing(),
            0.1
        );
    }

    #[test]
    fn registry_lists_all_kinds() {
        let names: Vec<_> = HeadRegistry::<f32>::default().names().collect();
        assert_eq!(
            names,
            vec![
                "am_softmax",
                "arcface",
                "label_smoothing_softmax",
                "softmax"
            ]
        );
    }
}
