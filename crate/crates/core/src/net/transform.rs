use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::mlp::{MlpConfig, MlpTransform};
use super::rbt::{RbtConfig, RbtTransform};
use crate::error::{Error, Result};
use crate::kernel::{BufferVisitor, Mode, Param, ParamVisitor, Scalar, Tensor2};

/// A learnable embedding transformation. `forward`/`backward` are the
/// training path and cache activations; `infer` is the read-only eval path.
pub trait Transform<T: Scalar>: Debug + Send + Sync {
    fn kind(&self) -> &'static str;
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn forward(&mut self, x: &Tensor2<T>, mode: Mode) -> Result<Tensor2<T>>;
    fn infer(&self, x: &Tensor2<T>) -> Result<Tensor2<T>>;
    fn backward(&mut self, grad_out: &Tensor2<T>) -> Result<Tensor2<T>>;
    fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>);
    fn visit_buffers(&mut self, f: &mut BufferVisitor<'_, T>);
    fn param_count(&self) -> usize;
    /// Multiply-adds per sample.
    fn macs(&self) -> usize;
    fn clone_box(&self) -> Box<dyn Transform<T>>;
}

#[derive(Debug, Clone)]
pub struct IdentityTransform {
    dim: usize,
}

impl<T: Scalar> Transform<T> for IdentityTransform {
    fn kind(&self) -> &'static str {
        "identity"
    }

    fn in_dim(&self) -> usize {
        self.dim
    }

    fn out_dim(&self) -> usize {
        self.dim
    }

    fn forward(&mut self, x: &Tensor2<T>, _mode: Mode) -> Result<Tensor2<T>> {
        Ok(x.clone())
    }

    fn infer(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        Ok(x.clone())
    }

    fn backward(&mut self, grad_out: &Tensor2<T>) -> Result<Tensor2<T>> {
        Ok(grad_out.clone())
    }

    fn visit_params(&mut self, _f: &mut ParamVisitor<'_, T>) {}

    fn visit_buffers(&mut self, _f: &mut BufferVisitor<'_, T>) {}

    fn param_count(&self) -> usize {
        0
    }

    fn macs(&self) -> usize {
        0
    }

    fn clone_box(&self) -> Box<dyn Transform<T>> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformConfig {
    Identity { dim: usize },
    Rbt(RbtConfig),
    Mlp(MlpConfig),
}

impl TransformConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            TransformConfig::Identity { .. } => "identity",
            TransformConfig::Rbt(_) => "rbt",
            TransformConfig::Mlp(_) => "mlp",
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            TransformConfig::Identity { dim } => *dim,
            TransformConfig::Rbt(c) => c.in_dim,
            TransformConfig::Mlp(c) => c.in_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            TransformConfig::Identity { dim } => *dim,
            TransformConfig::Rbt(c) => c.unified_dim,
            TransformConfig::Mlp(c) => c.out_dim,
        }
    }
}

pub type TransformBuilder<T> = fn(&TransformConfig, u64) -> Result<Box<dyn Transform<T>>>;

/// Transform constructors keyed by kind name.
pub struct TransformRegistry<T: Scalar> {
    builders: BTreeMap<&'static str, TransformBuilder<T>>,
}

impl<T: Scalar> Default for TransformRegistry<T> {
    fn default() -> Self {
        let mut r = Self {
            builders: BTreeMap::new(),
        };
        r.register("identity", |cfg, _| match cfg {
            TransformConfig::Identity { dim } => Ok(Box::new(IdentityTransform { dim: *dim })),
            _ => Err(Error::Config(
                "identity builder got a foreign config".into(),
            )),
        });
        r.register("rbt", |cfg, seed| match cfg {
            TransformConfig::Rbt(c) => Ok(Box::new(RbtTransform::<T>::new(*c, seed)?)),
            _ => Err(Error::Config("rbt builder got a foreign config".into())),
        });
        r.register("mlp", |cfg, seed| match cfg {
            TransformConfig::Mlp(c) => Ok(Box::new(MlpTransform::<T>::new(*c, seed)?)),
            _ => Err(Error::Config("mlp builder got a foreign config".into())),
        });
        r
    }
}

impl<T: Scalar> TransformRegistry<T> {
    pub fn register(&mut self, kind: &'static str, builder: TransformBuilder<T>) {
        self.builders.insert(kind, builder);
    }

    pub fn kinds(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.builders.keys().copied()
    }

    pub fn build(&self, config: TransformConfig, seed: u64) -> Result<TransformNet<T>> {
        let builder = self
            .builders
            .get(config.kind())
            .ok_or_else(|| Error::Config(format!("unknown transform kind {:?}", config.kind())))?;
        Ok(TransformNet {
            config,
            inner: builder(&config, seed)?,
        })
    }
}

/// A configured transformation network (`T_q` or `T_g`).
#[derive(Debug)]
pub struct TransformNet<T: Scalar> {
    config: TransformConfig,
    inner: Box<dyn Transform<T>>,
}

impl<T: Scalar> Clone for TransformNet<T> {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            inner: self.inner.clone_box(),
        }
    }
}

pub fn build_transform<T: Scalar>(config: TransformConfig, seed: u64) -> Result<TransformNet<T>> {
    TransformRegistry::default().build(config, seed)
}

pub fn build_mlp_baseline<T: Scalar>(
    in_dim: usize,
    out_dim: usize,
    hidden_layers: usize,
    seed: u64,
) -> Result<TransformNet<T>> {
    build_transform(
        TransformConfig::Mlp(MlpConfig::new(in_dim, out_dim, hidden_layers)),
        seed,
    )
}

pub fn identity<T: Scalar>(dim: usize) -> TransformNet<T> {
    build_transform(TransformConfig::Identity { dim }, 0).expect("identity always builds")
}

impl<T: Scalar> TransformNet<T> {
    pub fn config(&self) -> &TransformConfig {
        &self.config
    }

    pub fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    pub fn in_dim(&self) -> usize {
        self.inner.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.inner.out_dim()
    }

    fn check_input(&self, x: &Tensor2<T>) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape(
                "transform input",
                x.shape(),
                (x.rows(), self.in_dim()),
            ));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &Tensor2<T>, mode: Mode) -> Result<Tensor2<T>> {
        self.check_input(x)?;
        self.inner.forward(x, mode)
    }

    pub fn infer(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        self.check_input(x)?;
        self.inner.infer(x)
    }

    pub fn backward(&mut self, grad_out: &Tensor2<T>) -> Result<Tensor2<T>> {
        if grad_out.cols() != self.out_dim() {
            return Err(Error::shape(
                "transform backward",
                grad_out.shape(),
                (grad_out.rows(), self.out_dim()),
            ));
        }
        self.inner.backward(grad_out)
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>) {
        self.inner.visit_params(f)
    }

    pub fn visit_buffers(&mut self, f: &mut BufferVisitor<'_, T>) {
        self.inner.visit_buffers(f)
    }

    pub fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    pub fn macs(&self) -> usize {
        self.inner.macs()
    }

    /// Copies of every learnable blob in visiting order.
    pub fn param_values(&mut self) -> Vec<Vec<T>> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, p: &mut Param<T>| out.push(p.value.data().to_vec()));
        out
    }

    pub fn param_grads(&mut self) -> Vec<Vec<T>> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, p: &mut Param<T>| out.push(p.grad.data().to_vec()));
        out
    }

    /// Overwrites learnable blobs in visiting order.
    pub fn set_param_values(&mut self, values: &[Vec<T>]) -> Result<()> {
        let mut i = 0;
        let mut bad = None;
        self.visit_params(&mut |name, p: &mut Param<T>| {
            match values.get(i) {
                Some(v) if v.len() == p.len() => p.value.data_mut().copy_from_slice(v),
                _ => {
                    bad.get_or_insert_with(|| name.to_string());
                }
            }
            i += 1;
        });
        match bad {
            Some(name) => Err(Error::Config(format!(
                "parameter layout mismatch at {name}"
            ))),
            None if i != values.len() => Err(Error::Config(format!(
                "expected {i} parameter blobs, got {}",
                values.len()
            ))),
            None => Ok(()),
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, p: &mut Param<T>| p.zero_grad());
    }
}
