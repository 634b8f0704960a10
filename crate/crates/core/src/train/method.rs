use std::collections::BTreeMap;
use std::fmt::Debug;

use super::plan::{MethodKind, TrainPlan};
use crate::error::{Error, Result};
use crate::heads::LossWeights;
use crate::net::{build_transform, MlpConfig, RbtConfig, TransformConfig, TransformNet};

/// A row of the method matrix: which networks are trained and with which
/// losses.
pub trait Method: Debug + Send + Sync {
    fn kind(&self) -> MethodKind;

    /// Transform configurations for `(T_q, T_g)` given the input dimensions.
    fn transforms(
        &self,
        plan: &TrainPlan,
        dq: usize,
        dg: usize,
    ) -> Result<(TransformConfig, TransformConfig)>;

    /// Loss weights actually optimized.
    fn weights(&self, plan: &TrainPlan) -> LossWeights;

    fn trains_gallery(&self) -> bool;

    fn uses_head(&self, plan: &TrainPlan) -> bool {
        self.weights(plan).needs_head()
    }

    fn build(
        &self,
        plan: &TrainPlan,
        dq: usize,
        dg: usize,
        seeds: (u64, u64),
    ) -> Result<(TransformNet<f32>, TransformNet<f32>)> {
        let (cq, cg) = self.transforms(plan, dq, dg)?;
        Ok((build_transform(cq, seeds.0)?, build_transform(cg, seeds.1)?))
    }
}

fn rbt_config(plan: &TrainPlan, in_dim: usize, unified_dim: usize) -> RbtConfig {
    let r = plan.rbt;
    RbtConfig {
        in_dim,
        unified_dim,
        num_blocks: r.num_blocks,
        num_paths: r.num_paths,
        bottleneck: r
            .bottleneck
            .unwrap_or_else(|| (unified_dim / (2 * r.num_paths.max(1))).max(1)),
        stem_relu: r.stem_relu,
        post_add_relu: r.post_add_relu,
        path_gamma_init: r.path_gamma_init,
    }
}

/// `T_q` is an MLP into the gallery space, `T_g` is the identity; only the
/// similarity loss is optimized.
#[derive(Debug, Clone, Copy, Default)]
pub struct MlpBaseline;

impl Method for MlpBaseline {
    fn kind(&self) -> MethodKind {
        MethodKind::MlpBaseline
    }

    fn transforms(
        &self,
        plan: &TrainPlan,
        dq: usize,
        dg: usize,
    ) -> Result<(TransformConfig, TransformConfig)> {
        let cfg = MlpConfig {
            in_dim: dq,
            out_dim: dg,
            hidden_layers: plan.mlp.hidden_layers,
            hidden_width: plan.mlp.hidden_width,
        };
        cfg.validate()?;
        Ok((
            TransformConfig::Mlp(cfg),
            TransformConfig::Identity { dim: dg },
        ))
    }

    fn weights(&self, _: &TrainPlan) -> LossWeights {
        LossWeights::new(1.0, 0.0, 0.0)
    }

    fn trains_gallery(&self) -> bool {
        false
    }
}

/// `T_q` is an RBT into the gallery space, `T_g` is the identity; only the
/// similarity loss is optimized.
#[derive(Debug, Clone, Copy, Default)]
pub struct RbtBaseline;

impl Method for RbtBaseline {
    fn kind(&self) -> MethodKind {
        MethodKind::RbtBaseline
    }

    fn transforms(
        &self,
        plan: &TrainPlan,
        dq: usize,
        dg: usize,
    ) -> Result<(TransformConfig, TransformConfig)> {
        let cfg = rbt_config(plan, dq, dg);
        cfg.validate()?;
        Ok((
            TransformConfig::Rbt(cfg),
            TransformConfig::Identity { dim: dg },
        ))
    }

    fn weights(&self, _: &TrainPlan) -> LossWeights {
        LossWeights::new(1.0, 0.0, 0.0)
    }

    fn trains_gallery(&self) -> bool {
        false
    }
}

/// Both models are mapped by RBTs into a shared space, trained with the
/// weighted similarity, dual classification and KL losses.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unified;

impl Method for Unified {
    fn kind(&self) -> MethodKind {
        MethodKind::Unified
    }

    fn transforms(
        &self,
        plan: &TrainPlan,
        dq: usize,
        dg: usize,
    ) -> Result<(TransformConfig, TransformConfig)> {
        let u = plan.unified_dim.unwrap_or(dq.min(dg));
        let q = rbt_config(plan, dq, u);
        let g = rbt_config(plan, dg, u);
        q.validate()?;
        g.validate()?;
        Ok((TransformConfig::Rbt(q), TransformConfig::Rbt(g)))
    }

    fn weights(&self, plan: &TrainPlan) -> LossWeights {
        plan.weights
    }

    fn trains_gallery(&self) -> bool {
        true
    }
}

#[derive(Debug)]
pub struct MethodRegistry {
    methods: BTreeMap<MethodKind, Box<dyn Method>>,
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut r = Self {
            methods: BTreeMap::new(),
        };
        r.register(Box::new(MlpBaseline));
        r.register(Box::new(RbtBaseline));
        r.register(Box::new(Unified));
        r
    }
}

impl MethodRegistry {
    pub fn register(&mut self, m: Box<dyn Method>) {
        self.methods.insert(m.kind(), m);
    }

    pub fn get(&self, kind: MethodKind) -> Result<&dyn Method> {
        self.methods
            .get(&kind)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::Config(format!("method {} is not registered", kind.name())))
    }

    pub fn kinds(&self) -> impl Iterator<Item = MethodKind> + '_ {
        self.methods.keys().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baselines_map_into_the_gallery_space() {
        let reg = MethodRegistry::default();
        let plan = TrainPlan::default();
        for kind in [MethodKind::MlpBaseline, MethodKind::RbtBaseline] {
            let m = reg.get(kind).unwrap();
            let (q, g) = m.transforms(&plan, 96, 64).unwrap();
            assert_eq!((q.in_dim(), q.out_dim()), (96, 64));
            assert_eq!(g, TransformConfig::Identity { dim: 64 });
            assert!(!m.uses_head(&plan));
            assert!(!m.trains_gallery());
        }
    }

    #[test]
    fn unified_uses_the_smaller_dimension_by_default() {
        let m = Unified;
        let (q, g) = m.transforms(&TrainPlan::default(), 96, 64).unwrap();
        assert_eq!((q.out_dim(), g.out_dim()), (64, 64));
        match q {
            TransformConfig::Rbt(c) => assert_eq!((c.num_blocks, c.bottleneck), (4, 8)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn face_scale_defaults_reproduce_the_paper_pair() {
        let (q, g) = Unified.transforms(&TrainPlan::default(), 512, 512).unwrap();
        let count = |c: TransformConfig| match c {
            TransformConfig::Rbt(r) => r.param_count(),
            _ => 0,
        };
        assert_eq!(count(q) + count(g), 1_070_080);
    }
}
