//! Residual bottleneck transformation.
//!
//! A stem projects the input to the unified width `U`. Each block then splits
//! its input into `P` equal chunks, sends each chunk through a bottleneck path
//! `FC(U/P -> w), BN, ReLU, FC(w -> U/P), BN, ReLU`, concatenates the path
//! outputs and adds the block input back.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::transform::Transform;
use crate::error::{Error, Result};
use crate::kernel::{
    concat_cols, relu_bwd, relu_fwd, split_cols, BatchNorm, BufferVisitor, Layer, LinearParams,
    Mode, ParamVisitor, Scalar, Sequential, Tensor2,
};

fn default_paths() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbtConfig {
    pub in_dim: usize,
    pub unified_dim: usize,
    pub num_blocks: usize,
    #[serde(default = "default_paths")]
    pub num_paths: usize,
    /// Hidden width of every path.
    pub bottleneck: usize,
    /// ReLU after the stem batchnorm.
    #[serde(default)]
    pub stem_relu: bool,
    /// ReLU after each residual add.
    #[serde(default)]
    pub post_add_relu: bool,
    /// Initial gamma of the last batchnorm in every path.
    #[serde(default = "default_path_gamma")]
    pub path_gamma_init: f64,
}

pub const DEFAULT_PATH_GAMMA: f64 = 0.01;

fn default_path_gamma() -> f64 {
    DEFAULT_PATH_GAMMA
}

impl RbtConfig {
    /// Face-style configuration: `w = U / (2P)`.
    pub fn face(in_dim: usize, unified_dim: usize, num_blocks: usize) -> Self {
        let num_paths = default_paths();
        Self {
            in_dim,
            unified_dim,
            num_blocks,
            num_paths,
            bottleneck: (unified_dim / (2 * num_paths)).max(1),
            stem_relu: false,
            post_add_relu: false,
            path_gamma_init: DEFAULT_PATH_GAMMA,
        }
    }

    /// Re-id style configuration: `w = d_in / 32`.
    pub fn reid(in_dim: usize, unified_dim: usize, num_blocks: usize) -> Self {
        Self {
            bottleneck: (in_dim / 32).max(1),
            ..Self::face(in_dim, unified_dim, num_blocks)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.unified_dim == 0 {
            return Err(Error::Config("rbt: dimensions must be positive".into()));
        }
        if self.num_paths == 0 || self.unified_dim % self.num_paths != 0 {
            return Err(Error::Config(format!(
                "rbt: unified_dim {} is not divisible by num_paths {}",
                self.unified_dim, self.num_paths
            )));
        }
        if self.bottleneck == 0 {
            return Err(Error::Config(
                "rbt: bottleneck width must be at least 1".into(),
            ));
        }
        if self.num_blocks == 0 {
            return Err(Error::Config("rbt: at least one block is required".into()));
        }
        if !self.path_gamma_init.is_finite() {
            return Err(Error::Config("rbt: path_gamma_init must be finite".into()));
        }
        Ok(())
    }

    /// Learnable scalars of the stem plus `num_blocks` blocks.
    pub fn param_count(&self) -> usize {
        let u = self.unified_dim;
        let c = u / self.num_paths;
        let w = self.bottleneck;
        let stem = self.in_dim * u + u + 2 * u;
        let path = (c * w + w) + 2 * w + (w * c + c) + 2 * c;
        stem + self.num_blocks * self.num_paths * path
    }
}

#[derive(Debug, Clone)]
pub struct RbtBlock<T> {
    pub paths: Vec<Sequential<T>>,
    post_add_relu: bool,
    pre_activation: Option<Tensor2<T>>,
}

impl<T: Scalar> RbtBlock<T> {
    fn new(cfg: &RbtConfig, rng: &mut ChaCha8Rng) -> Self {
        let c = cfg.unified_dim / cfg.num_paths;
        let w = cfg.bottleneck;
        let paths = (0..cfg.num_paths)
            .map(|_| {
                Sequential::new(vec![
                    Layer::linear(LinearParams::init(c, w, rng)),
                    Layer::batchnorm(w),
                    Layer::relu(),
                    Layer::linear(LinearParams::init(w, c, rng)),
                    {
                        let mut bn = BatchNorm::new(c);
                        bn.params
                            .gamma
                            .value
                            .fill(T::from_f64_lossy(cfg.path_gamma_init));
                        Layer::BatchNorm(bn)
                    },
                    Layer::relu(),
                ])
            })
            .collect();
        Self {
            paths,
            post_add_relu: cfg.post_add_relu,
            pre_activation: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor2<T>, mode: Mode) -> Result<Tensor2<T>> {
        let chunks = split_cols(x, self.paths.len())?;
        let outs = self
            .paths
            .iter_mut()
            .zip(&chunks)
            .map(|(p, c)| p.forward(c, mode))
            .collect::<Result<Vec<_>>>()?;
        let mut y = concat_cols(&outs)?;
        y.add_assign(x)?;
        if self.post_add_relu {
            let out = relu_fwd(&y);
            self.pre_activation = Some(y);
            Ok(out)
        } else {
            Ok(y)
        }
    }

    pub fn infer(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        let chunks = split_cols(x, self.paths.len())?;
        let outs = self
            .paths
            .iter()
            .zip(&chunks)
            .map(|(p, c)| p.infer(c))
            .collect::<Result<Vec<_>>>()?;
        let mut y = concat_cols(&outs)?;
        y.add_assign(x)?;
        Ok(if self.post_add_relu { relu_fwd(&y) } else { y })
    }

    pub fn backward(&mut self, grad_out: &Tensor2<T>) -> Result<Tensor2<T>> {
        let g = if self.post_add_relu {
            let pre = self
                .pre_activation
                .take()
                .ok_or_else(|| Error::Numeric("rbt block backward without forward".into()))?;
            relu_bwd(&pre, grad_out)?
        } else {
            grad_out.clone()
        };
        let chunk_grads = split_cols(&g, self.paths.len())?;
        let path_grads = self
            .paths
            .iter_mut()
            .zip(&chunk_grads)
            .map(|(p, cg)| p.backward(cg))
            .collect::<Result<Vec<_>>>()?;
        let mut dx = concat_cols(&path_grads)?;
        dx.add_assign(&g)?;
        Ok(dx)
    }

    pub fn param_count(&self) -> usize {
        self.paths.iter().map(Sequential::param_count).sum()
    }

    pub fn macs(&self) -> usize {
        self.paths.iter().map(Sequential::macs).sum()
    }
}

#[derive(Debug, Clone)]
pub struct RbtTransform<T> {
    pub config: RbtConfig,
    pub stem: Sequential<T>,
    pub blocks: Vec<RbtBlock<T>>,
}

impl<T: Scalar> RbtTransform<T> {
    pub fn new(config: RbtConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stem = vec![
            Layer::linear(LinearParams::init(
                config.in_dim,
                config.unified_dim,
                &mut rng,
            )),
            Layer::batchnorm(config.unified_dim),
        ];
        if config.stem_relu {
            stem.push(Layer::relu());
        }
        let blocks = (0..config.num_blocks)
            .map(|_| RbtBlock::new(&config, &mut rng))
            .collect();
        Ok(Self {
            config,
            stem: Sequential::new(stem),
            blocks,
        })
    }
}

impl<T: Scalar> Transform<T> for RbtTransform<T> {
    fn kind(&self) -> &'static str {
        "rbt"
    }

    fn in_dim(&self) -> usize {
        self.config.in_dim
    }

    fn out_dim(&self) -> usize {
        self.config.unified_dim
    }

    fn forward(&mut self, x: &Tensor2<T>, mode: Mode) -> Result<Tensor2<T>> {
        let mut h = self.stem.forward(x, mode)?;
        for b in &mut self.blocks {
            h = b.forward(&h, mode)?;
        }
        Ok(h)
    }

    fn infer(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        let mut h = self.stem.infer(x)?;
        for b in &self.blocks {
            h = b.infer(&h)?;
        }
        Ok(h)
    }

    fn backward(&mut self, grad_out: &Tensor2<T>) -> Result<Tensor2<T>> {
        let mut g = grad_out.clone();
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(&g)?;
        }
        self.stem.backward(&g)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>) {
        self.stem.visit_params("stem", f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            for (p, path) in b.paths.iter_mut().enumerate() {
                path.visit_params(&format!("blocks.{i}.paths.{p}"), f);
            }
        }
    }

    fn visit_buffers(&mut self, f: &mut BufferVisitor<'_, T>) {
        self.stem.visit_buffers("stem", f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            for (p, path) in b.paths.iter_mut().enumerate() {
                path.visit_buffers(&format!("blocks.{i}.paths.{p}"), f);
            }
        }
    }

    fn param_count(&self) -> usize {
        self.stem.param_count() + self.blocks.iter().map(RbtBlock::param_count).sum::<usize>()
    }

    fn macs(&self) -> usize {
        self.stem.macs() + self.blocks.iter().map(RbtBlock::macs).sum::<usize>()
    }

    fn clone_box(&self) -> Box<dyn Transform<T>> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_count_matches_built_network() {
        for n in 1..=4 {
            let cfg = RbtConfig::face(512, 512, n);
            let net = RbtTransform::<f32>::new(cfg, 0).unwrap();
            assert_eq!(net.param_count(), cfg.param_count());
            assert_eq!(cfg.param_count(), 263_680 + 67_840 * n);
        }
    }

    #[test]
    fn zeroed_paths_make_the_block_an_identity() {
        let cfg = RbtConfig::face(16, 16, 1);
        let mut net = RbtTransform::<f64>::new(cfg, 3).unwrap();
        for path in &mut net.blocks[0].paths {
            path.visit_params("p", &mut |_, p| p.value.fill(0.0));
        }
        let x =
            Tensor2::from_vec(3, 16, (0..48).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        assert_eq!(net.blocks[0].infer(&x).unwrap(), x);
        assert_eq!(net.blocks[0].forward(&x, Mode::Train).unwrap(), x);
    }

    #[test]
    fn indivisible_width_is_rejected() {
        let cfg = RbtConfig {
            unified_dim: 30,
            ..RbtConfig::face(32, 32, 2)
        };
        assert!(matches!(
            RbtTransform::<f32>::new(cfg, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn reid_width_is_input_over_32() {
        assert_eq!(RbtConfig::reid(512, 512, 4).bottleneck, 16);
        assert_eq!(RbtConfig::reid(1280, 512, 4).bottleneck, 40);
        assert_eq!(RbtConfig::face(512, 512, 4).bottleneck, 64);
    }
}
