use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::transform::Transform;
use crate::error::{Error, Result};
use crate::kernel::{
    BufferVisitor, Layer, LinearParams, Mode, ParamVisitor, Scalar, Sequential, Tensor2,
};

pub const DEFAULT_HIDDEN_WIDTH: usize = 512;

fn default_hidden_width() -> usize {
    DEFAULT_HIDDEN_WIDTH
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub in_dim: usize,
    pub out_dim: usize,
    pub hidden_layers: usize,
    #[serde(default = "default_hidden_width")]
    pub hidden_width: usize,
}

impl MlpConfig {
    pub fn new(in_dim: usize, out_dim: usize, hidden_layers: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            hidden_layers,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 {
            return Err(Error::Config(
                "mlp: at least one hidden layer is required".into(),
            ));
        }
        if self.in_dim == 0 || self.out_dim == 0 || self.hidden_width == 0 {
            return Err(Error::Config("mlp: dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let h = self.hidden_width;
        (self.in_dim * h + h)
            + (self.hidden_layers - 1) * (h * h + h)
            + (h * self.out_dim + self.out_dim)
    }
}

/// `FC(d_in -> h), ReLU, [FC(h -> h), ReLU] x (L - 1), FC(h -> out)`.
#[derive(Debug, Clone)]
pub struct MlpTransform<T> {
    pub config: MlpConfig,
    pub layers: Sequential<T>,
}

impl<T: Scalar> MlpTransform<T> {
    pub fn new(config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_width;
        let mut layers = vec![
            Layer::linear(LinearParams::init(config.in_dim, h, &mut rng)),
            Layer::relu(),
        ];
        for _ in 1..config.hidden_layers {
            layers.push(Layer::linear(LinearParams::init(h, h, &mut rng)));
            layers.push(Layer::relu());
        }
        layers.push(Layer::linear(LinearParams::init(
            h,
            config.out_dim,
            &mut rng,
        )));
        Ok(Self {
            config,
            layers: Sequential::new(layers),
        })
    }
}

impl<T: Scalar> Transform<T> for MlpTransform<T> {
    fn kind(&self) -> &'static str {
        "mlp"
    }

    fn in_dim(&self) -> usize {
        self.config.in_dim
    }

    fn out_dim(&self) -> usize {
        self.config.out_dim
    }

    fn forward(&mut self, x: &Tensor2<T>, mode: Mode) -> Result<Tensor2<T>> {
        self.layers.forward(x, mode)
    }

    fn infer(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        self.layers.infer(x)
    }

    fn backward(&mut self, grad_out: &Tensor2<T>) -> Result<Tensor2<T>> {
        self.layers.backward(grad_out)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>) {
        self.layers.visit_params("layers", f);
    }

    fn visit_buffers(&mut self, _f: &mut BufferVisitor<'_, T>) {}

    fn param_count(&self) -> usize {
        self.layers.param_count()
    }

    fn macs(&self) -> usize {
        self.layers.macs()
    }

    fn clone_box(&self) -> Box<dyn Transform<T>> {
        Box::new(self.clone())
    }
}
