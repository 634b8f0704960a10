use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::heads::{HeadConfig, LossWeights};
use crate::kernel::Sgd;
use crate::net::DEFAULT_HIDDEN_WIDTH;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    #[serde(alias = "mlp")]
    MlpBaseline,
    #[serde(alias = "rbt")]
    RbtBaseline,
    Unified,
}

impl MethodKind {
    pub const ALL: [MethodKind; 3] = [
        MethodKind::MlpBaseline,
        MethodKind::RbtBaseline,
        MethodKind::Unified,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::MlpBaseline => "mlp_baseline",
            MethodKind::RbtBaseline => "rbt_baseline",
            MethodKind::Unified => "unified",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            MethodKind::MlpBaseline => "mlp",
            MethodKind::RbtBaseline => "rbt",
            MethodKind::Unified => "unified",
        }
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" | "mlp_baseline" => Ok(MethodKind::MlpBaseline),
            "rbt" | "rbt_baseline" => Ok(MethodKind::RbtBaseline),
            "unified" | "ours" => Ok(MethodKind::Unified),
            _ => Err(Error::Config(format!(
                "unknown method {s:?} (expected mlp, rbt or unified)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbtPlan {
    pub num_blocks: usize,
    pub num_paths: usize,
    /// Path width; `U / (2P)` when unset.
    pub bottleneck: Option<usize>,
    pub stem_relu: bool,
    pub post_add_relu: bool,
    /// Initial gamma of the last batchnorm in every path.
    pub path_gamma_init: f64,
}

impl Default for RbtPlan {
    fn default() -> Self {
        Self {
            num_blocks: 4,
            num_paths: 4,
            bottleneck: None,
            stem_relu: false,
            post_add_relu: false,
            path_gamma_init: crate::net::DEFAULT_PATH_GAMMA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpPlan {
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Default for MlpPlan {
    fn default() -> Self {
        Self {
            hidden_layers: 2,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
        }
    }
}

/// Everything needed to train one method. Every field has a default, so an
/// empty JSON object is a complete plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainPlan {
    pub method: MethodKind,
    /// Width of the shared space for the unified method; `min(d_q, d_g)`
    /// when unset. Baselines always map into the gallery space.
    pub unified_dim: Option<usize>,
    pub rbt: RbtPlan,
    pub mlp: MlpPlan,
    pub head: HeadConfig,
    pub weights: LossWeights,
    pub lr0: f64,
    pub lr_drops: Vec<usize>,
    pub lr_factor: f64,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// L2-normalize input embeddings before any transformation.
    pub normalize_inputs: bool,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            method: MethodKind::Unified,
            unified_dim: None,
            rbt: RbtPlan::default(),
            mlp: MlpPlan::default(),
            head: HeadConfig::default(),
            weights: LossWeights::default(),
            lr0: 0.1,
            lr_drops: vec![20, 25],
            lr_factor: 0.1,
            total_epochs: 30,
            batch_size: 128,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
            normalize_inputs: true,
        }
    }
}

impl TrainPlan {
    pub fn for_method(method: MethodKind) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    /// Parses a JSON plan. Returns the plan and whether the document set a
    /// `head` explicitly.
    pub fn from_json(text: &str) -> Result<(Self, bool)> {
        let v: Value = if text.trim().is_empty() {
            Value::Object(Default::default())
        } else {
            serde_json::from_str(text)?
        };
        let explicit_head = v.get("head").is_some();
        let plan: Self =
            serde_json::from_value(v).map_err(|e| Error::Config(format!("plan: {e}")))?;
        plan.validate()?;
        Ok((plan, explicit_head))
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.sgd(self.lr0)?;
        if self.total_epochs == 0 {
            return Err(Error::Config("total_epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor.is_finite()) {
            return Err(Error::Config("lr_factor must be positive".into()));
        }
        if self.lr_drops.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("lr_drops must be strictly increasing".into()));
        }
        if let Some(&last) = self.lr_drops.last() {
            if last >= self.total_epochs {
                return Err(Error::Config(format!(
                    "lr_drops entry {last} is not below total_epochs {}",
                    self.total_epochs
                )));
            }
        }
        if self.rbt.num_blocks == 0 {
            return Err(Error::Config("rbt.num_blocks must be at least 1".into()));
        }
        if self.mlp.hidden_layers == 0 {
            return Err(Error::Config("mlp.hidden_layers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn sgd(&self, lr: f64) -> Result<Sgd> {
        Sgd::new(lr, self.momentum, self.weight_decay)
    }
}

/// Piecewise-constant learning rate: `lr0` times `lr_factor` for every drop
/// epoch at or before `epoch`.
pub fn lr_at_epoch(plan: &TrainPlan, epoch: usize) -> Result<f64> {
    if epoch >= plan.total_epochs {
        return Err(Error::Config(format!(
            "epoch {epoch} is outside 0..{}",
            plan.total_epochs
        )));
    }
    let drops = plan.lr_drops.iter().filter(|&&d| d <= epoch).count();
    Ok(plan.lr0 * plan.lr_factor.powi(drops as i32))
}
