use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cmc_core::data::Preset;
use cmc_core::eval::MetricKind;
use cmc_core::train::MethodKind;
use log::LevelFilter;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "cmc",
    version,
    about = "Cross-model compatibility transformations"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Seed for generation and training; overrides the plan's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for outputs that have no explicit path.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// off, error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    #[serde(serialize_with = "level_name")]
    pub log_level: LevelFilter,
}

fn level_name<S: serde::Serializer>(l: &LevelFilter, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(l.as_str())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scenario (train/eval embeddings of both models).
    Generate(GenerateArgs),
    /// Train a transformation pair on paired query/gallery embeddings.
    Train(TrainArgs),
    /// Score a checkpoint on probe and gallery embedding files.
    Eval(EvalArgs),
    /// Train and score every method in both directions over several seeds.
    Compare(CompareArgs),
    /// Train and score the four loss combinations.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetArg {
    Similar,
    Large,
    Mixed,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Similar => Preset::Similar,
            PresetArg::Large => Preset::Large,
            PresetArg::Mixed => Preset::Mixed,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Scenario spec JSON; missing fields come from its `preset`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Preset used when no spec file is given.
    #[arg(long, value_enum, default_value = "large", conflicts_with = "spec")]
    pub preset: PresetArg,
    /// Output directory (default: --out-dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Query-model training embeddings (EMB1).
    #[arg(long)]
    pub query: PathBuf,
    /// Gallery-model training embeddings (EMB1), row-aligned with --query.
    #[arg(long)]
    pub gallery: PathBuf,
    /// Overrides the plan's method.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<MethodKind>,
    /// Training plan JSON; an empty or missing plan gives the defaults.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Checkpoint path (default: <out-dir>/model.cmck).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Checkpoint; without one both sides are scored untransformed.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Query-model probe embeddings.
    #[arg(long)]
    pub probe: PathBuf,
    /// Gallery-model embeddings: one entry per probe identity for rank1,
    /// the retrieval gallery for map.
    #[arg(long)]
    pub gallery: PathBuf,
    /// Gallery-model embeddings of identities disjoint from the probes.
    #[arg(long)]
    pub distractors: Option<PathBuf>,
    #[arg(long, value_parser = parse_metric, default_value = "rank1")]
    pub metric: MetricKind,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// Scenario directory written by `generate`.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "mlp,rbt,unified")]
    pub methods: Vec<MethodKind>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    /// Base plan JSON shared by every method.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Also report mean average precision.
    #[arg(long)]
    pub map: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    /// Scenario directory written by `generate`.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    /// Base plan JSON; its loss weights are replaced per row.
    #[arg(long)]
    pub plan: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<MethodKind, String> {
    s.parse().map_err(|e: cmc_core::Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<MetricKind, String> {
    s.parse().map_err(|e: cmc_core::Error| e.to_string())
}
