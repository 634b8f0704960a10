use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{MetricKind, Summary};
use super::protocol::{map_between, rank1_between};
use crate::data::{EmbeddingSet, PairedDataset, Scenario};
use crate::error::Result;
use crate::heads::LossWeights;
use crate::train::{train, MethodKind, TrainPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "Q->G")]
    QueryToGallery,
    #[serde(rename = "G->Q")]
    GalleryToQuery,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::QueryToGallery, Direction::GalleryToQuery];

    pub fn name(self) -> &'static str {
        match self {
            Direction::QueryToGallery => "Q->G",
            Direction::GalleryToQuery => "G->Q",
        }
    }

    /// Orients a pair so that `fq` is the probe-side model.
    pub fn orient(self, p: &PairedDataset) -> PairedDataset {
        match self {
            Direction::QueryToGallery => p.clone(),
            Direction::GalleryToQuery => p.swapped(),
        }
    }
}

/// A labelled training plan: one row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub label: String,
    pub plan: TrainPlan,
}

impl MethodSpec {
    pub fn new(label: impl Into<String>, plan: TrainPlan) -> Self {
        Self {
            label: label.into(),
            plan,
        }
    }

    pub fn standard(kind: MethodKind) -> Self {
        Self::new(kind.name(), TrainPlan::for_method(kind))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: String,
    pub direction: Direction,
    pub seed: u64,
    pub rank1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    pub final_loss: f64,
}

/// Untransformed reference: probes and gallery taken directly from the
/// named models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub label: String,
    pub rank1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub directions: Vec<Direction>,
    pub methods: Vec<String>,
    pub cells: Vec<CellResult>,
    pub references: Vec<ReferenceRow>,
}

impl ComparisonMatrix {
    pub fn values(&self, method: &str, direction: Direction, metric: MetricKind) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.method == method && c.direction == direction)
            .filter_map(|c| match metric {
                MetricKind::Rank1 => Some(c.rank1),
                MetricKind::MeanAp => c.map,
            })
            .collect()
    }

    pub fn summary(&self, method: &str, direction: Direction, metric: MetricKind) -> Summary {
        Summary::of(&self.values(method, direction, metric))
    }

    pub fn median_rank1(&self, method: &str, direction: Direction) -> f64 {
        self.summary(method, direction, MetricKind::Rank1).median
    }
}

fn metric_pair(
    probe: &EmbeddingSet,
    gallery: &EmbeddingSet,
    with_map: bool,
) -> Result<(f64, Option<f64>)> {
    let r1 = rank1_between(probe, gallery)?.value;
    let map = if with_map {
        Some(map_between(probe, gallery)?.value)
    } else {
        None
    };
    Ok((r1, map))
}

/// Within-model and, when dimensions agree, untransformed cross-model
/// references on the evaluation split.
pub fn reference_rows(eval: &PairedDataset, with_map: bool) -> Result<Vec<ReferenceRow>> {
    let mut rows = Vec::new();
    let mut push = |label: &str, p: &EmbeddingSet, g: &EmbeddingSet| -> Result<()> {
        let (rank1, map) = metric_pair(p, g, with_map)?;
        rows.push(ReferenceRow {
            label: label.to_string(),
            rank1,
            map,
        });
        Ok(())
    };
    push("within Q (identity)", &eval.fq, &eval.fq)?;
    push("within G (identity)", &eval.fg, &eval.fg)?;
    if eval.fq.dim() == eval.fg.dim() {
        push("cross Q->G (identity)", &eval.fq, &eval.fg)?;
        push("cross G->Q (identity)", &eval.fg, &eval.fq)?;
    }
    Ok(rows)
}

/// Trains `spec` on the oriented training pair with `seed` and scores it on
/// the oriented evaluation pair.
pub fn run_cell(
    scenario: &Scenario,
    spec: &MethodSpec,
    direction: Direction,
    seed: u64,
    with_map: bool,
) -> Result<CellResult> {
    let plan = TrainPlan {
        seed,
        ..spec.plan.clone()
    };
    let out = train(&direction.orient(&scenario.train), &plan)?;
    let eval = direction.orient(&scenario.eval);
    let probe = out.transform_query(&eval.fq)?;
    let gallery = out.transform_gallery(&eval.fg)?;
    let (rank1, map) = metric_pair(&probe, &gallery, with_map)?;
    log::info!(
        "{} {} seed {seed}: rank-1 {:.4}",
        spec.label,
        direction.name(),
        rank1
    );
    Ok(CellResult {
        method: spec.label.clone(),
        direction,
        seed,
        rank1,
        map,
        final_loss: out.history.last().map_or(f64::NAN, |e| e.total),
    })
}

/// Trains and evaluates every (method, direction, seed) cell. Cells are
/// independent and run on the rayon pool; results are ordered by method,
/// direction, then seed.
pub fn run_comparison(
    scenario: &Scenario,
    methods: &[MethodSpec],
    seeds: &[u64],
    directions: &[Direction],
    with_map: bool,
) -> Result<ComparisonMatrix> {
    let jobs: Vec<(&MethodSpec, Direction, u64)> = methods
        .iter()
        .flat_map(|m| {
            directions
                .iter()
                .flat_map(move |&d| seeds.iter().map(move |&s| (m, d, s)))
        })
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(m, d, s)| run_cell(scenario, m, d, s, with_map))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonMatrix {
        scenario: scenario.name().to_string(),
        seeds: seeds.to_vec(),
        directions: directions.to_vec(),
        methods: methods.iter().map(|m| m.label.clone()).collect(),
        cells,
        references: reference_rows(&scenario.eval, with_map)?,
    })
}

/// The four loss combinations of the ablation table, on top of `base`.
pub fn ablation_plans(base: &TrainPlan) -> Vec<MethodSpec> {
    [
        ("cls", LossWeights::new(0.0, 1.0, 0.0)),
        ("cls+sim", LossWeights::new(1.0, 1.0, 0.0)),
        ("cls+kl", LossWeights::new(0.0, 1.0, 0.25)),
        ("cls+sim+kl", LossWeights::new(1.0, 1.0, 0.25)),
    ]
    .into_iter()
    .map(|(label, weights)| {
        MethodSpec::new(
            label,
            TrainPlan {
                method: MethodKind::Unified,
                weights,
                ..base.clone()
            },
        )
    })
    .collect()
}

pub fn run_ablation(
    scenario: &Scenario,
    base: &TrainPlan,
    seeds: &[u64],
) -> Result<ComparisonMatrix> {
    run_comparison(
        scenario,
        &ablation_plans(base),
        seeds,
        &[Direction::QueryToGallery],
        false,
    )
}
