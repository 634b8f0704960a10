use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::history::{EpochRecord, TrainHistory};
use super::method::MethodRegistry;
use super::plan::{lr_at_epoch, MethodKind, TrainPlan};
use crate::data::{Checkpoint, CheckpointHeader, EmbeddingSet, PairedDataset};
use crate::error::{Error, Result};
use crate::eval::rank1_between;
use crate::heads::{build_head, total_loss, Head, HeadConfig, HeadParams};
use crate::kernel::{Mode, Param, Sgd, Tensor2};
use crate::net::TransformNet;

/// Rows per chunk when transforming whole embedding sets.
pub const TRANSFORM_CHUNK: usize = 4096;

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A trained transformation pair, ready for inference.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The plan with the head configuration resolved against the data.
    pub plan: TrainPlan,
    pub tq: TransformNet<f32>,
    pub tg: TransformNet<f32>,
    pub head: Option<HeadParams<f32>>,
    pub history: TrainHistory,
}

impl TrainOutcome {
    fn prepare(&self, s: &EmbeddingSet) -> Result<EmbeddingSet> {
        if self.plan.normalize_inputs {
            s.l2_normalized()
        } else {
            Ok(s.clone())
        }
    }

    pub fn transform_query(&self, s: &EmbeddingSet) -> Result<EmbeddingSet> {
        transform_set(&self.tq, &self.prepare(s)?)
    }

    pub fn transform_gallery(&self, s: &EmbeddingSet) -> Result<EmbeddingSet> {
        transform_set(&self.tg, &self.prepare(s)?)
    }

    pub fn unified_dim(&self) -> usize {
        self.tq.out_dim()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let head_cfg = self.head.as_ref().map(|_| self.plan.head);
        Checkpoint {
            header: CheckpointHeader {
                method: self.plan.method.name().to_string(),
                query: *self.tq.config(),
                gallery: *self.tg.config(),
                head: head_cfg,
                plan: Some(self.plan.clone()),
            },
            query: self.tq.clone(),
            gallery: self.tg.clone(),
            head: self.head.clone(),
        }
    }

    /// Rebuilds an outcome from a checkpoint; the training history is not
    /// stored in checkpoints and comes back empty.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let plan = match ckpt.header.plan {
            Some(p) => p,
            None => TrainPlan {
                method: ckpt.header.method.parse().unwrap_or(MethodKind::Unified),
                ..TrainPlan::default()
            },
        };
        Ok(Self {
            plan,
            tq: ckpt.query,
            tg: ckpt.gallery,
            head: ckpt.head,
            history: TrainHistory::default(),
        })
    }
}

/// Maps identity labels to `0..C` in sorted order.
pub fn class_indices(labels: &[u32]) -> (Vec<usize>, usize) {
    let ids: BTreeMap<u32, usize> = labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

struct Stepper<'a> {
    sgd: Sgd,
    tq: &'a mut TransformNet<f32>,
    tg: &'a mut TransformNet<f32>,
    head: Option<&'a mut HeadParams<f32>>,
    train_gallery: bool,
}

impl Stepper<'_> {
    fn step(&mut self) {
        let sgd = self.sgd;
        let mut f = |_: &str, p: &mut Param<f32>| sgd.step(p);
        self.tq.visit_params(&mut f);
        if self.train_gallery {
            self.tg.visit_params(&mut f);
        }
        if let Some(h) = self.head.as_deref_mut() {
            sgd.step(&mut h.weight);
            sgd.step(&mut h.bias);
        }
    }
}

/// Trains one method on a paired dataset.
pub fn train(data: &PairedDataset, plan: &TrainPlan) -> Result<TrainOutcome> {
    train_monitored(data, plan, None)
}

/// Like [`train`], additionally recording held-out rank-1 after each epoch
/// when `heldout` is given.
pub fn train_monitored(
    data: &PairedDataset,
    plan: &TrainPlan,
    heldout: Option<&PairedDataset>,
) -> Result<TrainOutcome> {
    plan.validate()?;
    let registry = MethodRegistry::default();
    let method = registry.get(plan.method)?;
    let weights = method.weights(plan);

    let (xq, xg) = if plan.normalize_inputs {
        (data.fq.l2_normalized()?, data.fg.l2_normalized()?)
    } else {
        (data.fq.clone(), data.fg.clone())
    };
    let (labels, classes) = class_indices(data.labels());

    let (mut tq, mut tg) = method.build(
        plan,
        xq.dim(),
        xg.dim(),
        (derive_seed(plan.seed, 1), derive_seed(plan.seed, 2)),
    )?;

    let mut resolved = plan.clone();
    resolved.head = HeadConfig {
        num_classes: classes,
        feat_dim: tq.out_dim(),
        ..plan.head
    };
    let (head, mut head_params): (Option<Box<dyn Head<f32>>>, Option<HeadParams<f32>>) =
        if method.uses_head(plan) {
            (
                Some(build_head(&resolved.head)?),
                Some(resolved.head.init_params(derive_seed(plan.seed, 3))?),
            )
        } else {
            (None, None)
        };

    let n = data.n();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, 4));
    let mut history = TrainHistory::default();

    for epoch in 0..plan.total_epochs {
        let lr = lr_at_epoch(plan, epoch)?;
        let sgd = plan.sgd(lr)?;
        order.shuffle(&mut shuffle_rng);
        let (mut tot, mut sim, mut cls, mut kl) = (0.0, 0.0, 0.0, 0.0);
        let mut rows = 0usize;
        let mut batches = 0usize;
        for (b, idx) in order.chunks(plan.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let bq = xq.data().gather_rows(idx);
            let bg = xg.data().gather_rows(idx);
            let bl: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();

            let fq = tq.forward(&bq, Mode::Train)?;
            let fg = tg.forward(&bg, Mode::Train)?;
            let head_arg = match (&head, head_params.as_mut()) {
                (Some(h), Some(p)) => Some((h.as_ref(), p)),
                _ => None,
            };
            let loss = total_loss(head_arg, &fq, &fg, &bl, &weights)?;
            let finite = |v: f32| v.is_finite();
            if !finite(loss.total) || !loss.grad_q.is_finite() || !loss.grad_g.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {b} (lr {lr}): total {}, sim {}, cls {}, kl {}",
                    loss.total, loss.sim, loss.cls, loss.kl
                )));
            }
            tq.backward(&loss.grad_q)?;
            if method.trains_gallery() {
                tg.backward(&loss.grad_g)?;
            }
            Stepper {
                sgd,
                tq: &mut tq,
                tg: &mut tg,
                head: head_params.as_mut(),
                train_gallery: method.trains_gallery(),
            }
            .step();

            let w = idx.len() as f64;
            tot += w * f64::from(loss.total);
            sim += w * f64::from(loss.sim);
            cls += w * f64::from(loss.cls);
            kl += w * f64::from(loss.kl);
            rows += idx.len();
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::BatchTooSmall { rows: n });
        }
        let r = rows as f64;
        let mut record = EpochRecord {
            epoch,
            lr,
            total: tot / r,
            sim: sim / r,
            cls: cls / r,
            kl: kl / r,
            batches,
            heldout_rank1: None,
        };
        if let Some(h) = heldout {
            let snapshot = TrainOutcome {
                plan: resolved.clone(),
                tq: tq.clone(),
                tg: tg.clone(),
                head: None,
                history: TrainHistory::default(),
            };
            let pq = snapshot.transform_query(&h.fq)?;
            let pg = snapshot.transform_gallery(&h.fg)?;
            record.heldout_rank1 = Some(rank1_between(&pq, &pg)?.value);
        }
        log::debug!(
            "{} epoch {epoch}: lr {lr} total {:.5} sim {:.5} cls {:.5} kl {:.5}",
            plan.method.name(),
            record.total,
            record.sim,
            record.cls,
            record.kl
        );
        history.epochs.push(record);
    }

    Ok(TrainOutcome {
        plan: resolved,
        tq,
        tg,
        head: head_params,
        history,
    })
}

/// Eval-mode transform of a whole matrix, chunked and fanned out over
/// threads. Each row's output depends only on that row.
pub fn transform_rows(net: &TransformNet<f32>, x: &Tensor2<f32>) -> Result<Tensor2<f32>> {
    if x.cols() != net.in_dim() {
        return Err(Error::shape(
            "transform input",
            x.shape(),
            (x.rows(), net.in_dim()),
        ));
    }
    let out_dim = net.out_dim();
    let chunks: Vec<Vec<f32>> = x
        .data()
        .par_chunks(TRANSFORM_CHUNK * x.cols().max(1))
        .map(|c| {
            let t = Tensor2::from_vec(c.len() / x.cols(), x.cols(), c.to_vec())?;
            Ok(net.infer(&t)?.into_vec())
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(x.rows() * out_dim);
    for c in chunks {
        data.extend(c);
    }
    let y = Tensor2::from_vec(x.rows(), out_dim, data)?;
    if let Some((r, c)) = y.first_non_finite() {
        return Err(Error::Numeric(format!(
            "transform produced a non-finite value at row {r}, column {c}"
        )));
    }
    Ok(y)
}

/// Throughput of one transformation pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub rows: usize,
    pub seconds: f64,
    pub rows_per_sec: f64,
}

impl Throughput {
    pub fn new(rows: usize, seconds: f64) -> Self {
        Self {
            rows,
            seconds,
            rows_per_sec: rows as f64 / seconds.max(1e-12),
        }
    }
}

/// Applies `net` in eval mode to every row of `s`, keeping labels and order.
pub fn transform_set(net: &TransformNet<f32>, s: &EmbeddingSet) -> Result<EmbeddingSet> {
    let start = Instant::now();
    let y = transform_rows(net, s.data())?;
    let t = Throughput::new(s.n(), start.elapsed().as_secs_f64());
    log::info!(
        "transformed {} rows with {} in {:.3}s ({:.0} rows/s)",
        t.rows,
        net.kind(),
        t.seconds,
        t.rows_per_sec
    );
    s.with_data(y, format!("{}>{}", s.model_tag(), net.kind()))
}

/// Streams `total` rows produced by `batch(start, len)` through `net`,
/// keeping only one chunk in memory, and reports throughput.
pub fn stream_transform(
    net: &TransformNet<f32>,
    total: usize,
    chunk: usize,
    mut batch: impl FnMut(usize, usize) -> Tensor2<f32>,
) -> Result<Throughput> {
    let chunk = chunk.max(1);
    let mut seconds = 0.0;
    let mut start = 0;
    while start < total {
        let len = chunk.min(total - start);
        let x = batch(start, len);
        let t0 = Instant::now();
        let y = transform_rows(net, &x)?;
        seconds += t0.elapsed().as_secs_f64();
        if !y.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite transform output in rows {start}..{}",
                start + len
            )));
        }
        start += len;
    }
    let t = Throughput::new(total, seconds);
    log::info!(
        "streamed {total} rows in {:.2}s ({:.0} rows/s)",
        t.seconds,
        t.rows_per_sec
    );
    Ok(t)
}
