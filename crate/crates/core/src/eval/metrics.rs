use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Rank1,
    #[serde(rename = "map")]
    MeanAp,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Rank1 => "rank1",
            MetricKind::MeanAp => "map",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank1" => Ok(MetricKind::Rank1),
            "map" | "mAP" => Ok(MetricKind::MeanAp),
            _ => Err(Error::Config(format!(
                "unknown metric {s:?} (expected rank1 or map)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub method: String,
    pub scenario: String,
    pub seed: Option<u64>,
    pub metric: MetricKind,
    pub value: f64,
    /// 1-based rank of each probe's true entry (rank-1 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_probe_ranks: Option<Vec<u32>>,
}

impl RetrievalReport {
    fn new(metric: MetricKind, value: f64) -> Self {
        Self {
            method: String::new(),
            scenario: String::new(),
            seed: None,
            metric,
            value,
            per_probe_ranks: None,
        }
    }

    pub fn labeled(mut self, method: &str, scenario: &str, seed: Option<u64>) -> Self {
        self.method = method.to_string();
        self.scenario = scenario.to_string();
        self.seed = seed;
        self
    }
}

/// Median, minimum and maximum over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub values: Vec<f64>,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let median = match v.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => v[n / 2],
            n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
        };
        Self {
            values: values.to_vec(),
            median,
            min: v.first().copied().unwrap_or(f64::NAN),
            max: v.last().copied().unwrap_or(f64::NAN),
        }
    }
}

/// Probes from one model, searched against one true entry per probe identity
/// plus distractors of other identities, all from the other model.
#[derive(Debug, Clone)]
pub struct IdentificationTask {
    pub probes: EmbeddingSet,
    pub gallery_true: EmbeddingSet,
    pub distractors: Option<EmbeddingSet>,
}

impl IdentificationTask {
    pub fn validate(&self) -> Result<()> {
        let dim = self.probes.dim();
        let mut true_ids = BTreeSet::new();
        for &l in self.gallery_true.labels() {
            if !true_ids.insert(l) {
                return Err(Error::Task(format!(
                    "identity {l} appears twice in gallery_true"
                )));
            }
        }
        if self.gallery_true.dim() != dim {
            return Err(Error::Task(format!(
                "probe dim {dim} differs from gallery dim {}",
                self.gallery_true.dim()
            )));
        }
        if let Some(&l) = self.probes.labels().iter().find(|l| !true_ids.contains(l)) {
            return Err(Error::Task(format!(
                "probe identity {l} has no gallery_true entry"
            )));
        }
        if let Some(d) = &self.distractors {
            if d.dim() != dim {
                return Err(Error::Task(format!(
                    "probe dim {dim} differs from distractor dim {}",
                    d.dim()
                )));
            }
            let probe_ids = self.probes.identities();
            if let Some(l) = d.labels().iter().find(|l| probe_ids.contains(l)) {
                return Err(Error::Task(format!("distractor shares probe identity {l}")));
            }
        }
        Ok(())
    }
}

fn unit_rows(s: &EmbeddingSet) -> Result<Vec<Vec<f64>>> {
    (0..s.n())
        .map(|i| {
            let r: Vec<f64> = s.row(i).iter().map(|&v| f64::from(v)).collect();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > crate::kernel::NORM_FLOOR) {
                return Err(Error::DegenerateEmbedding { row: i, norm });
            }
            Ok(r.into_iter().map(|v| v / norm).collect())
        })
        .collect()
}

/// Cosine similarity of two already-normalized rows.
#[inline]
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Top-1 identification accuracy over `gallery_true ++ distractors`, ranked
/// by cosine similarity. Ties go to the lower gallery index.
pub fn rank1_identification(task: &IdentificationTask) -> Result<RetrievalReport> {
    if task.probes.n() == 0 || task.gallery_true.n() == 0 {
        return Err(Error::Task("empty probe or gallery set".into()));
    }
    task.validate()?;
    let probes = unit_rows(&task.probes)?;
    let mut gallery = unit_rows(&task.gallery_true)?;
    if let Some(d) = &task.distractors {
        gallery.extend(unit_rows(d)?);
    }
    let true_index: BTreeMap<u32, usize> = task
        .gallery_true
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, i))
        .collect();

    let ranks: Vec<u32> = probes
        .par_iter()
        .zip(task.probes.labels().par_iter())
        .map(|(p, label)| {
            let t = true_index[label];
            let st = cosine(p, &gallery[t]);
            let ahead = gallery
                .iter()
                .enumerate()
                .filter(|&(j, g)| {
                    let s = cosine(p, g);
                    s > st || (s == st && j < t)
                })
                .count();
            ahead as u32 + 1
        })
        .collect();
    let hits = ranks.iter().filter(|&&r| r == 1).count();
    let mut report = RetrievalReport::new(MetricKind::Rank1, hits as f64 / ranks.len() as f64);
    report.per_probe_ranks = Some(ranks);
    Ok(report)
}

/// Mean over queries of average precision, ranking the gallery by cosine
/// similarity with ties going to the lower index.
pub fn mean_average_precision(
    queries: &EmbeddingSet,
    gallery: &EmbeddingSet,
) -> Result<RetrievalReport> {
    if queries.dim() != gallery.dim() {
        return Err(Error::Task(format!(
            "query dim {} differs from gallery dim {}",
            queries.dim(),
            gallery.dim()
        )));
    }
    let gallery_ids = gallery.identities();
    if let Some(&l) = queries.labels().iter().find(|l| !gallery_ids.contains(l)) {
        return Err(Error::MissingPositive { identity: l });
    }
    let q = unit_rows(queries)?;
    let g = unit_rows(gallery)?;
    let glabels = gallery.labels();
    let aps: Vec<f64> = q
        .par_iter()
        .zip(queries.labels().par_iter())
        .map(|(qr, &label)| {
            let sims: Vec<f64> = g.iter().map(|gr| cosine(qr, gr)).collect();
            let mut order: Vec<usize> = (0..g.len()).collect();
            order.sort_by(|&a, &b| {
                sims[b]
                    .partial_cmp(&sims[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut hits = 0usize;
            let mut sum = 0.0;
            for (k, &j) in order.iter().enumerate() {
                if glabels[j] == label {
                    hits += 1;
                    sum += hits as f64 / (k + 1) as f64;
                }
            }
            sum / hits as f64
        })
        .collect();
    Ok(RetrievalReport::new(
        MetricKind::MeanAp,
        aps.iter().sum::<f64>() / aps.len() as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Tensor2;

    fn set(rows: &[Vec<f32>], labels: &[u32]) -> EmbeddingSet {
        EmbeddingSet::new(Tensor2::from_rows(rows).unwrap(), labels.to_vec(), "t").unwrap()
    }

    #[test]
    fn probes_against_themselves_score_one() {
        let p = set(
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            &[0, 1, 2],
        );
        let task = IdentificationTask {
            probes: p.clone(),
            gallery_true: p,
            distractors: None,
        };
        assert_eq!(rank1_identification(&task).unwrap().value, 1.0);
    }

    #[test]
    fn distractor_equal_to_probe_wins() {
        let task = IdentificationTask {
            probes: set(&[vec![1.0, 0.0], vec![0.0, -1.0]], &[0, 1]),
            gallery_true: set(&[vec![0.0, 1.0], vec![0.0, -2.0]], &[0, 1]),
            distractors: Some(set(&[vec![3.0, 0.0]], &[9])),
        };
        let r = rank1_identification(&task).unwrap();
        assert_eq!(r.per_probe_ranks.as_deref(), Some(&[2, 1][..]));
        assert_eq!(r.value, 0.5);
    }

    #[test]
    fn ties_go_to_lower_index() {
        // probe 0's true entry (index 0) ties with distractor (index 2) -> hit;
        // probe 1's true entry (index 1) ties with gallery_true[0] -> miss.
        let task = IdentificationTask {
            probes: set(&[vec![1.0, 0.0], vec![1.0, 0.0]], &[0, 1]),
            gallery_true: set(&[vec![1.0, 0.0], vec![2.0, 0.0]], &[0, 1]),
            distractors: Some(set(&[vec![5.0, 0.0]], &[7])),
        };
        let r = rank1_identification(&task).unwrap();
        assert_eq!(r.per_probe_ranks.as_deref(), Some(&[1, 2][..]));
    }

    #[test]
    fn invalid_tasks_are_rejected() {
        let dup = IdentificationTask {
            probes: set(&[vec![1.0, 0.0]], &[0]),
            gallery_true: set(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0, 0]),
            distractors: None,
        };
        assert!(matches!(rank1_identification(&dup), Err(Error::Task(_))));
        let overlap = IdentificationTask {
            probes: set(&[vec![1.0, 0.0]], &[0]),
            gallery_true: set(&[vec![1.0, 0.0]], &[0]),
            distractors: Some(set(&[vec![1.0, 0.0]], &[0])),
        };
        assert!(matches!(
            rank1_identification(&overlap),
            Err(Error::Task(_))
        ));
    }

    #[test]
    fn map_examples() {
        let q = set(&[vec![1.0, 0.0]], &[0]);
        let perfect = set(
            &[vec![1.0, 0.1], vec![1.0, 0.2], vec![0.0, 1.0]],
            &[0, 0, 1],
        );
        assert_eq!(mean_average_precision(&q, &perfect).unwrap().value, 1.0);
        let second = set(
            &[vec![1.0, 0.0], vec![1.0, 0.5], vec![0.0, 1.0]],
            &[1, 0, 2],
        );
        assert_eq!(mean_average_precision(&q, &second).unwrap().value, 0.5);
    }

    #[test]
    fn signed_zero_similarities_tie() {
        // both gallery rows are orthogonal to the query; index 0 wins the tie
        let q = set(&[vec![-1.0, 0.0]], &[0]);
        let g = set(&[vec![0.0, -1.0], vec![0.0, 1.0]], &[5, 0]);
        assert_eq!(mean_average_precision(&q, &g).unwrap().value, 0.5);
    }

    #[test]
    fn map_requires_a_positive() {
        let q = set(&[vec![1.0, 0.0]], &[3]);
        let g = set(&[vec![1.0, 0.0]], &[0]);
        assert!(matches!(
            mean_average_precision(&q, &g),
            Err(Error::MissingPositive { identity: 3 })
        ));
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[0.3, 0.1, 0.9, 0.5, 0.7]);
        assert_eq!((s.median, s.min, s.max), (0.5, 0.1, 0.9));
        assert_eq!(Summary::of(&[1.0, 2.0]).median, 1.5);
    }
}
