//! Exhaustive reference implementations of the retrieval metrics and random
//! instances to compare them on.

use cmc_core::data::EmbeddingSet;
use cmc_core::eval::IdentificationTask;
use cmc_core::kernel::Tensor2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn unit(v: &[f32]) -> Vec<f64> {
    let r: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
    let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    r.into_iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scans every gallery item and keeps the first strict maximum.
pub fn brute_rank1(task: &IdentificationTask) -> f64 {
    let mut gallery: Vec<(Vec<f64>, u32)> = (0..task.gallery_true.n())
        .map(|i| {
            (
                unit(task.gallery_true.row(i)),
                task.gallery_true.labels()[i],
            )
        })
        .collect();
    if let Some(d) = &task.distractors {
        gallery.extend((0..d.n()).map(|i| (unit(d.row(i)), d.labels()[i])));
    }
    let n_true = task.gallery_true.n();
    let mut hits = 0;
    for i in 0..task.probes.n() {
        let p = unit(task.probes.row(i));
        let label = task.probes.labels()[i];
        let mut best = 0;
        let mut best_s = f64::NEG_INFINITY;
        for (j, (g, _)) in gallery.iter().enumerate() {
            let s = dot(&p, g);
            if s > best_s {
                best = j;
                best_s = s;
            }
        }
        if best < n_true && gallery[best].1 == label {
            hits += 1;
        }
    }
    hits as f64 / task.probes.n() as f64
}

/// Average precision from pairwise rank counts, ties to the lower index.
pub fn brute_map(queries: &EmbeddingSet, gallery: &EmbeddingSet) -> f64 {
    let g: Vec<Vec<f64>> = (0..gallery.n()).map(|i| unit(gallery.row(i))).collect();
    let gl = gallery.labels();
    let mut total = 0.0;
    for i in 0..queries.n() {
        let q = unit(queries.row(i));
        let s: Vec<f64> = g.iter().map(|r| dot(&q, r)).collect();
        let rank = |j: usize| {
            1 + (0..s.len())
                .filter(|&k| s[k] > s[j] || (s[k] == s[j] && k < j))
                .count()
        };
        let pos: Vec<usize> = (0..s.len())
            .filter(|&j| gl[j] == queries.labels()[i])
            .collect();
        let ranks: Vec<usize> = pos.iter().map(|&j| rank(j)).collect();
        let ap: f64 = ranks
            .iter()
            .map(|&r| ranks.iter().filter(|&&o| o <= r).count() as f64 / r as f64)
            .sum::<f64>()
            / ranks.len() as f64;
        total += ap;
    }
    total / queries.n() as f64
}

/// Integer-valued rows produce exact ties; Gaussian rows almost never do.
fn random_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize, quantized: bool) -> Vec<f32> {
    let mut out = Vec::with_capacity(n * dim);
    for _ in 0..n {
        loop {
            let row: Vec<f32> = (0..dim)
                .map(|_| {
                    if quantized {
                        rng.random_range(-2i32..=2) as f32
                    } else {
                        rng.sample::<f32, _>(StandardNormal)
                    }
                })
                .collect();
            if row.iter().any(|&v| v != 0.0) {
                out.extend(row);
                break;
            }
        }
    }
    out
}

fn set(rng: &mut ChaCha8Rng, labels: Vec<u32>, dim: usize, quantized: bool) -> EmbeddingSet {
    let n = labels.len();
    let data = Tensor2::from_vec(n, dim, random_rows(rng, n, dim, quantized)).unwrap();
    EmbeddingSet::new(data, labels, "oracle").unwrap()
}

/// Up to 50 probes over up to 20 identities, up to 200 distractors.
pub fn random_identification(rng: &mut ChaCha8Rng) -> IdentificationTask {
    let quantized = rng.random_bool(0.5);
    let dim = rng.random_range(2..=6);
    let ids = rng.random_range(1..=20u32);
    let n_probes = rng.random_range(1..=50);
    let probe_labels: Vec<u32> = (0..n_probes).map(|_| rng.random_range(0..ids)).collect();
    let mut true_labels: Vec<u32> = (0..ids).collect();
    true_labels.shuffle(rng);
    let n_distractors = rng.random_range(0..=200);
    let distractor_labels: Vec<u32> = (0..n_distractors)
        .map(|_| 1000 + rng.random_range(0..30))
        .collect();
    IdentificationTask {
        probes: set(rng, probe_labels, dim, quantized),
        gallery_true: set(rng, true_labels, dim, quantized),
        distractors: (n_distractors > 0).then(|| set(rng, distractor_labels, dim, quantized)),
    }
}

/// Up to 50 queries against a gallery of up to 200 rows that holds at least
/// one positive for every query identity.
pub fn random_retrieval(rng: &mut ChaCha8Rng) -> (EmbeddingSet, EmbeddingSet) {
    let quantized = rng.random_bool(0.5);
    let dim = rng.random_range(2..=6);
    let ids = rng.random_range(1..=15u32);
    let n_queries = rng.random_range(1..=50);
    let query_labels: Vec<u32> = (0..n_queries).map(|_| rng.random_range(0..ids)).collect();
    let extra = rng.random_range(0..=(200 - ids as usize));
    let mut gallery_labels: Vec<u32> = (0..ids).collect();
    gallery_labels.extend((0..extra).map(|_| rng.random_range(0..ids + 10)));
    gallery_labels.shuffle(rng);
    (
        set(rng, query_labels, dim, quantized),
        set(rng, gallery_labels, dim, quantized),
    )
}
