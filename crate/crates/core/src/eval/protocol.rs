//! Scaled-down identification and retrieval tasks built from a paired
//! evaluation split.
//!
//! Evaluation identities are sorted and split in half. For each identity in
//! the first half, sample 0 on the gallery side is its registered entry and
//! samples 1.. on the probe side are the probes; sample 0's underlying image
//! never appears as a probe. Every gallery-side sample of the second half is a
//! distractor.

use std::collections::BTreeMap;

use super::metrics::{
    mean_average_precision, rank1_identification, IdentificationTask, RetrievalReport,
};
use crate::data::EmbeddingSet;
use crate::error::{Error, Result};

fn rows_by_identity(s: &EmbeddingSet) -> BTreeMap<u32, Vec<usize>> {
    let mut m: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in s.labels().iter().enumerate() {
        m.entry(l).or_default().push(i);
    }
    m
}

fn check_aligned(probe_side: &EmbeddingSet, gallery_side: &EmbeddingSet) -> Result<()> {
    if probe_side.labels() != gallery_side.labels() {
        return Err(Error::Pairing(
            "probe-side and gallery-side sets must be sample-aligned".into(),
        ));
    }
    Ok(())
}

/// Builds the identification task for `probe_side` searched against
/// `gallery_side`. The two sets must be row-aligned; they may be the same set
/// for a within-model reference.
pub fn identification_task(
    probe_side: &EmbeddingSet,
    gallery_side: &EmbeddingSet,
) -> Result<IdentificationTask> {
    check_aligned(probe_side, gallery_side)?;
    let groups = rows_by_identity(probe_side);
    if groups.len() < 2 {
        return Err(Error::Task(format!(
            "need at least 2 evaluation identities, found {}",
            groups.len()
        )));
    }
    let n_probe_ids = groups.len().div_ceil(2);
    let mut probes = Vec::new();
    let mut truth = Vec::new();
    let mut distractors = Vec::new();
    for (k, rows) in groups.values().enumerate() {
        if k < n_probe_ids {
            if rows.len() < 2 {
                continue;
            }
            truth.push(rows[0]);
            probes.extend_from_slice(&rows[1..]);
        } else {
            distractors.extend_from_slice(rows);
        }
    }
    if probes.is_empty() {
        return Err(Error::Task(
            "no probe identity has two or more samples".into(),
        ));
    }
    Ok(IdentificationTask {
        probes: probe_side.subset(&probes)?,
        gallery_true: gallery_side.subset(&truth)?,
        distractors: Some(gallery_side.subset(&distractors)?),
    })
}

/// Queries are probe-side sample 0 of each identity; the gallery is every
/// other gallery-side sample.
pub fn retrieval_task(
    probe_side: &EmbeddingSet,
    gallery_side: &EmbeddingSet,
) -> Result<(EmbeddingSet, EmbeddingSet)> {
    check_aligned(probe_side, gallery_side)?;
    let groups = rows_by_identity(probe_side);
    let mut queries = Vec::new();
    let mut gallery = Vec::new();
    for rows in groups.values() {
        if rows.len() < 2 {
            continue;
        }
        queries.push(rows[0]);
        gallery.extend_from_slice(&rows[1..]);
    }
    if queries.is_empty() {
        return Err(Error::Task("no identity has two or more samples".into()));
    }
    Ok((probe_side.subset(&queries)?, gallery_side.subset(&gallery)?))
}

pub fn rank1_between(
    probe_side: &EmbeddingSet,
    gallery_side: &EmbeddingSet,
) -> Result<RetrievalReport> {
    rank1_identification(&identification_task(probe_side, gallery_side)?)
}

pub fn map_between(
    probe_side: &EmbeddingSet,
    gallery_side: &EmbeddingSet,
) -> Result<RetrievalReport> {
    let (q, g) = retrieval_task(probe_side, gallery_side)?;
    mean_average_precision(&q, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Tensor2;

    fn grouped(ids: u32, per: usize) -> EmbeddingSet {
        let n = ids as usize * per;
        let labels: Vec<u32> = (0..n).map(|i| 10 + (i / per) as u32).collect();
        let data = (0..n * 3).map(|i| ((i * 7 % 11) as f32) + 1.0).collect();
        EmbeddingSet::new(Tensor2::from_vec(n, 3, data).unwrap(), labels, "m").unwrap()
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let s = grouped(5, 4);
        let t = identification_task(&s, &s).unwrap();
        assert_eq!(t.gallery_true.n(), 3);
        assert_eq!(t.probes.n(), 9);
        assert_eq!(t.distractors.as_ref().unwrap().n(), 8);
        t.validate().unwrap();
        let probe_ids = t.probes.identities();
        assert!(t
            .distractors
            .unwrap()
            .labels()
            .iter()
            .all(|l| !probe_ids.contains(l)));
    }

    #[test]
    fn retrieval_split() {
        let s = grouped(3, 4);
        let (q, g) = retrieval_task(&s, &s).unwrap();
        assert_eq!(q.labels(), &[10, 11, 12]);
        assert_eq!(g.n(), 9);
    }

    #[test]
    fn misaligned_sides_rejected() {
        let a = grouped(3, 2);
        let b = grouped(2, 3);
        assert!(matches!(
            identification_task(&a, &b),
            Err(Error::Pairing(_))
        ));
    }
}
