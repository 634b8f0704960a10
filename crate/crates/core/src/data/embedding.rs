use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::kernel::{l2_normalize_fwd, Tensor2};

/// `n x dim` embeddings with one identity label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    data: Tensor2<f32>,
    labels: Vec<u32>,
    model_tag: String,
}

impl EmbeddingSet {
    pub fn new(data: Tensor2<f32>, labels: Vec<u32>, model_tag: impl Into<String>) -> Result<Self> {
        if data.rows() == 0 {
            return Err(Error::Config(
                "embedding set must contain at least one row".into(),
            ));
        }
        if labels.len() != data.rows() {
            return Err(Error::PayloadLength(format!(
                "{} rows but {} labels",
                data.rows(),
                labels.len()
            )));
        }
        if let Some((r, c)) = data.first_non_finite() {
            return Err(Error::Numeric(format!(
                "embedding row {r} column {c} is not finite"
            )));
        }
        Ok(Self {
            data,
            labels,
            model_tag: model_tag.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn data(&self) -> &Tensor2<f32> {
        &self.data
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.data.row(i)
    }

    pub fn identities(&self) -> BTreeSet<u32> {
        self.labels.iter().copied().collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            self.data.gather_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
            self.model_tag.clone(),
        )
    }

    /// Replaces the embedding matrix, keeping labels and order.
    pub fn with_data(&self, data: Tensor2<f32>, model_tag: impl Into<String>) -> Result<Self> {
        Self::new(data, self.labels.clone(), model_tag)
    }

    pub fn l2_normalized(&self) -> Result<Self> {
        let (data, _) = l2_normalize_fwd(&self.data)?;
        Self::new(data, self.labels.clone(), self.model_tag.clone())
    }

    /// Appends the rows of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(
            self.data.vstack(&other.data)?,
            labels,
            self.model_tag.clone(),
        )
    }
}

/// Two sample-aligned embedding sets of the same images through two models.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub fq: EmbeddingSet,
    pub fg: EmbeddingSet,
}

impl PairedDataset {
    pub fn new(fq: EmbeddingSet, fg: EmbeddingSet) -> Result<Self> {
        if fq.n() != fg.n() {
            return Err(Error::Pairing(format!(
                "query set has {} rows, gallery set has {}",
                fq.n(),
                fg.n()
            )));
        }
        if let Some(i) = (0..fq.n()).find(|&i| fq.labels[i] != fg.labels[i]) {
            return Err(Error::Pairing(format!(
                "row {i}: query label {} differs from gallery label {}",
                fq.labels[i], fg.labels[i]
            )));
        }
        Ok(Self { fq, fg })
    }

    pub fn n(&self) -> usize {
        self.fq.n()
    }

    pub fn labels(&self) -> &[u32] {
        self.fq.labels()
    }

    /// Same pairs with the two models' roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            fq: self.fg.clone(),
            fg: self.fq.clone(),
        }
    }
}
