use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub sim: f64,
    pub cls: f64,
    pub kl: f64,
    pub batches: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heldout_rank1: Option<f64>,
}

/// One record per completed epoch; losses are row-weighted means over the
/// epoch's batches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let epochs = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { epochs })
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let h = TrainHistory {
            epochs: (0..3)
                .map(|e| EpochRecord {
                    epoch: e,
                    lr: 0.1,
                    total: 1.0 / (e + 1) as f64,
                    sim: 0.5,
                    cls: 0.25,
                    kl: 0.0,
                    batches: 4,
                    heldout_rank1: (e == 2).then_some(0.75),
                })
                .collect(),
        };
        let text = h.to_jsonl().unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(TrainHistory::from_jsonl(&text).unwrap(), h);
    }
}
