//! `CMCK` checkpoints of a trained transformation pair.
//!
//! ```text
//! "CMCK" | u32 version | u32 header_len | header JSON (UTF-8)
//!        | u32 blob_count | blob*
//! blob = u32 name_len | name (UTF-8) | u32 rows | u32 cols | rows*cols f32
//! ```
//! The header holds the transform and head configurations and the training
//! plan. Blob names are `q.<param>`, `g.<param>` and `head.<param>`; batchnorm
//! running statistics are stored as blobs as well.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::emb_io::Reader;
use crate::error::{Error, Result};
use crate::heads::{HeadConfig, HeadParams};
use crate::kernel::{LinearParams, Param, Tensor2};
use crate::net::{build_transform, TransformConfig, TransformNet};
use crate::train::TrainPlan;

pub const CKPT_MAGIC: [u8; 4] = *b"CMCK";
pub const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub method: String,
    pub query: TransformConfig,
    pub gallery: TransformConfig,
    #[serde(default)]
    pub head: Option<HeadConfig>,
    #[serde(default)]
    pub plan: Option<TrainPlan>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub query: TransformNet<f32>,
    pub gallery: TransformNet<f32>,
    pub head: Option<HeadParams<f32>>,
}

/// Named parameter blobs, in file order.
pub type Blobs = Vec<(String, Tensor2<f32>)>;

fn net_blobs(net: &TransformNet<f32>, prefix: &str, out: &mut Blobs) {
    let mut net = net.clone();
    net.visit_params(&mut |name, p: &mut Param<f32>| {
        out.push((format!("{prefix}.{name}"), p.value.clone()));
    });
    net.visit_buffers(&mut |name, t: &mut Tensor2<f32>| {
        out.push((format!("{prefix}.{name}"), t.clone()));
    });
}

impl Checkpoint {
    pub fn blobs(&self) -> Blobs {
        let mut out = Vec::new();
        net_blobs(&self.query, "q", &mut out);
        net_blobs(&self.gallery, "g", &mut out);
        if let Some(h) = &self.head {
            out.push(("head.weight".into(), h.weight.value.clone()));
            out.push(("head.bias".into(), h.bias.value.clone()));
        }
        out
    }
}

/// Copies the blobs under `prefix` into `net`, checking every shape.
pub fn restore_net(
    net: &mut TransformNet<f32>,
    prefix: &str,
    blobs: &BTreeMap<String, Tensor2<f32>>,
) -> Result<()> {
    let mut first_err: Option<Error> = None;
    let mut copy = |name: &str, dst: &mut Tensor2<f32>| {
        if first_err.is_some() {
            return;
        }
        let full = format!("{prefix}.{name}");
        match blobs.get(&full) {
            None => first_err = Some(Error::MissingBlob(full)),
            Some(src) if src.shape() != dst.shape() => {
                first_err = Some(Error::BlobShape {
                    name: full,
                    expected: dst.shape(),
                    found: src.shape(),
                })
            }
            Some(src) => *dst = src.clone(),
        }
    };
    net.visit_params(&mut |name, p: &mut Param<f32>| copy(name, &mut p.value));
    net.visit_buffers(&mut |name, t: &mut Tensor2<f32>| copy(name, t));
    first_err.map_or(Ok(()), Err)
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&ckpt.header)?;
    let blobs = ckpt.blobs();
    let mut out = Vec::new();
    out.extend_from_slice(&CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(blobs.len() as u32).to_le_bytes());
    for (name, t) in &blobs {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Reads the header and the raw blob table without building networks.
pub fn decode_blobs(buf: &[u8]) -> Result<(CheckpointHeader, BTreeMap<String, Tensor2<f32>>)> {
    let mut r = Reader::new(buf);
    r.magic(CKPT_MAGIC)?;
    let version = r.u32("version")?;
    if version != CKPT_VERSION {
        return Err(Error::Version {
            expected: CKPT_VERSION,
            found: version,
        });
    }
    let hlen = r.u32("header length")? as usize;
    let header: CheckpointHeader = serde_json::from_slice(r.take(hlen, "header")?)?;
    let count = r.u32("blob count")? as usize;
    let mut blobs = BTreeMap::new();
    for _ in 0..count {
        let nlen = r.u32("blob name length")? as usize;
        let name = std::str::from_utf8(r.take(nlen, "blob name")?)
            .map_err(|e| Error::PayloadLength(format!("blob name is not UTF-8: {e}")))?
            .to_string();
        let rows = r.u32("blob rows")? as usize;
        let cols = r.u32("blob cols")? as usize;
        let data = r.f32s(rows * cols, &name)?;
        blobs.insert(name, Tensor2::from_vec(rows, cols, data)?);
    }
    if r.remaining() != 0 {
        return Err(Error::PayloadLength(format!(
            "{} trailing bytes after the last blob",
            r.remaining()
        )));
    }
    Ok((header, blobs))
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let (header, blobs) = decode_blobs(buf)?;
    let mut query = build_transform::<f32>(header.query, 0)?;
    let mut gallery = build_transform::<f32>(header.gallery, 0)?;
    restore_net(&mut query, "q", &blobs)?;
    restore_net(&mut gallery, "g", &blobs)?;
    let head = match header.head {
        Some(cfg) => {
            let take = |name: &str, shape: (usize, usize)| -> Result<Tensor2<f32>> {
                let t = blobs
                    .get(name)
                    .ok_or_else(|| Error::MissingBlob(name.to_string()))?;
                if t.shape() != shape {
                    return Err(Error::BlobShape {
                        name: name.to_string(),
                        expected: shape,
                        found: t.shape(),
                    });
                }
                Ok(t.clone())
            };
            let w = take("head.weight", (cfg.num_classes, cfg.feat_dim))?;
            let b = take("head.bias", (1, cfg.num_classes))?;
            Some(LinearParams::from_parts(w, b)?)
        }
        None => None,
    };
    Ok(Checkpoint {
        header,
        query,
        gallery,
        head,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(ckpt)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::HeadKind;
    use crate::kernel::Mode;
    use crate::net::{identity, RbtConfig};

    fn trained_like(seed: u64) -> Checkpoint {
        let mut q =
            build_transform::<f32>(TransformConfig::Rbt(RbtConfig::face(8, 8, 2)), seed).unwrap();
        // push some data through so running stats differ from their init
        let x = Tensor2::from_vec(6, 8, (0..48).map(|i| (i as f32 * 0.7).cos()).collect()).unwrap();
        q.forward(&x, Mode::Train).unwrap();
        let head = HeadConfig::new(HeadKind::Arcface, 3, 8);
        Checkpoint {
            header: CheckpointHeader {
                method: "unified".into(),
                query: *q.config(),
                gallery: TransformConfig::Identity { dim: 8 },
                head: Some(head),
                plan: None,
            },
            query: q,
            gallery: identity(8),
            head: Some(head.init_params(1).unwrap()),
        }
    }

    #[test]
    fn round_trip_is_byte_identical_and_preserves_outputs() {
        let ck = trained_like(4);
        let bytes = encode_checkpoint(&ck).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
        let x = Tensor2::from_vec(2, 8, (0..16).map(|i| i as f32 / 7.0 - 1.0).collect()).unwrap();
        assert_eq!(ck.query.infer(&x).unwrap(), back.query.infer(&x).unwrap());
    }

    #[test]
    fn identity_checkpoint_has_no_blobs() {
        let ck = Checkpoint {
            header: CheckpointHeader {
                method: "identity".into(),
                query: TransformConfig::Identity { dim: 4 },
                gallery: TransformConfig::Identity { dim: 4 },
                head: None,
                plan: None,
            },
            query: identity(4),
            gallery: identity(4),
            head: None,
        };
        assert!(ck.blobs().is_empty());
        let back = decode_checkpoint(&encode_checkpoint(&ck).unwrap()).unwrap();
        assert_eq!(back.query.kind(), "identity");
    }

    #[test]
    fn mismatched_config_names_the_blob() {
        let ck = trained_like(1);
        let (_, blobs) = decode_blobs(&encode_checkpoint(&ck).unwrap()).unwrap();
        let mut wider =
            build_transform::<f32>(TransformConfig::Rbt(RbtConfig::face(8, 16, 2)), 0).unwrap();
        match restore_net(&mut wider, "q", &blobs) {
            Err(Error::BlobShape { name, .. }) => assert_eq!(name, "q.stem.0.fc.weight"),
            other => panic!("unexpected {other:?}"),
        }
        let mut deeper =
            build_transform::<f32>(TransformConfig::Rbt(RbtConfig::face(8, 8, 3)), 0).unwrap();
        assert!(matches!(
            restore_net(&mut deeper, "q", &blobs),
            Err(Error::MissingBlob(_))
        ));
    }

    #[test]
    fn newer_version_requires_upgrade() {
        let mut bytes = encode_checkpoint(&trained_like(2)).unwrap();
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        let err = decode_checkpoint(&bytes).unwrap_err();
        assert!(matches!(
            err,
            Error::Version {
                expected: 1,
                found: 7
            }
        ));
        assert!(err.to_string().contains("upgraded"));
    }
}
