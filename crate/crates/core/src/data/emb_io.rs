//! `EMB1` embedding files.
//!
//! ```text
//! "EMB1" | u32 version (=1) | u32 n | u32 dim | u16 tag_len | tag (UTF-8)
//!        | n*dim f32 row-major | n u32 labels
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::kernel::Tensor2;

pub const EMB_MAGIC: [u8; 4] = *b"EMB1";
pub const EMB_VERSION: u32 = 1;

pub fn encode_embeddings(s: &EmbeddingSet) -> Result<Vec<u8>> {
    let tag = s.model_tag().as_bytes();
    let tag_len = u16::try_from(tag.len())
        .map_err(|_| Error::Config(format!("model tag is {} bytes, limit is 65535", tag.len())))?;
    let n = u32::try_from(s.n()).map_err(|_| Error::Config("too many rows for EMB1".into()))?;
    let dim = u32::try_from(s.dim()).map_err(|_| Error::Config("dimension too large".into()))?;

    let mut out = Vec::with_capacity(18 + tag.len() + 4 * s.n() * (s.dim() + 1));
    out.extend_from_slice(&EMB_MAGIC);
    out.extend_from_slice(&EMB_VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&tag_len.to_le_bytes());
    out.extend_from_slice(tag);
    for v in s.data().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for l in s.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(out)
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "needed {n} bytes for {what} at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        let found = [m[0], m[1], m[2], m[3]];
        if found != expected {
            return Err(Error::Magic { expected, found });
        }
        Ok(())
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = count
            .checked_mul(4)
            .ok_or_else(|| Error::PayloadLength(format!("{what}: {count} floats overflow")))?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode_embeddings(buf: &[u8]) -> Result<EmbeddingSet> {
    let mut r = Reader::new(buf);
    r.magic(EMB_MAGIC)?;
    let version = r.u32("version")?;
    if version != EMB_VERSION {
        return Err(Error::Version {
            expected: EMB_VERSION,
            found: version,
        });
    }
    let n = r.u32("row count")? as usize;
    let dim = r.u32("dimension")? as usize;
    let tag_len = r.u16("tag length")? as usize;
    let tag = std::str::from_utf8(r.take(tag_len, "model tag")?)
        .map_err(|e| Error::PayloadLength(format!("model tag is not UTF-8: {e}")))?
        .to_string();

    let want = n
        .checked_mul(dim)
        .and_then(|v| v.checked_add(n))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::PayloadLength(format!("n={n}, dim={dim} overflow")))?;
    if r.remaining() != want {
        return Err(Error::PayloadLength(format!(
            "header declares {n} x {dim} floats plus {n} labels ({want} bytes), payload has {} bytes",
            r.remaining()
        )));
    }
    let data = r.f32s(n * dim, "embeddings")?;
    let labels = r
        .take(4 * n, "labels")?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingSet::new(Tensor2::from_vec(n, dim, data)?, labels, tag)
}

pub fn save_embeddings(s: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_embeddings(s)?).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&buf)
}
