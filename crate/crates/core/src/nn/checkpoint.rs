//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "TRAFONN\0"
//! 8       4     format version (u32)
//! 12      8     header length H (u64)
//! 20      H     UTF-8 JSON NetworkSpec
//! 20+H    8     parameter count P (u64)
//! 28+H    8*P   parameters as f64, layer order, weights then bias
//! 28+H+8P 32    SHA-256 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"TRAFONN\0";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

pub fn encode(net: &Network) -> Vec<u8> {
    let header = serde_json::to_vec(net.spec()).expect("spec serializes");
    let mut out = Vec::with_capacity(64 + header.len() + 8 * net.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for (w, b) in net.layers().iter().filter_map(|l| l.params()) {
        for v in w.data().iter().chain(b.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Integrity {
                offset: self.pos,
                reason: format!(
                    "truncated while reading {what} ({n} bytes wanted, {} left)",
                    self.buf.len() - self.pos
                ),
            }),
        }
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Integrity {
            offset: 0,
            reason: "bad magic, not a checkpoint".into(),
        });
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let hlen = r.u64("header length")? as usize;
    let header_at = r.pos;
    let header = r.take(hlen, "header")?;
    let pcount = r.u64("parameter count")? as usize;
    let params_at = r.pos;
    let raw = r.take(pcount.saturating_mul(8), "parameters")?;
    let body_end = r.pos;
    let digest = r.take(DIGEST_LEN, "checksum")?;
    if r.pos != bytes.len() {
        return Err(Error::Integrity {
            offset: r.pos,
            reason: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    if Sha256::digest(&bytes[..body_end]).as_slice() != digest {
        return Err(Error::Integrity {
            offset: body_end,
            reason: "checksum mismatch".into(),
        });
    }
    let spec: NetworkSpec = serde_json::from_slice(header).map_err(|e| Error::Integrity {
        offset: header_at,
        reason: format!("malformed header: {e}"),
    })?;
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let template = Network::new(spec.clone(), 0)?;
    if template.param_count() != pcount {
        return Err(Error::Integrity {
            offset: params_at,
            reason: format!(
                "spec needs {} parameters, file holds {pcount}",
                template.param_count()
            ),
        });
    }
    let mut blocks = Vec::new();
    let mut at = 0;
    for (w, b) in template.layers().iter().filter_map(|l| l.params()) {
        let wv = values[at..at + w.len()].to_vec();
        at += w.len();
        let bv = values[at..at + b.len()].to_vec();
        at += b.len();
        blocks.push((Tensor::new(w.shape().to_vec(), wv)?, Tensor::new(b.shape().to_vec(), bv)?));
    }
    Network::from_params(spec, blocks)
}

pub fn save_checkpoint(path: &Path, net: &Network) -> Result<()> {
    fs::write(path, encode(net))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    decode(&fs::read(path)?)
}
