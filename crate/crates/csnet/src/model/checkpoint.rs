//! Checkpoint file: magic "CSNT", version u32 LE, header length u64 LE,
//! a JSON header mapping parameter name to shape/dtype/offset, then the
//! raw little-endian f64 payload. Round-trips bit-exactly.

use crate::autodiff::Tensor;
use crate::error::{CsError, Result};
use crate::io::atomic_write;
use crate::nn::Params;
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

const MAGIC: &[u8; 4] = b"CSNT";
const VERSION: u32 = 1;

#[derive(serde::Serialize, serde::Deserialize)]
struct Entry {
    shape: [usize; 2],
    dtype: String,
    /// Byte offset into the payload (after the header).
    offset: u64,
}

pub fn save_checkpoint(params: &Params, path: &Path) -> Result<()> {
    let mut header: BTreeMap<String, Entry> = BTreeMap::new();
    let mut offset = 0u64;
    for (name, t) in params.iter() {
        header.insert(
            name.clone(),
            Entry {
                shape: [t.rows, t.cols],
                dtype: "f64".to_string(),
                offset,
            },
        );
        offset += (t.len() * 8) as u64;
    }
    // BTreeMap keys serialize in sorted order, so the header bytes are
    // deterministic for a given parameter set.
    let header_bytes = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(16 + header_bytes.len() + offset as usize);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    for (_, t) in params.iter() {
        for &v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    atomic_write(path, &buf)
}

pub fn load_checkpoint(path: &Path) -> Result<Params> {
    let mut bytes = Vec::new();
    // a missing or unreadable file is an I/O problem, not a malformed
    // checkpoint
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |msg: String| CsError::Checkpoint(format!("{}: {}", path.display(), msg));
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(fail("not a CSNT checkpoint".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(fail(format!("unsupported version {}", version)));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + header_len {
        return Err(fail("truncated header".into()));
    }
    let header: BTreeMap<String, Entry> = serde_json::from_slice(&bytes[16..16 + header_len])?;
    let payload = &bytes[16 + header_len..];
    let mut params = Params::new();
    for (name, entry) in header {
        if entry.dtype != "f64" {
            return Err(fail(format!("{}: unsupported dtype {}", name, entry.dtype)));
        }
        let count = entry.shape[0] * entry.shape[1];
        let start = entry.offset as usize;
        let end = start + count * 8;
        if end > payload.len() {
            return Err(fail(format!("{}: payload out of range", name)));
        }
        let data: Vec<f64> = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.insert(name, Tensor::new(entry.shape[0], entry.shape[1], data)?)?;
    }
    Ok(params)
}
