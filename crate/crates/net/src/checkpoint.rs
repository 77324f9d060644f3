//! Binary checkpoint: magic `VXC1`, 32-byte config digest, JSON network
//! config, tensor table `(name, rows, cols, byte offset)`, then the
//! little-endian f32 payload.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{NetError, Result};
use crate::mat::Mat;
use crate::model::{Model, NetConfig};

pub const MAGIC: &[u8; 4] = b"VXC1";

pub fn encode(model: &Model) -> Vec<u8> {
    let cfg = serde_json::to_vec(&model.config).expect("config serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&model.config.digest());
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    let tensors = model.params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.value.rows as u32).to_le_bytes());
        out.extend_from_slice(&(t.value.cols as u32).to_le_bytes());
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 4 * t.value.len() as u64;
    }
    for t in tensors {
        for v in &t.value.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| NetError::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NetError::Checkpoint("bad magic".into()));
    }
    let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
    let n = r.u32()? as usize;
    let config: NetConfig = serde_json::from_slice(r.take(n)?)
        .map_err(|e| NetError::Checkpoint(format!("config: {e}")))?;
    if config.digest() != digest {
        return Err(NetError::Checkpoint("config digest mismatch".into()));
    }
    let count = r.u32()? as usize;
    let mut table = HashMap::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| NetError::Checkpoint("tensor name is not UTF-8".into()))?;
        let (rows, cols, off) = (r.u32()? as usize, r.u32()? as usize, r.u64()? as usize);
        table.insert(name, (rows, cols, off));
    }
    let payload = &bytes[r.pos..];
    let model = Model::from_tensors(config, |name, rows, cols| {
        let &(r0, c0, off) = table
            .get(name)
            .ok_or_else(|| NetError::Checkpoint(format!("missing tensor {name}")))?;
        if (r0, c0) != (rows, cols) {
            return Err(NetError::Checkpoint(format!("tensor {name}: shape ({r0}, {c0}), expected ({rows}, {cols})")));
        }
        let end = off + 4 * rows * cols;
        let raw = payload
            .get(off..end)
            .ok_or_else(|| NetError::Checkpoint(format!("tensor {name} out of range")))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(Mat::from_vec(rows, cols, data))
    })?;
    if model.params.len() != count {
        return Err(NetError::Checkpoint(format!(
            "{count} tensors in file, model has {}",
            model.params.len()
        )));
    }
    Ok(model)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model> {
    decode(&std::fs::read(path)?)
}
