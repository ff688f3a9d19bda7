//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//! `b"BBDECKPT"`, `u32` version, `u32` metadata length and UTF-8 JSON metadata,
//! `u32` tensor count, then per tensor `u32` name length, name, `u32` rank,
//! `u64` per dimension and the `u64` element offset into the value block,
//! then a `u64` element count and the values as `f32`.

use crate::tensor::{ParamStore, Tensor};
use crate::{NnError, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"BBDECKPT";
pub const VERSION: u32 = 1;

pub fn write_to<W: Write>(mut out: W, params: &ParamStore<f32>, metadata: &serde_json::Value) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let meta = serde_json::to_vec(metadata)?;
    out.write_all(&len_u32(meta.len())?.to_le_bytes())?;
    out.write_all(&meta)?;
    out.write_all(&len_u32(params.len())?.to_le_bytes())?;
    let mut offset = 0u64;
    for (name, tensor) in params.iter() {
        out.write_all(&len_u32(name.len())?.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&len_u32(tensor.shape().len())?.to_le_bytes())?;
        for &d in tensor.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        out.write_all(&offset.to_le_bytes())?;
        offset += tensor.len() as u64;
    }
    out.write_all(&offset.to_le_bytes())?;
    for (_, tensor) in params.iter() {
        for &v in tensor.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_from<R: Read>(mut input: R) -> Result<(ParamStore<f32>, serde_json::Value)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic bytes".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = read_u32(&mut input)? as usize;
    let meta = read_bytes(&mut input, meta_len)?;
    let metadata: serde_json::Value = serde_json::from_slice(&meta)?;

    let count = read_u32(&mut input)? as usize;
    let mut table = Vec::with_capacity(count.min(1 << 16));
    let mut expected_offset = 0u64;
    for _ in 0..count {
        let name_len = read_u32(&mut input)? as usize;
        let name = String::from_utf8(read_bytes(&mut input, name_len)?)
            .map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut input)? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(usize::try_from(read_u64(&mut input)?).map_err(|_| NnError::Checkpoint("dimension overflow".into()))?);
        }
        let offset = read_u64(&mut input)?;
        if offset != expected_offset {
            return Err(NnError::Checkpoint(format!(
                "tensor `{name}` starts at {offset}, expected {expected_offset}"
            )));
        }
        let len = shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| NnError::Checkpoint("tensor size overflow".into()))?;
        expected_offset += len;
        table.push((name, shape));
    }
    let total = read_u64(&mut input)?;
    if total != expected_offset {
        return Err(NnError::Checkpoint(format!(
            "value block holds {total} values, table describes {expected_offset}"
        )));
    }

    let mut params = ParamStore::new();
    for (name, shape) in table {
        let len: usize = shape.iter().product();
        let bytes = read_bytes(&mut input, len * 4)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.add(name, Tensor::from_vec(&shape, data)?)?;
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(NnError::Checkpoint("trailing bytes after value block".into()));
    }
    Ok((params, metadata))
}

pub fn save(path: impl AsRef<Path>, params: &ParamStore<f32>, metadata: &serde_json::Value) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_to(std::io::BufWriter::new(file), params, metadata)
}

pub fn load(path: impl AsRef<Path>) -> Result<(ParamStore<f32>, serde_json::Value)> {
    let file = std::fs::File::open(path)?;
    read_from(std::io::BufReader::new(file))
}

fn len_u32(len: usize) -> Result<u32> {
    u32::try_from(len).map_err(|_| NnError::Checkpoint(format!("length {len} exceeds u32")))
}

fn read_bytes<R: Read>(input: &mut R, len: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    input.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(NnError::Checkpoint("unexpected end of file".into()));
    }
    Ok(buf)
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b).map_err(|_| NnError::Checkpoint("unexpected end of file".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b).map_err(|_| NnError::Checkpoint("unexpected end of file".into()))?;
    Ok(u64::from_le_bytes(b))
}
