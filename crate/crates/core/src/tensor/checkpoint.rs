//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    "EABN"
//! version  u32
//! count    u64
//! count x { name_len u32, name utf-8, rank u32, dims u64 x rank, data f32 x numel }
//! ```

use std::io::{Read, Write};

use super::{Float, ParamStore, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EABN";
pub const VERSION: u32 = 1;

/// A named tensor as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn write_records<W: Write>(mut out: W, records: &[Record]) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        let name = r.name.as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&(r.shape.len() as u32).to_le_bytes())?;
        for &d in &r.shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(r.data.len() * 4);
        for v in &r.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_records<R: Read>(mut input: R) -> Result<Vec<Record>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::format("not an EABN checkpoint (bad magic)"));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = read_u64(&mut input)?;
    let mut records = Vec::new();
    for _ in 0..count {
        let len = read_u32(&mut input)? as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::format("checkpoint parameter name is not UTF-8"))?;
        let rank = read_u32(&mut input)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(&mut input).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let mut raw = vec![0u8; numel * 4];
        input.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push(Record { name, shape, data });
    }
    Ok(records)
}

/// Every parameter and buffer of a store, in insertion order.
pub fn store_records<T: Float>(store: &ParamStore<T>) -> Vec<Record> {
    store
        .iter()
        .map(|(_, p)| Record {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            data: p.value.data().iter().map(|v| v.as_f64() as f32).collect(),
        })
        .collect()
}

/// Overwrites store values from records; every store entry must be present.
pub fn load_into<T: Float>(store: &mut ParamStore<T>, records: &[Record]) -> Result<()> {
    let mut loaded = ParamStore::<f32>::new();
    for r in records {
        if loaded.find(&r.name).is_some() {
            return Err(Error::format(format!("duplicate parameter {}", r.name)));
        }
        loaded.add(&r.name, Tensor::new(&r.shape, r.data.clone())?);
    }
    store.load_from(&loaded)
}
