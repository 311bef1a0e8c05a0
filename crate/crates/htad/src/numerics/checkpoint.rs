//! Checkpoint file format.
//!
//! Single little-endian binary file:
//!
//! ```text
//! magic "HTADCKPT" | version u32 | step u64 | meta_len u64 | meta (UTF-8 JSON)
//! n_params u32
//! per parameter: name_len u16, name, ndims u8, dims u64 x ndims,
//!                value f64 x len, adam_m f64 x len, adam_v f64 x len
//! ```
//!
//! Parameters are written in store insertion order, so saving the same store
//! twice yields byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::store::ParameterStore;
use crate::numerics::tensor::Tensor;

const MAGIC: &[u8; 8] = b"HTADCKPT";
const VERSION: u32 = 1;

fn write_f64s(w: &mut impl Write, data: &[f64]) -> Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_buf(r: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let b = read_exact_buf(r, 2)?;
    Ok(u16::from_le_bytes([b[0], b[1]]))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let b = read_exact_buf(r, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let b = read_exact_buf(r, 8)?;
    Ok(u64::from_le_bytes(b.try_into().unwrap()))
}

fn read_f64s(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let raw = read_exact_buf(r, len * 8)?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Write `store` plus an opaque metadata string to `path`.
pub fn save(store: &ParameterStore, meta: &str, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&store.step().to_le_bytes())?;
    let meta_bytes = meta.as_bytes();
    w.write_all(&(meta_bytes.len() as u64).to_le_bytes())?;
    w.write_all(meta_bytes)?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(Error::Checkpoint("parameter name too long".into()));
        }
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        let tensor = store.value(id);
        let shape = tensor.shape();
        w.write_all(&[shape.len() as u8])?;
        for d in shape {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        write_f64s(&mut w, tensor.data())?;
        let (m, v) = store.adam_state(id);
        write_f64s(&mut w, m)?;
        write_f64s(&mut w, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint back into a fresh store; returns `(store, meta)`.
pub fn load(path: &Path) -> Result<(ParameterStore, String)> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact_buf(&mut r, 8)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: not a checkpoint file",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let step = read_u64(&mut r)?;
    let meta_len = read_u64(&mut r)? as usize;
    let meta = String::from_utf8(read_exact_buf(&mut r, meta_len)?)
        .map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;
    let n_params = read_u32(&mut r)? as usize;

    let mut store = ParameterStore::new();
    for _ in 0..n_params {
        let name_len = read_u16(&mut r)? as usize;
        let name = String::from_utf8(read_exact_buf(&mut r, name_len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let ndims = read_exact_buf(&mut r, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            shape.push(read_u64(&mut r)? as usize);
        }
        let len: usize = shape.iter().product();
        let value = read_f64s(&mut r, len)?;
        let m = read_f64s(&mut r, len)?;
        let v = read_f64s(&mut r, len)?;
        let id = store.insert(&name, Tensor::from_vec(&shape, value)?)?;
        let (ms, vs) = store.adam_state_mut(id);
        ms.copy_from_slice(&m);
        vs.copy_from_slice(&v);
    }
    store.set_step(step);
    Ok((store, meta))
}
