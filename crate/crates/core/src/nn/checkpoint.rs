//! Parameter checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "INTMCKPT"
//! version    u32       1
//! meta_len   u32       followed by meta_len bytes of UTF-8 (architecture description)
//! count      u32       number of parameter entries
//! entry*:
//!   name_len u32, name (UTF-8)
//!   ndim     u32, dims: ndim x u64
//!   values   product(dims) x f64 (IEEE-754, little-endian), row-major
//! ```
//!
//! Values are always stored as 64-bit floats whatever the training precision.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::model::Model;
use super::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"INTMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Decoded checkpoint contents.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: String,
    pub entries: Vec<(String, Tensor<f64>)>,
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_string<R: Read>(r: &mut R, len: usize) -> Result<String> {
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| Error::Format("non UTF-8 string in checkpoint".into()))
}

pub fn write_checkpoint<T: Real, M: Model<T>, W: Write>(w: &mut W, meta: &str, model: &M) -> Result<()> {
    let params = model.named_params();
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    put_u32(w, meta.len() as u32)?;
    w.write_all(meta.as_bytes())?;
    put_u32(w, params.len() as u32)?;
    for (name, p) in params {
        put_u32(w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        put_u32(w, p.value.shape().len() as u32)?;
        for &d in p.value.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in p.value.data() {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = get_u32(r)? as usize;
    let meta = get_string(r, meta_len)?;
    let count = get_u32(r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = get_u32(r)? as usize;
        let name = get_string(r, name_len)?;
        let ndim = get_u32(r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(get_u64(r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        entries.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok(Checkpoint { meta, entries })
}

/// Copy checkpoint values into `model`, matching by name and shape.
pub fn load_into<T: Real, M: Model<T>>(model: &mut M, ckpt: &Checkpoint) -> Result<()> {
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    if names.len() != ckpt.entries.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} entries, model has {}",
            ckpt.entries.len(),
            names.len()
        )));
    }
    let mut params = model.params_mut();
    for (name, p) in names.iter().zip(params.iter_mut()) {
        let (_, t) = ckpt
            .entries
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks parameter {name}")))?;
        if t.shape() != p.value.shape() {
            return Err(Error::Format(format!(
                "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t.cast();
        p.zero_grad();
    }
    Ok(())
}
