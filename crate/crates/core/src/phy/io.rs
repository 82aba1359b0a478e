//! Dataset file format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic           8 bytes  "INTMDSET"
//! format_version  u32      currently 1
//! m, n, k, taps   4 × u32
//! scenario_hash   u64      CellScenario::hash64
//! count           u64      number of records
//! record × count:
//!   seed          u64
//!   sinr_db       f64
//!   taps          m·n·taps complex
//!   h_true        m·n·k complex
//!   h_clean_est   m·n·k complex
//!   h_int_est     m·n·k complex
//! ```
//!
//! Complex values are stored as `(re: f64, im: f64)` in row-major
//! `[m][n][·]` order.

use std::io::{Read, Write};

use ndarray::Array3;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::channel::{CArray3, ChannelRealization};
use super::dataset::EstimatePair;

pub const DATASET_MAGIC: &[u8; 8] = b"INTMDSET";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub taps: usize,
    pub scenario_hash: u64,
}

fn put_array<T: Real, W: Write>(w: &mut W, a: &CArray3<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(a.len() * 16);
    for v in a.iter() {
        buf.extend_from_slice(&v.re.as_f64().to_le_bytes());
        buf.extend_from_slice(&v.im.as_f64().to_le_bytes());
    }
    w.write_all(&buf)?;
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

fn get_array<T: Real, R: Read>(r: &mut R, dim: (usize, usize, usize)) -> Result<CArray3<T>> {
    let len = dim.0 * dim.1 * dim.2;
    let mut buf = vec![0u8; len * 16];
    r.read_exact(&mut buf)?;
    let vals: Vec<Complex<T>> = buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex::new(T::lit(re), T::lit(im))
        })
        .collect();
    Array3::from_shape_vec(dim, vals).map_err(|e| Error::Format(e.to_string()))
}

/// Writes `pairs` with a header; all pairs must share one shape.
pub fn write_dataset<T: Real, W: Write>(w: &mut W, scenario_hash: u64, pairs: &[EstimatePair<T>]) -> Result<()> {
    let first = pairs.first().ok_or_else(|| Error::Empty("no records to write".into()))?;
    let (m, n, k) = first.h_true.dims();
    let taps = first.h_true.taps.dim().2;
    w.write_all(DATASET_MAGIC)?;
    for v in [DATASET_VERSION, m as u32, n as u32, k as u32, taps as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&scenario_hash.to_le_bytes())?;
    w.write_all(&(pairs.len() as u64).to_le_bytes())?;
    for p in pairs {
        if p.h_true.dims() != (m, n, k)
            || p.h_true.taps.dim() != (m, n, taps)
            || p.h_clean_est.dim() != (m, n, k)
            || p.h_int_est.dim() != (m, n, k)
        {
            return Err(Error::Shape("dataset records differ in shape".into()));
        }
        w.write_all(&p.seed.to_le_bytes())?;
        w.write_all(&p.sinr_db.to_le_bytes())?;
        put_array(w, &p.h_true.taps)?;
        put_array(w, &p.h_true.h)?;
        put_array(w, &p.h_clean_est)?;
        put_array(w, &p.h_int_est)?;
    }
    Ok(())
}

pub fn read_dataset<T: Real, R: Read>(r: &mut R) -> Result<(DatasetHeader, Vec<EstimatePair<T>>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format("not a dataset file".into()));
    }
    let version = get_u32(r)?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let m = get_u32(r)? as usize;
    let n = get_u32(r)? as usize;
    let k = get_u32(r)? as usize;
    let taps = get_u32(r)? as usize;
    let header = DatasetHeader { format_version: version, m, n, k, taps, scenario_hash: get_u64(r)? };
    let count = get_u64(r)?;
    let mut pairs = Vec::new();
    for _ in 0..count {
        let seed = get_u64(r)?;
        let sinr_db = f64::from_bits(get_u64(r)?);
        let taps_arr = get_array(r, (m, n, taps))?;
        let h = get_array(r, (m, n, k))?;
        pairs.push(EstimatePair {
            h_true: ChannelRealization { h, taps: taps_arr },
            h_clean_est: get_array(r, (m, n, k))?,
            h_int_est: get_array(r, (m, n, k))?,
            sinr_db,
            seed,
        });
    }
    Ok((header, pairs))
}
