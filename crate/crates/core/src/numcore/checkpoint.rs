//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "SICACKPT"
//! version   u32      = 1
//! count     u32      number of parameter records
//! record*   name_len u32, name bytes (UTF-8), rank u32, dims u64 * rank,
//!           payload f64 * prod(dims)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SICACKPT";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_params<W: Write>(params: &ParamSet, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params.iter() {
        let name = p.name().as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let (r, c) = p.value().shape();
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&(r as u64).to_le_bytes())?;
        w.write_all(&(c as u64).to_le_bytes())?;
        for v in p.value().data() {
            w.write_all(&v.to_le_bytes())?;
        }
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

pub fn read_params<R: Read>(mut r: R) -> Result<ParamSet> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a parameter checkpoint".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("non-UTF-8 parameter name".into()))?;
        let rank = read_u32(&mut r)?;
        let (rows, cols) = match rank {
            1 => (1, read_u64(&mut r)? as usize),
            2 => (read_u64(&mut r)? as usize, read_u64(&mut r)? as usize),
            other => return Err(Error::Checkpoint(format!("`{name}` has unsupported rank {other}"))),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        params.add(name, Tensor::from_vec(rows, cols, data))?;
    }
    Ok(params)
}

pub fn save(params: &ParamSet, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_params(params, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ParamSet> {
    let file = std::fs::File::open(path)?;
    read_params(std::io::BufReader::new(file))
}

/// Loads values into an existing set, rejecting any layout difference.
pub fn load_into(params: &mut ParamSet, path: impl AsRef<Path>) -> Result<()> {
    let loaded = load(path)?;
    params.check_layout(&loaded)?;
    params.copy_values_from(&loaded)
}
