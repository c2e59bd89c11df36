//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     4 bytes  "N2VT"
//! version   u32      CHECKPOINT_VERSION
//! manifest  u64 length + raw bytes (caller-defined, may be empty)
//! count     u64      number of parameters
//! per parameter:
//!   name    u32 length + UTF-8 bytes
//!   ndim    u32      1 or 2
//!   dims    u64 × ndim
//!   values  f64 × numel, IEEE-754 bit patterns
//! ```
//!
//! Values are stored by bit pattern, so save → load round-trips exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, ParamSet, Result, Tensor};

const MAGIC: &[u8; 4] = b"N2VT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, manifest: &[u8], params: &ParamSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(manifest.len() as u64).to_le_bytes())?;
    w.write_all(manifest)?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in params.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(p.tensor.shape.len() as u32).to_le_bytes())?;
        for &d in &p.tensor.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &p.tensor.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Returns the manifest bytes and the parameter set.
pub fn load_checkpoint(path: &Path) -> Result<(Vec<u8>, ParamSet)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::CheckpointFormat("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointFormat(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let manifest_len = read_u64(&mut r)? as usize;
    let mut manifest = vec![0u8; manifest_len];
    r.read_exact(&mut manifest)?;
    let count = read_u64(&mut r)? as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::CheckpointFormat("parameter name is not UTF-8".into()))?;
        let ndim = read_u32(&mut r)? as usize;
        if ndim == 0 || ndim > 2 {
            return Err(Error::CheckpointFormat(format!(
                "parameter {name:?} has unsupported rank {ndim}"
            )));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut values = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        params.insert(&name, Tensor::new(shape, values)?)?;
    }
    Ok((manifest, params))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
