//! Versioned binary checkpoint container.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes  b"TNCK"
//! version      u32      currently 1
//! meta_len     u32      length of the JSON metadata blob
//! meta         meta_len bytes of UTF-8 JSON (architecture descriptor etc.)
//! n_tensors    u32
//! per tensor:
//!   name_len   u16
//!   name       name_len bytes UTF-8
//!   ndim       u8
//!   dims       ndim x u32
//!   values     product(dims) x f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::NnError;

use super::params::ParamSet;
use super::tape::Tensor;

const MAGIC: &[u8; 4] = b"TNCK";
const VERSION: u32 = 1;

pub fn save(path: &Path, meta: &serde_json::Value, params: &ParamSet) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let meta_bytes = serde_json::to_vec(meta).expect("metadata serializes");
    w.write_all(&(meta_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&meta_bytes)?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (_, p) in params.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[p.tensor.shape.len() as u8])?;
        for d in &p.tensor.shape {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for v in &p.tensor.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(serde_json::Value, ParamSet), NnError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::CheckpointFormat("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::CheckpointFormat(format!("unsupported version {version}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes)?;
    let meta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| NnError::CheckpointFormat(format!("metadata: {e}")))?;
    let n_tensors = read_u32(&mut r)? as usize;
    let mut params = ParamSet::new();
    for _ in 0..n_tensors {
        let mut nl = [0u8; 2];
        r.read_exact(&mut nl)?;
        let mut name = vec![0u8; u16::from_le_bytes(nl) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| NnError::CheckpointFormat("non-utf8 tensor name".into()))?;
        let mut ndim = [0u8; 1];
        r.read_exact(&mut ndim)?;
        let mut shape = Vec::with_capacity(ndim[0] as usize);
        for _ in 0..ndim[0] {
            shape.push(read_u32(&mut r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        params.register(&name, Tensor::new(shape, data));
    }
    Ok((meta, params))
}

fn read_u32(r: &mut impl Read) -> Result<u32, NnError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.tnck");
        let mut params = ParamSet::new();
        params.register("a.w", Tensor::new(vec![2, 3], vec![1.0, -2.5, 0.0, 3.25, 1e-12, 7.0]));
        params.register("a.b", Tensor::new(vec![2], vec![0.5, -0.5]));
        let meta = serde_json::json!({"kind": "test", "latent_dim": 128});
        save(&path, &meta, &params).unwrap();
        let (m2, p2) = load(&path).unwrap();
        assert_eq!(m2, meta);
        assert_eq!(p2.len(), 2);
        assert_eq!(p2.get(p2.by_name("a.w").unwrap()).tensor, params.get(params.by_name("a.w").unwrap()).tensor);
    }
}
