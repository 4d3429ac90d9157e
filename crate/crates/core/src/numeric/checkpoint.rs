//! Parameter checkpoint: `magic, version, registry, data`.
//!
//! ```text
//! b"NIRECKPT"                magic
//! u32                        version
//! u32                        parameter count
//! per parameter:
//!   u32 name length, name bytes (utf-8)
//!   u8  row_sparse flag
//!   u32 rank, then rank x u64 dims
//! per parameter, registry order:
//!   row-major f32 values
//! ```
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use super::params::ParamStore;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NIRECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::io("<checkpoint stream>", e)
}

pub fn write_checkpoint<W: Write>(params: &ParamStore, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC).map_err(io_err)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(params.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (_, p) in params.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name).map_err(io_err)?;
        w.write_all(&[u8::from(p.row_sparse)]).map_err(io_err)?;
        w.write_all(&(p.shape.len() as u32).to_le_bytes()).map_err(io_err)?;
        for d in &p.shape {
            w.write_all(&(*d as u64).to_le_bytes()).map_err(io_err)?;
        }
    }
    let mut buf = Vec::new();
    for (_, p) in params.iter() {
        buf.clear();
        buf.reserve(p.data.len() * 4);
        for v in &p.data {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamStore> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("checkpoint magic mismatch".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut registry = Vec::with_capacity(count);
    for _ in 0..count {
        let n = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; n];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("parameter name is not utf-8".into()))?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag).map_err(io_err)?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(io_err)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        registry.push((name, flag[0] != 0, shape));
    }
    let mut store = ParamStore::new();
    for (name, sparse, shape) in registry {
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes).map_err(io_err)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        store.add(name, shape, data, sparse)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_at_f32_precision() {
        let mut s = ParamStore::new();
        s.add("embedding", vec![2, 3], vec![0.1, -0.2, 0.3, 1.5, 2.5, -3.25], true).unwrap();
        s.add("bias", vec![1], vec![0.7], false).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&s, &mut buf).unwrap();
        assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        for ((_, a), (_, b)) in s.iter().zip(back.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            assert_eq!(a.row_sparse, b.row_sparse);
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
        // a second pass through f32 is lossless
        let mut buf2 = Vec::new();
        write_checkpoint(&back, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(matches!(read_checkpoint(&b"NOTACKPT\x01\0\0\0"[..]), Err(Error::Format(_))));
    }
}
