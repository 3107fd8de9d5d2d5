//! Binary magnetization file format.
//!
//! Layout (all little-endian):
//!   bytes 0..8   magic b"HELIMAG\0"
//!   bytes 8..12  format version, u32 (currently 1)
//!   bytes 12..36 dims, three u64
//!   bytes 36..44 grid spacing h, f64
//!   then nx*ny*nz cell vectors as (m1, m2, m3) f64 triples in the
//!   row-major cell order (i*ny + j)*nz + k.

use crate::energy::Magnetization;
use crate::{Error, Result, Vec3};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"HELIMAG\0";
const VERSION: u32 = 1;

pub fn write_magnetization(w: &mut impl Write, m: &Magnetization) -> Result<()> {
    let io = |e: std::io::Error| Error::Invalid(format!("write failed: {}", e));
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    for d in m.dims {
        w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
    }
    w.write_all(&m.h.to_le_bytes()).map_err(io)?;
    for v in &m.data {
        for c in 0..3 {
            w.write_all(&v[c].to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_magnetization(r: &mut impl Read) -> Result<Magnetization> {
    let io = |e: std::io::Error| Error::Invalid(format!("read failed: {}", e));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Invalid("not a magnetization file (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(io)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Invalid(format!(
            "unsupported format version {}",
            version
        )));
    }
    let mut b8 = [0u8; 8];
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        r.read_exact(&mut b8).map_err(io)?;
        let v = u64::from_le_bytes(b8);
        if v == 0 || v > u32::MAX as u64 {
            return Err(Error::Invalid(format!("bad dimension {}", v)));
        }
        *d = v as usize;
    }
    r.read_exact(&mut b8).map_err(io)?;
    let h = f64::from_le_bytes(b8);
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|p| p.checked_mul(dims[2]))
        .ok_or_else(|| Error::Invalid("dimension overflow".into()))?;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v = Vec3::zeros();
        for c in 0..3 {
            r.read_exact(&mut b8).map_err(io)?;
            v[c] = f64::from_le_bytes(b8);
        }
        data.push(v);
    }
    Magnetization::new(dims, h, data)
}

pub fn save_magnetization(path: impl AsRef<Path>, m: &Magnetization) -> Result<()> {
    let f = std::fs::File::create(path.as_ref())
        .map_err(|e| Error::Invalid(format!("cannot create {}: {}", path.as_ref().display(), e)))?;
    let mut w = std::io::BufWriter::new(f);
    write_magnetization(&mut w, m)?;
    w.flush()
        .map_err(|e| Error::Invalid(format!("flush failed: {}", e)))
}

pub fn load_magnetization(path: impl AsRef<Path>) -> Result<Magnetization> {
    let f = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Invalid(format!("cannot open {}: {}", path.as_ref().display(), e)))?;
    read_magnetization(&mut std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let m = Magnetization::helix([2, 3, 5], 0.25, 1.7, 0.3).unwrap();
        let mut buf = Vec::new();
        write_magnetization(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 24 + 8 + 2 * 3 * 5 * 24);
        let back = read_magnetization(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_garbage() {
        let buf = vec![0u8; 64];
        assert!(read_magnetization(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn rejects_wrong_version() {
        let m = Magnetization::helix([1, 1, 2], 0.5, 0.0, 0.0).unwrap();
        let mut buf = Vec::new();
        write_magnetization(&mut buf, &m).unwrap();
        buf[8] = 99;
        assert!(read_magnetization(&mut buf.as_slice()).is_err());
    }
}
