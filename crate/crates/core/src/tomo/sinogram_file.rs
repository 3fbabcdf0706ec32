//! Standalone sinogram files: magic `CTSN`, version `u16`, `num_angles u32`,
//! `num_detectors u32`, then row-major `f32` little-endian data.

use std::fs;
use std::path::Path;

use super::Sinogram;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CTSN";
pub const VERSION: u16 = 1;

pub fn write_sinogram(path: &Path, sino: &Sinogram) -> Result<()> {
    let mut b = Vec::with_capacity(14 + 4 * sino.data().len());
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.extend_from_slice(&(sino.num_angles() as u32).to_le_bytes());
    b.extend_from_slice(&(sino.num_detectors() as u32).to_le_bytes());
    for &v in sino.data() {
        b.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, b).map_err(|e| Error::io(path, e))
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    let b = fs::read(path).map_err(|e| Error::io(path, e))?;
    if b.len() < 14 || &b[..4] != MAGIC {
        return Err(Error::format(path, "not a CTSN sinogram (bad magic)"));
    }
    let version = u16::from_le_bytes([b[4], b[5]]);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported sinogram version {version}")));
    }
    let na = u32::from_le_bytes(b[6..10].try_into().unwrap()) as usize;
    let nd = u32::from_le_bytes(b[10..14].try_into().unwrap()) as usize;
    if b.len() != 14 + 4 * na * nd {
        return Err(Error::format(path, "sinogram data length does not match its header"));
    }
    let data = b[14..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    Sinogram::from_vec(na, nd, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.ctsn");
        let s = Sinogram::from_vec(2, 3, vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]).unwrap();
        write_sinogram(&p, &s).unwrap();
        assert_eq!(read_sinogram(&p).unwrap(), s);
        std::fs::write(&p, b"nope").unwrap();
        assert!(read_sinogram(&p).unwrap_err().to_string().contains("s.ctsn"));
    }
}
