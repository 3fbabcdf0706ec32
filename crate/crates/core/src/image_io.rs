//! 16-bit binary PGM export.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tomo::Image;

/// Encode `img` as binary PGM (`P5`, maxval 65535, big-endian), mapping `[lo, hi]` linearly
/// to `[0, 65535]` and clamping outside values.
pub fn encode_pgm16(img: &Image, lo: f64, hi: f64) -> Vec<u8> {
    let n = img.size();
    let mut out = format!("P5\n{n} {n}\n65535\n").into_bytes();
    let span = if hi > lo { hi - lo } else { 1.0 };
    for &v in img.data() {
        let q = ((v - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn write_pgm16(path: &Path, img: &Image, lo: f64, hi: f64) -> Result<()> {
    fs::write(path, encode_pgm16(img, lo, hi)).map_err(|e| Error::io(path, e))
}

/// Decode a file written by [`encode_pgm16`] back to `[lo, hi]` values.
pub fn decode_pgm16(bytes: &[u8], lo: f64, hi: f64, path: &Path) -> Result<Image> {
    let bad = || Error::format(path, "not a 16-bit square binary PGM");
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?.to_string());
    }
    pos += 1;
    let (w, h): (usize, usize) = (fields[1].parse().map_err(|_| bad())?, fields[2].parse().map_err(|_| bad())?);
    if fields[0] != "P5" || fields[3] != "65535" || w != h || bytes.len() != pos + 2 * w * h {
        return Err(bad());
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let data = bytes[pos..].chunks_exact(2).map(|c| lo + u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0 * span).collect();
    Image::from_vec(w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_quantization() {
        let img = Image::from_vec(4, (0..16).map(|i| i as f64 / 15.0 - 0.1).collect()).unwrap();
        let bytes = encode_pgm16(&img, 0.0, 1.0);
        assert!(bytes.starts_with(b"P5\n4 4\n65535\n"));
        let back = decode_pgm16(&bytes, 0.0, 1.0, Path::new("x.pgm")).unwrap();
        assert_eq!(back.data()[0], 0.0);
        for (a, b) in img.data().iter().zip(back.data()).skip(2) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }
}
