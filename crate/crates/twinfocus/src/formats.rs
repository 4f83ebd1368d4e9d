//! Binary and text artifact formats.
//!
//! CMX1: `"CMX1"`, u32 LE rows, u32 LE cols, then rows*cols (re, im) f64 LE
//! pairs in row-major order. FRS1: `"FRS1"`, u32 LE frame count, height,
//! width, then one byte per pixel per frame.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::state::ModeGrid;

const CMX_MAGIC: &[u8; 4] = b"CMX1";
const FRS_MAGIC: &[u8; 4] = b"FRS1";

pub fn encode_cmx(m: &DMatrix<Complex64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 16 * m.len());
    out.extend_from_slice(CMX_MAGIC);
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let v = m[(r, c)];
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}

pub fn decode_cmx(bytes: &[u8]) -> Result<DMatrix<Complex64>> {
    if bytes.len() < 12 || &bytes[..4] != CMX_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let rows = u32_at(bytes, 4) as usize;
    let cols = u32_at(bytes, 8) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(16))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows * cols {
        let at = 12 + 16 * i;
        data.push(Complex64::new(f64_at(bytes, at), f64_at(bytes, at + 8)));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_cmx(path: &Path, m: &DMatrix<Complex64>) -> Result<()> {
    fs::write(path, encode_cmx(m))?;
    Ok(())
}

pub fn read_cmx(path: &Path) -> Result<DMatrix<Complex64>> {
    decode_cmx(&fs::read(path)?)
}

/// Real vector stored as a one-row CMX1 matrix.
pub fn write_real_cmx(path: &Path, values: &[f64]) -> Result<()> {
    let m = DMatrix::from_fn(1, values.len(), |_, c| Complex64::new(values[c], 0.0));
    write_cmx(path, &m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub kind: String,
    pub seed: u64,
    pub out_shape: [usize; 2],
    pub in_grid: ModeGrid,
    pub lambda: f64,
    pub focal: f64,
    pub prng: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_sidecar(path: &Path, side: &MatrixSidecar) -> Result<()> {
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(side)?)?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<MatrixSidecar> {
    Ok(serde_json::from_slice(&fs::read(sidecar_path(path))?)?)
}

pub fn encode_frames(n_frames: usize, h: usize, w: usize, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + data.len());
    out.extend_from_slice(FRS_MAGIC);
    for v in [n_frames, h, w] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(data);
    out
}

/// Returns `(n_frames, h, w, pixels)`.
pub fn decode_frames(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    if bytes.len() < 16 || &bytes[..4] != FRS_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let (n, h, w) = (u32_at(bytes, 4) as usize, u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize);
    let len = n.checked_mul(h).and_then(|v| v.checked_mul(w)).ok_or_else(|| Error::Format("overflow".into()))?;
    if bytes.len() != 16 + len {
        return Err(Error::Format(format!("expected {} bytes, found {}", 16 + len, bytes.len())));
    }
    let data = bytes[16..].to_vec();
    if data.iter().any(|&b| b > 1) {
        return Err(Error::Format("frame pixels must be 0 or 1".into()));
    }
    Ok((n, h, w, data))
}

/// 16-bit binary PGM scaled so the maximum maps to 65535. Returns the
/// scale factor (value per count).
pub fn encode_pgm16(h: usize, w: usize, data: &[f64]) -> (Vec<u8>, f64) {
    let max = data.iter().cloned().fold(0.0_f64, f64::max);
    let scale = if max > 0.0 { max / 65535.0 } else { 1.0 };
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for &v in data {
        let count = (v.max(0.0) / scale).round().min(65535.0) as u16;
        out.extend_from_slice(&count.to_be_bytes());
    }
    (out, scale)
}

pub fn encode_csv_image(h: usize, w: usize, data: &[f64]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in 0..h {
        let row: Vec<String> = (0..w).map(|c| format!("{:e}", data[r * w + c])).collect();
        writeln!(out, "{}", row.join(",")).expect("in-memory write");
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cmx_round_trip_identity() {
        let m = DMatrix::<Complex64>::identity(2, 2);
        assert_eq!(decode_cmx(&encode_cmx(&m)).unwrap(), m);
    }

    #[test]
    fn cmx_layout_is_row_major() {
        let m = DMatrix::from_row_slice(1, 2, &[Complex64::new(1.0, 2.0), Complex64::new(3.0, 4.0)]);
        let b = encode_cmx(&m);
        assert_eq!(&b[..4], b"CMX1");
        assert_eq!(u32_at(&b, 4), 1);
        assert_eq!(u32_at(&b, 8), 2);
        assert_eq!(f64_at(&b, 12), 1.0);
        assert_eq!(f64_at(&b, 20), 2.0);
        assert_eq!(f64_at(&b, 28), 3.0);
    }

    #[test]
    fn cmx_rejects_corruption() {
        let mut b = encode_cmx(&DMatrix::<Complex64>::identity(2, 2));
        b[0] = b'X';
        let err = decode_cmx(&b).unwrap_err().to_string();
        assert!(err.contains("bad magic"));
        let b = encode_cmx(&DMatrix::<Complex64>::identity(2, 2));
        assert!(decode_cmx(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn frames_round_trip() {
        let data = vec![0, 1, 1, 0, 0, 0, 1, 1];
        let b = encode_frames(2, 2, 2, &data);
        assert_eq!(decode_frames(&b).unwrap(), (2, 2, 2, data));
        let mut bad = b.clone();
        bad[3] = b'0';
        assert!(decode_frames(&bad).is_err());
    }

    #[test]
    fn pgm_is_max_normalized() {
        let (bytes, scale) = encode_pgm16(1, 2, &[1.0, 2.0]);
        assert!((scale - 2.0 / 65535.0).abs() < 1e-18);
        let header = b"P5\n2 1\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len() + 2..], &65535u16.to_be_bytes());
    }

    #[test]
    fn sha256_matches_known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
