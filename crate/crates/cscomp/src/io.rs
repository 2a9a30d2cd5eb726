//! CMPX v1 — the on-disk format for complex matrices (F, X, Y).
//!
//! Layout: magic `CMPX` (4 bytes) · version 1 (1 byte) · dtype 0 = two
//! IEEE-754 f64 per value (1 byte) · reserved zero (2 bytes) · row count ·
//! column count (u32 little-endian each) · rows·cols values in column-major
//! order, each stored as real then imaginary little-endian f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;

const MAGIC: &[u8; 4] = b"CMPX";
const VERSION: u8 = 1;
const DTYPE_C128: u8 = 0;

pub(crate) fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("truncated file while reading {what}")))
}

pub(crate) fn read_u32_le(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64_le(r: &mut impl Read, what: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(f64::from_le_bytes(b))
}

/// Write a complex matrix to `path` in CMPX v1 format.
pub fn write_cmpx(path: impl AsRef<Path>, a: &CMat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, DTYPE_C128, 0, 0])?;
    w.write_all(&(a.nrows() as u32).to_le_bytes())?;
    w.write_all(&(a.ncols() as u32).to_le_bytes())?;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let z = a[[i, j]];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a complex matrix from a CMPX v1 file.
pub fn read_cmpx(path: impl AsRef<Path>) -> Result<CMat> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 8];
    read_exact(&mut r, &mut head, "CMPX header")?;
    if &head[0..4] != MAGIC {
        return Err(Error::Format("bad magic, expected CMPX".into()));
    }
    if head[4] != VERSION {
        return Err(Error::Format(format!("unsupported CMPX version {}", head[4])));
    }
    if head[5] != DTYPE_C128 {
        return Err(Error::Format(format!("unsupported CMPX dtype {}", head[5])));
    }
    if head[6] != 0 || head[7] != 0 {
        return Err(Error::Format("nonzero reserved bytes in CMPX header".into()));
    }
    let rows = read_u32_le(&mut r, "CMPX row count")? as usize;
    let cols = read_u32_le(&mut r, "CMPX column count")? as usize;
    let mut a: CMat = Array2::zeros((rows, cols));
    for j in 0..cols {
        for i in 0..rows {
            let re = read_f64_le(&mut r, "CMPX payload")?;
            let im = read_f64_le(&mut r, "CMPX payload")?;
            a[[i, j]] = Complex64::new(re, im);
        }
    }
    let mut tail = [0u8; 1];
    match r.read(&mut tail)? {
        0 => Ok(a),
        _ => Err(Error::Format("trailing bytes after CMPX payload".into())),
    }
}
