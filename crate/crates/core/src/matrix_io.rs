//! Little-endian binary matrix files and CSV export.
//!
//! Layout of the binary form:
//!
//! | offset | size | content                         |
//! |--------|------|---------------------------------|
//! | 0      | 8    | magic `PHMMAT01`                |
//! | 8      | 8    | row count, `u64` LE             |
//! | 16     | 8    | column count, `u64` LE          |
//! | 24     | 8·rc | `f64` LE payload, row-major     |

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{PhmError, Result};

pub const MAGIC: &[u8; 8] = b"PHMMAT01";
const HEADER_LEN: usize = 24;

/// Encode a matrix in the binary format.
pub fn encode(m: &DMatrix<f64>) -> Vec<u8> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for r in 0..rows {
        for c in 0..cols {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(PhmError::Format("missing matrix header".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| PhmError::Format("matrix dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(PhmError::Format(format!(
            "payload is {} bytes, header announces {rows}x{cols}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, encode(m))?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    decode(&fs::read(path)?)
}

/// Column vector helpers; vectors are stored as n×1 matrices.
pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v))
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(PhmError::Format(format!("expected a column vector, got {} columns", m.ncols())));
    }
    Ok(m.as_slice().to_vec())
}

/// CSV with an optional header line. Values use Rust's shortest round-trip
/// float formatting, so parsing the file back recovers the same bits.
pub fn write_csv(path: impl AsRef<Path>, header: Option<&[&str]>, m: &DMatrix<f64>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    if let Some(h) = header {
        writeln!(f, "{}", h.join(","))?;
    }
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{}", m[(r, c)])).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a numeric CSV. A first line that does not parse as numbers is
/// treated as a header and skipped.
pub fn read_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(PhmError::Format(format!("line {}: {e}", i + 1))),
        }
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PhmError::Format("ragged CSV rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_truncated_payload() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let mut bytes = encode(&m);
        bytes.pop();
        assert!(matches!(decode(&bytes), Err(PhmError::Format(_))));
        assert!(decode(b"NOTAMATRIX").is_err());
    }

    #[test]
    fn payload_is_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let bytes = encode(&m);
        let second = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
        assert_eq!(second, 2.0);
    }

    #[test]
    fn csv_skips_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 2, &[0.1, -2.5e-7, 3.0, f64::MIN_POSITIVE]);
        write_csv(&p, Some(&["a", "b"]), &m).unwrap();
        assert_eq!(read_csv(&p).unwrap(), m);
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(
            rows in 0usize..6,
            cols in 0usize..6,
            seed in proptest::collection::vec(proptest::num::f64::ANY, 36),
        ) {
            let m = DMatrix::from_fn(rows, cols, |r, c| seed[r * 6 + c]);
            let back = decode(&encode(&m)).unwrap();
            prop_assert_eq!(back.shape(), m.shape());
            for (a, b) in back.iter().zip(m.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
