//! Binary feature matrices and text label files.
//!
//! A feature file is the 8-byte magic `MERFEAT1`, the row count N and column
//! count D as little-endian u64, then N·D little-endian f64 values in
//! row-major order. Nothing may follow the payload.

use std::fs;
use std::path::Path;

use merdg_core::Matrix;

use crate::error::{LabError, Result};

pub const MAGIC: &[u8; 8] = b"MERFEAT1";
pub const HEADER_LEN: usize = 24;

/// A malformed feature buffer: what went wrong and at which byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatError {
    pub offset: u64,
    pub message: String,
}

pub fn encode_features(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u64(bytes: &[u8], at: usize) -> std::result::Result<u64, FormatError> {
    match bytes.get(at..at + 8) {
        Some(b) => Ok(u64::from_le_bytes(b.try_into().expect("8 bytes"))),
        None => Err(FormatError {
            offset: bytes.len() as u64,
            message: format!("truncated header: expected {HEADER_LEN} bytes, found {}", bytes.len()),
        }),
    }
}

pub fn decode_features(bytes: &[u8]) -> std::result::Result<Matrix, FormatError> {
    if let Some(i) = (0..MAGIC.len()).find(|&i| bytes.get(i) != Some(&MAGIC[i])) {
        let message = if i >= bytes.len() {
            format!("truncated magic: file has {} bytes", bytes.len())
        } else {
            "bad magic, expected MERFEAT1".to_string()
        };
        return Err(FormatError {
            offset: i as u64,
            message,
        });
    }
    let n = read_u64(bytes, 8)?;
    let d = read_u64(bytes, 16)?;
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| FormatError {
            offset: 8,
            message: format!("shape {n}x{d} overflows"),
        })?;
    let len = bytes.len() as u64;
    if len < expected {
        return Err(FormatError {
            offset: len,
            message: format!("truncated payload: {n}x{d} needs {expected} bytes, file ends at byte {len}"),
        });
    }
    if len > expected {
        return Err(FormatError {
            offset: expected,
            message: format!("{} trailing bytes after the {n}x{d} payload", len - expected),
        });
    }
    let mut data = Vec::with_capacity((n * d) as usize);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(FormatError {
                offset: (HEADER_LEN + 8 * i) as u64,
                message: format!("non-finite value {v}"),
            });
        }
        data.push(v);
    }
    Ok(Matrix::new(n as usize, d as usize, data).expect("length and finiteness checked"))
}

pub fn write_features(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, encode_features(m)).map_err(|e| LabError::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    decode_features(&bytes).map_err(|e| LabError::Format {
        path: path.to_path_buf(),
        offset: e.offset,
        message: e.message,
    })
}

/// One label per line, each followed by a line feed.
pub fn encode_labels(labels: &[usize]) -> String {
    let mut out = String::with_capacity(labels.len() * 2);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}

/// Parses one non-negative integer per line; a final line feed is optional.
/// Errors carry the 1-based line number.
pub fn parse_labels(text: &str) -> std::result::Result<Vec<usize>, (usize, String)> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split('\n')
        .enumerate()
        .map(|(i, line)| {
            line.trim_end_matches('\r')
                .trim()
                .parse::<usize>()
                .map_err(|_| (i + 1, format!("`{line}` is not a non-negative integer")))
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    fs::write(path, encode_labels(labels)).map_err(|e| LabError::io(path, e))
}

/// Reads a label file; with `rows` set, the line count must match it.
pub fn read_labels(path: &Path, rows: Option<usize>) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let labels = parse_labels(&text).map_err(|(line, message)| LabError::Labels {
        path: path.to_path_buf(),
        line,
        message,
    })?;
    if let Some(n) = rows {
        if labels.len() != n {
            return Err(LabError::Labels {
                path: path.to_path_buf(),
                line: labels.len(),
                message: format!("{} labels for {n} feature rows", labels.len()),
            });
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = Matrix::new(2, 3, vec![0.1, -0.0, 1e-300, f64::MAX, -2.5, 3.0]).unwrap();
        let bytes = encode_features(&m);
        assert_eq!(bytes.len(), 24 + 48);
        let back = decode_features(&bytes).unwrap();
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(back.shape(), (2, 3));
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn header_layout() {
        let bytes = encode_features(&Matrix::new(1, 2, vec![1.0, 2.0]).unwrap());
        assert_eq!(&bytes[..8], b"MERFEAT1");
        assert_eq!(&bytes[8..16], &1u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &2u64.to_le_bytes());
        assert_eq!(&bytes[24..32], &1.0f64.to_le_bytes());
    }

    #[test]
    fn errors_name_offsets() {
        let good = encode_features(&Matrix::new(2, 2, vec![1.0; 4]).unwrap());
        let mut bad = good.clone();
        bad[3] = b'X';
        assert_eq!(decode_features(&bad).unwrap_err().offset, 3);
        assert_eq!(decode_features(&good[..5]).unwrap_err().offset, 5);
        assert_eq!(decode_features(&good[..20]).unwrap_err().offset, 20);
        assert_eq!(decode_features(&good[..40]).unwrap_err().offset, 40);
        let mut long = good.clone();
        long.push(0);
        assert_eq!(decode_features(&long).unwrap_err().offset, 56);
        let mut nan = good;
        nan[32..40].copy_from_slice(&f64::NAN.to_le_bytes());
        assert_eq!(decode_features(&nan).unwrap_err().offset, 32);
    }

    #[test]
    fn empty_matrix() {
        let m = Matrix::new(0, 5, vec![]).unwrap();
        assert_eq!(decode_features(&encode_features(&m)).unwrap().shape(), (0, 5));
    }

    #[test]
    fn labels() {
        assert_eq!(parse_labels("0\n3\n1\n").unwrap(), vec![0, 3, 1]);
        assert_eq!(parse_labels("2\r\n1").unwrap(), vec![2, 1]);
        assert_eq!(parse_labels("").unwrap(), Vec::<usize>::new());
        assert_eq!(parse_labels("0\n-1\n").unwrap_err().0, 2);
        assert_eq!(parse_labels("0\n\n1").unwrap_err().0, 2);
        assert_eq!(encode_labels(&[4, 0]), "4\n0\n");
    }
}
