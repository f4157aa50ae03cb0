//! Series files: a binary format and a one-value-per-line text format.
//!
//! Binary layout is the magic `CLBLKSER`, a little-endian `u64` length and
//! that many little-endian IEEE-754 doubles. Reading does not restore the
//! generating model or seed.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::MagnitudeSeries;

pub const MAGIC: &[u8; 8] = b"CLBLKSER";

/// File layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesFormat {
    Binary,
    Text,
}

impl SeriesFormat {
    /// `.txt`, `.csv` and `.dat` are text; everything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt" | "csv" | "dat") => SeriesFormat::Text,
            _ => SeriesFormat::Binary,
        }
    }
}

pub fn encode_binary(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Parse("not a series file (bad magic)".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let body = &bytes[16..];
    if (body.len() as u64) != len.saturating_mul(8) {
        return Err(Error::Parse(format!(
            "series header says {len} values but file holds {} bytes of data",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Shortest round-trip decimal per line.
pub fn encode_text(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 20);
    for v in values {
        out.push_str(&format!("{v}\n"));
    }
    out
}

/// Blank lines and `#` comments are skipped.
pub fn decode_text(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: `{line}` is not a number", no + 1)))?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_series(series: &MagnitudeSeries, path: &Path, format: SeriesFormat) -> Result<()> {
    match format {
        SeriesFormat::Binary => fs::write(path, encode_binary(series.values()))?,
        SeriesFormat::Text => fs::write(path, encode_text(series.values()))?,
    }
    Ok(())
}

/// Reads either format; binary is recognised by its magic.
pub fn read_series(path: &Path) -> Result<MagnitudeSeries> {
    let bytes = fs::read(path)?;
    let values = if bytes.starts_with(MAGIC) {
        decode_binary(&bytes)?
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Parse("series file is neither binary nor text".into()))?;
        decode_text(&text)?
    };
    MagnitudeSeries::from_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_is_exact() {
        let v = vec![1.0, 0.1 + 0.2, 1e300, 5e-324, 3.25];
        let bytes = encode_binary(&v);
        assert_eq!(&bytes[..8], b"CLBLKSER");
        assert_eq!(bytes.len(), 16 + 40);
        assert_eq!(decode_binary(&bytes).unwrap(), v);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let v = vec![1.0, 0.1 + 0.2, 1e300, 5e-324];
        assert_eq!(decode_text(&encode_text(&v)).unwrap(), v);
    }

    #[test]
    fn truncated_and_garbage_rejected() {
        let mut bytes = encode_binary(&[1.0, 2.0]);
        bytes.pop();
        assert!(decode_binary(&bytes).is_err());
        assert!(decode_binary(b"NOTMAGIC\0\0\0\0\0\0\0\0").is_err());
        assert!(decode_text("1.0\nabc\n").is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = MagnitudeSeries::from_values(vec![0.5, 2.0, 0.3]).unwrap();
        for (name, fmt) in [("s.bin", SeriesFormat::Binary), ("s.txt", SeriesFormat::Text)] {
            let p = dir.path().join(name);
            assert_eq!(SeriesFormat::from_path(&p), fmt);
            write_series(&s, &p, fmt).unwrap();
            assert_eq!(read_series(&p).unwrap().values(), s.values());
        }
    }
}
