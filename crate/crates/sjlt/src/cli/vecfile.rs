//! Vector batch files: a binary format and a CSV format, both lossless.
//!
//! Binary layout: a 5-byte magic `SJLT1`, then two little-endian u64 words
//! (count, dim), then `count * dim` little-endian IEEE-754 binary64 values,
//! row-major, no padding. CSV rows carry one vector each, values printed
//! with 17 significant digits so parsing reproduces the exact doubles.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 5] = b"SJLT1";

#[derive(Debug, Error)]
pub enum VecFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic; not a vector file")]
    BadMagic,
    #[error("file truncated: expected {expected} payload bytes, got {got}")]
    Truncated { expected: u64, got: u64 },
    #[error("trailing bytes after payload")]
    TrailingBytes,
    #[error("header too large: count {count} x dim {dim} overflows")]
    TooLarge { count: u64, dim: u64 },
    #[error("csv parse error at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("row {row} has {got} values, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("empty csv file")]
    EmptyCsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    F64le,
    Csv,
}

/// A batch of equal-length vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFile {
    pub dim: usize,
    pub data: Vec<f64>,
    pub encoding: Encoding,
}

impl VectorFile {
    pub fn from_rows(rows: &[Vec<f64>], dim: usize, encoding: Encoding) -> Self {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            debug_assert_eq!(row.len(), dim);
            data.extend_from_slice(row);
        }
        VectorFile { dim, data, encoding }
    }

    pub fn count(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Reads a file, sniffing the binary magic and falling back to CSV.
    pub fn read(path: &Path) -> Result<Self, VecFileError> {
        let mut file = File::open(path)?;
        let mut head = [0u8; 5];
        let got = {
            let mut filled = 0;
            loop {
                let n = file.read(&mut head[filled..])?;
                if n == 0 {
                    break filled;
                }
                filled += n;
                if filled == head.len() {
                    break filled;
                }
            }
        };
        if got == 5 && &head == MAGIC {
            Self::read_binary_body(&mut file)
        } else {
            drop(file);
            let reader = BufReader::new(File::open(path)?);
            Self::read_csv_from(reader)
        }
    }

    fn read_binary_body<R: Read>(reader: &mut R) -> Result<Self, VecFileError> {
        let mut header = [0u8; 16];
        reader.read_exact(&mut header)?;
        let count = u64::from_le_bytes(header[0..8].try_into().unwrap());
        let dim = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let values = count
            .checked_mul(dim)
            .filter(|&v| v <= (usize::MAX / 8) as u64)
            .ok_or(VecFileError::TooLarge { count, dim })?;
        let expected = values * 8;
        let mut payload = Vec::with_capacity(expected as usize);
        let got = reader.take(expected + 1).read_to_end(&mut payload)? as u64;
        if got < expected {
            return Err(VecFileError::Truncated { expected, got });
        }
        if got > expected {
            return Err(VecFileError::TrailingBytes);
        }
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(VectorFile {
            dim: dim as usize,
            data,
            encoding: Encoding::F64le,
        })
    }

    pub fn read_csv_from<R: BufRead>(reader: R) -> Result<Self, VecFileError> {
        let mut dim = None;
        let mut data = Vec::new();
        let mut rows = 0usize;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for field in trimmed.split(',') {
                let value: f64 = field.trim().parse().map_err(|e| VecFileError::Csv {
                    line: idx + 1,
                    msg: format!("{field:?}: {e}"),
                })?;
                row.push(value);
            }
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(VecFileError::RaggedRow {
                        row: rows,
                        got: row.len(),
                        expected: d,
                    })
                }
                _ => {}
            }
            rows += 1;
            data.extend_from_slice(&row);
        }
        let dim = dim.ok_or(VecFileError::EmptyCsv)?;
        Ok(VectorFile {
            dim,
            data,
            encoding: Encoding::Csv,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), VecFileError> {
        let mut writer = BufWriter::new(File::create(path)?);
        self.write_to(&mut writer)?;
        writer.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, writer: &mut W) -> Result<(), VecFileError> {
        match self.encoding {
            Encoding::F64le => {
                writer.write_all(MAGIC)?;
                writer.write_all(&(self.count() as u64).to_le_bytes())?;
                writer.write_all(&(self.dim as u64).to_le_bytes())?;
                for v in &self.data {
                    writer.write_all(&v.to_le_bytes())?;
                }
            }
            Encoding::Csv => {
                for row in self.rows() {
                    let mut first = true;
                    for v in row {
                        if !first {
                            writer.write_all(b",")?;
                        }
                        // 17 significant digits round-trip any binary64.
                        write!(writer, "{v:.16e}")?;
                        first = false;
                    }
                    writer.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    }
}
