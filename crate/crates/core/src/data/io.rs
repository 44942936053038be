//! CSV and packed-binary dataset files.
//!
//! Packed binary layout (all little-endian): the magic bytes `EMDS`, `n` as
//! u64, `d` as u64, then `n·d` f64 values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::RawDataset;
use crate::error::{argument, Error, Result};

const MAGIC: &[u8; 4] = b"EMDS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileFormat {
    /// Comma separated; `header` marks a single leading header row.
    Csv { header: bool },
    Packed,
}

impl std::str::FromStr for FileFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(FileFormat::Csv { header: false }),
            "csv-header" => Ok(FileFormat::Csv { header: true }),
            "packed" | "bin" => Ok(FileFormat::Packed),
            other => Err(argument(format!("unknown dataset format '{other}'"))),
        }
    }
}

fn provenance(path: &Path, bytes: &[u8]) -> String {
    format!("file {} sha256={}", path.display(), hex::encode(Sha256::digest(bytes)))
}

pub fn load_dataset(path: impl AsRef<Path>, format: FileFormat) -> Result<RawDataset> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let (values, d) = match format {
        FileFormat::Csv { header } => parse_csv(&bytes, header)?,
        FileFormat::Packed => parse_packed(&bytes)?,
    };
    RawDataset::new(values, d, provenance(path, &bytes))
}

/// Rows and columns in parse errors are 1-based file positions.
fn parse_csv(bytes: &[u8], header: bool) -> Result<(Vec<f64>, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .from_reader(bytes);
    let mut values = Vec::new();
    let mut width = None;
    for (r, record) in reader.records().enumerate() {
        let row = r + 1 + usize::from(header);
        let record = record.map_err(|e| Error::Parse {
            row,
            col: 0,
            msg: e.to_string(),
        })?;
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    row,
                    col: record.len().min(w) + 1,
                    msg: format!("expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                col: c + 1,
                msg: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    col: c + 1,
                    msg: format!("'{field}' is not finite"),
                });
            }
            values.push(v);
        }
    }
    match width {
        Some(d) if d > 0 => Ok((values, d)),
        _ => Err(Error::Format("no data rows".into())),
    }
}

fn parse_packed(bytes: &[u8]) -> Result<(Vec<f64>, usize)> {
    if bytes.len() < 20 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing EMDS header".into()));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (n, d) = (word(4), word(12));
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(20))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    if expected != bytes.len() as u64 {
        return Err(Error::Format(format!(
            "header declares {n}x{d} values, file holds {} bytes",
            bytes.len()
        )));
    }
    let values = bytes[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((values, d as usize))
}

pub fn save_dataset(data: &RawDataset, path: impl AsRef<Path>, format: FileFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        FileFormat::Csv { header } => {
            let mut w = csv::Writer::from_writer(&mut out);
            let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
            if header {
                w.write_record((0..data.dim()).map(|j| format!("x{j}"))).map_err(io)?;
            }
            for i in 0..data.n() {
                // `{:?}` prints the shortest representation that round-trips.
                w.write_record(data.row(i).iter().map(|v| format!("{v:?}"))).map_err(io)?;
            }
            w.flush()?;
        }
        FileFormat::Packed => {
            out.write_all(MAGIC)?;
            out.write_all(&(data.n() as u64).to_le_bytes())?;
            out.write_all(&(data.dim() as u64).to_le_bytes())?;
            for v in data.values() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
