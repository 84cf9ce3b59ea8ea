//! JSON-lines corpus I/O.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::MedicalRecord;

/// A line that could not be turned into a valid record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

fn parse_line(line: &str) -> Result<MedicalRecord, String> {
    let record: MedicalRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    record.validate().map_err(|e| e.to_string())?;
    if let Some(drg) = &record.drg {
        drg.validate().map_err(|e| e.to_string())?;
    }
    Ok(record)
}

/// Strict loader: the first bad line or duplicated id aborts the load.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<MedicalRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_line(&line).map_err(|m| Error::parse(path, i + 1, m))?;
        if !seen.insert(record.record_id.clone()) {
            return Err(Error::DuplicateRecordId(record.record_id));
        }
        records.push(record);
    }
    Ok(records)
}

/// Lenient loader for batch runs: bad lines and duplicate ids are collected
/// instead of aborting. The first occurrence of a duplicated id is kept.
pub fn load_corpus_lenient(path: impl AsRef<Path>) -> Result<(Vec<MedicalRecord>, Vec<LineError>)> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(r) if !seen.insert(r.record_id.clone()) => errors.push(LineError {
                line: i + 1,
                message: Error::DuplicateRecordId(r.record_id).to_string(),
            }),
            Ok(r) => records.push(r),
            Err(message) => errors.push(LineError { line: i + 1, message }),
        }
    }
    Ok((records, errors))
}

pub fn write_corpus(path: impl AsRef<Path>, records: &[MedicalRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_jsonl(&mut w, records)?;
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<W: Write, T: Serialize>(w: &mut W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut *w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads any JSON-lines file of `T`, reporting the failing line number.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?);
    }
    Ok(out)
}
