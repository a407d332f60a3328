//! The canonical dataset file: newline-delimited JSON with a header line
//! `{"format_version":1,"metadata":{...}}` followed by one trace per line.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Dataset, LabeledTrace, Metadata, FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("unsupported dataset format version {found} (expected {FORMAT_VERSION})")]
    FormatVersionMismatch { found: u32 },
    #[error("malformed line {line_number}: {message}")]
    MalformedLine { line_number: usize, message: String },
    #[error("dataset file has no header line")]
    MissingHeader,
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    format_version: u32,
    metadata: &'a Metadata,
}

#[derive(Deserialize)]
struct HeaderIn {
    format_version: u32,
    #[serde(default)]
    metadata: Metadata,
}

pub fn write_to<W: Write>(dataset: &Dataset, mut out: W) -> Result<(), DatasetIoError> {
    let header = HeaderOut {
        format_version: dataset.format_version,
        metadata: &dataset.metadata,
    };
    serde_json::to_writer(&mut out, &header).map_err(io::Error::from)?;
    out.write_all(b"\n")?;
    for trace in &dataset.traces {
        serde_json::to_writer(&mut out, trace).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_from<R: BufRead>(input: R) -> Result<Dataset, DatasetIoError> {
    let mut lines = input.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(DatasetIoError::MissingHeader),
            Some((_, line)) if line.as_ref().is_ok_and(|l| l.trim().is_empty()) => continue,
            Some((i, line)) => break parse_line::<HeaderIn>(&line?, i + 1)?,
        }
    };
    if header.format_version != FORMAT_VERSION {
        return Err(DatasetIoError::FormatVersionMismatch {
            found: header.format_version,
        });
    }
    let mut traces = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        traces.push(parse_line::<LabeledTrace>(&line, i + 1)?);
    }
    Ok(Dataset {
        format_version: header.format_version,
        metadata: header.metadata,
        traces,
    })
}

fn parse_line<T: for<'de> Deserialize<'de>>(line: &str, line_number: usize) -> Result<T, DatasetIoError> {
    serde_json::from_str(line).map_err(|e| DatasetIoError::MalformedLine {
        line_number,
        message: e.to_string(),
    })
}

pub fn to_canonical_string(dataset: &Dataset) -> String {
    let mut buf = Vec::new();
    write_to(dataset, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn from_canonical_str(text: &str) -> Result<Dataset, DatasetIoError> {
    read_from(text.as_bytes())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetIoError> {
    read_from(BufReader::new(File::open(path)?))
}

/// Writes through a temporary file in the target directory and renames it into
/// place, so readers never observe a partial dataset.
pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetIoError> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    write_to(dataset, BufWriter::new(tmp.as_file_mut()))?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
