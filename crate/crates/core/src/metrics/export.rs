use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::SCHEMA_VERSION;

/// First line of every exported file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaHeader {
    pub schema_version: u32,
    pub kind: String,
}

impl SchemaHeader {
    pub fn new(kind: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
        }
    }

    /// Comment line used in front of delimited tables.
    pub fn csv_line(&self) -> String {
        format!("# schema_version={} kind={}", self.schema_version, self.kind)
    }
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad header: {0}")]
    Header(String),
}

/// Header line followed by one JSON object per record.
pub fn write_jsonl<T: Serialize>(mut out: impl Write, kind: &str, records: &[T]) -> Result<(), ExportError> {
    let json = |line, e| ExportError::Json { line, source: e };
    serde_json::to_writer(&mut out, &SchemaHeader::new(kind)).map_err(|e| json(1, e))?;
    out.write_all(b"\n")?;
    for (i, r) in records.iter().enumerate() {
        serde_json::to_writer(&mut out, r).map_err(|e| json(i + 2, e))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_jsonl`], checking kind and version.
pub fn read_jsonl<T: DeserializeOwned>(input: impl BufRead, kind: &str) -> Result<Vec<T>, ExportError> {
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| ExportError::Header("empty file".into()))??;
    let header: SchemaHeader =
        serde_json::from_str(&first).map_err(|e| ExportError::Header(format!("not a schema header: {e}")))?;
    if header.kind != kind {
        return Err(ExportError::Header(format!("expected kind '{kind}', found '{}'", header.kind)));
    }
    if header.schema_version != SCHEMA_VERSION {
        return Err(ExportError::Header(format!(
            "schema version {} is not supported (expected {SCHEMA_VERSION})",
            header.schema_version
        )));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ExportError::Json { line: i + 2, source: e })?);
    }
    Ok(out)
}

/// Header comment line followed by a CSV table of `records`.
pub fn write_csv<T: Serialize>(mut out: impl Write, kind: &str, records: &[T]) -> Result<(), ExportError> {
    writeln!(out, "{}", SchemaHeader::new(kind).csv_line())?;
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
