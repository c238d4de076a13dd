//! Header-addressed CSV reading and plain CSV writing.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use csv::StringRecord;

use crate::error::{Error, Result};

pub(crate) struct CsvTable {
    pub path: PathBuf,
    pub headers: StringRecord,
    pub records: Vec<StringRecord>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    pub fn from_reader<R: std::io::Read>(reader: R, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
        let records = rdr
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::csv(path, e))?;
        Ok(CsvTable {
            path: path.to_path_buf(),
            headers,
            records,
        })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.optional_column(name).ok_or_else(|| Error::MissingColumn {
            path: self.path.clone(),
            column: name.to_string(),
        })
    }

    pub fn optional_column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// 1-based file line of the record at `index` (header is line 1).
    pub fn line_of(&self, index: usize) -> u64 {
        self.records[index]
            .position()
            .map(|p| p.line())
            .unwrap_or(index as u64 + 2)
    }

    pub fn parse<T: FromStr>(&self, index: usize, column: usize) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.records[index].get(column).unwrap_or("");
        raw.parse::<T>().map_err(|e| self.bad(index, format!(
            "column `{}`: cannot parse {raw:?}: {e}",
            &self.headers[column]
        )))
    }

    pub fn bad(&self, index: usize, message: impl Into<String>) -> Error {
        Error::BadRecord {
            path: self.path.clone(),
            line: self.line_of(index),
            message: message.into(),
        }
    }
}

/// Splits a `;`-joined list cell, dropping empty items.
pub(crate) fn split_list(cell: &str) -> impl Iterator<Item = &str> {
    cell.split(';').map(str::trim).filter(|s| !s.is_empty())
}

pub(crate) fn write_csv<W: Write>(
    out: W,
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(header).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        wtr.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub(crate) fn write_csv_file(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), path, header, rows)
}
