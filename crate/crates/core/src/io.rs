//! CSV tables with a leading format-version comment line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const CSV_FORMAT_VERSION: u32 = 1;

pub struct CsvTable {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvTable {
    /// Creates `path`, writing `# mitune-csv v1 <name>` and the header row.
    pub fn create<S: AsRef<str>>(path: &Path, name: &str, header: &[S]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = BufWriter::new(file);
        writeln!(buf, "# mitune-csv v{CSV_FORMAT_VERSION} {name}").map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(buf);
        writer
            .write_record(header.iter().map(|h| h.as_ref()))
            .map_err(|e| Error::file(path, e.to_string()))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<()> {
        self.writer
            .write_record(fields.iter().map(|f| f.as_ref()))
            .map_err(|e| Error::file(&self.path, e.to_string()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer
            .flush()
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// A parsed table: header names plus string rows.
#[derive(Debug, Clone)]
pub struct CsvData {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvData {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => Error::file(path, format!("cannot open: {e}")),
                _ => Error::file(path, e.to_string()),
            })?;
        let header = reader
            .headers()
            .map_err(|e| Error::file(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::file(path, e.to_string()))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::file(&self.path, format!("missing column '{name}'")))
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[idx].parse::<f64>().map_err(|_| {
                    Error::file(
                        &self.path,
                        format!("row {}: column '{name}' is not a number: '{}'", i + 1, r[idx]),
                    )
                })
            })
            .collect()
    }

    pub fn usize_column(&self, name: &str) -> Result<Vec<usize>> {
        let idx = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[idx].parse::<usize>().map_err(|_| {
                    Error::file(
                        &self.path,
                        format!("row {}: column '{name}' is not an integer: '{}'", i + 1, r[idx]),
                    )
                })
            })
            .collect()
    }
}
