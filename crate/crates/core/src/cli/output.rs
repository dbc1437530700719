//! Result tables and atomic file output.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
    B(bool),
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::F(v) => v.to_string(),
            Cell::U(v) => v.to_string(),
            Cell::S(v) => v.clone(),
            Cell::B(v) => v.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::U(v) => Value::from(*v),
            Cell::S(v) => Value::from(v.clone()),
            Cell::B(v) => Value::from(*v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.columns).map_err(CliError::runtime)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::text)).map_err(CliError::runtime)?;
                }
                w.into_inner().map_err(CliError::runtime)
            }
            Format::Jsonl => {
                let mut out = Vec::new();
                for row in &self.rows {
                    let obj: Map<String, Value> =
                        self.columns.iter().zip(row).map(|(c, v)| (c.to_string(), v.json())).collect();
                    out.extend(serde_json::to_vec(&Value::Object(obj)).map_err(CliError::runtime)?);
                    out.push(b'\n');
                }
                Ok(out)
            }
        }
    }

    pub fn file_name(stem: &str, format: Format) -> String {
        match format {
            Format::Csv => format!("{stem}.csv"),
            Format::Jsonl => format!("{stem}.jsonl"),
        }
    }
}

/// Output directory whose files appear only once fully written.
#[derive(Debug, Clone)]
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", tmp.display())))?;
        fs::rename(&tmp, &target).map_err(|e| CliError::Runtime(format!("{}: {e}", target.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}
