use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use parares::wigner::{WignerGrid, WignerHeader};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::config::Format;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn csv(&self, out: &mut String) {
        match self {
            Cell::Float(v) => write!(out, "{v:.16e}").unwrap(),
            Cell::Int(v) => write!(out, "{v}").unwrap(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => {
                write!(out, "\"{}\"", s.replace('"', "\"\"")).unwrap()
            }
            Cell::Text(s) => out.push_str(s),
            Cell::Empty => {}
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Empty => Value::Null,
        }
    }
}

/// Hints for the optional plot script.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x: String,
    pub y: Vec<String>,
    pub log_x: bool,
    /// Column whose distinct values split the data into separate curves.
    pub group: Option<String>,
}

/// A tidy table: one header row and rows of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub plot: Option<PlotSpec>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            plot: None,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    pub fn with_plot(mut self, title: &str, x: &str, y: &[&str], log_x: bool) -> Self {
        self.plot = Some(PlotSpec {
            title: title.to_string(),
            x: x.to_string(),
            y: y.iter().map(|s| s.to_string()).collect(),
            log_x,
            group: None,
        });
        self
    }

    pub fn grouped_by(mut self, column: &str) -> Self {
        if let Some(p) = self.plot.as_mut() {
            p.group = Some(column.to_string());
        }
        self
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (k, cell) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                cell.csv(&mut out);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .cloned()
                        .zip(row.iter().map(Cell::json))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }

    /// Copy with leading columns prepended to every row.
    pub fn prefixed(&self, columns: &[String], values: &[Cell]) -> Table {
        let mut t = Table {
            name: self.name.clone(),
            columns: columns.iter().cloned().chain(self.columns.iter().cloned()).collect(),
            rows: Vec::with_capacity(self.rows.len()),
            plot: self.plot.clone(),
        };
        for row in &self.rows {
            t.rows.push(values.iter().cloned().chain(row.iter().cloned()).collect());
        }
        t
    }
}

/// Everything an experiment produces, kept in memory until written.
#[derive(Debug, Clone, Default)]
pub struct Outputs {
    pub tables: Vec<Table>,
    pub documents: Vec<(String, Value)>,
    pub wigner: Option<(WignerGrid, WignerHeader)>,
    /// Set when the simulation stopped early; files are still written.
    pub failure: Option<String>,
}

impl Outputs {
    pub fn table(&mut self, table: Table) {
        self.tables.push(table);
    }

    pub fn document<T: Serialize>(&mut self, name: &str, value: &T) {
        let v = serde_json::to_value(value).expect("output documents serialize");
        self.documents.push((name.to_string(), v));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// A directory that records every file written into it.
pub struct RunDir {
    pub root: PathBuf,
    pub files: Vec<FileEntry>,
}

impl RunDir {
    pub fn create(root: PathBuf) -> Result<Self> {
        fs::create_dir_all(&root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(Self { root, files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes a table as `<name>.csv` or `<name>.json`; returns the file name.
    pub fn write_table(&mut self, table: &Table, format: Format) -> Result<String> {
        match format {
            Format::Json => {
                let name = format!("{}.json", table.name);
                self.write_json(&name, &table.to_json())?;
                Ok(name)
            }
            // binary output is reserved for phase-space grids
            Format::Csv | Format::Bin => {
                let name = format!("{}.csv", table.name);
                self.write(&name, table.to_csv().as_bytes())?;
                Ok(name)
            }
        }
    }

    pub fn write_outputs(&mut self, outputs: &Outputs, format: Format) -> Result<Vec<String>> {
        let mut written = Vec::new();
        for t in &outputs.tables {
            written.push(self.write_table(t, format)?);
        }
        for (name, doc) in &outputs.documents {
            let file = format!("{name}.json");
            self.write_json(&file, doc)?;
            written.push(file);
        }
        if let Some((grid, header)) = &outputs.wigner {
            let mut header = header.clone();
            match format {
                Format::Bin => {
                    let mut buf = Vec::with_capacity(grid.values.len() * 8);
                    grid.write_binary(&mut buf)?;
                    self.write("wigner.bin", &buf)?;
                    header.layout = "row-major little-endian f64, x outer, p inner".into();
                    written.push("wigner.bin".into());
                }
                Format::Csv => {
                    let mut buf = Vec::new();
                    grid.write_csv(&mut buf)?;
                    self.write("wigner.csv", &buf)?;
                    header.layout = "tidy csv x,p,w, x outer".into();
                    written.push("wigner.csv".into());
                }
                Format::Json => {
                    let rows: Vec<[f64; 3]> = (0..grid.x.n)
                        .flat_map(|j| (0..grid.p.n).map(move |i| (j, i)))
                        .map(|(j, i)| [grid.x.x(j), grid.p.p(i), grid.at(j, i)])
                        .collect();
                    self.write_json("wigner.json", &serde_json::json!({ "header": &header, "values": rows }))?;
                    written.push("wigner.json".into());
                }
            }
            if format != Format::Json {
                self.write_json("wigner_header.json", &header)?;
                written.push("wigner_header.json".into());
            }
        }
        Ok(written)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub version: String,
    pub wall_time_s: f64,
    pub threads: usize,
    pub status: String,
    pub error: Option<String>,
    pub files: Vec<FileEntry>,
    pub config: Value,
}

impl Manifest {
    /// Writes `manifest.json`, listing every file already in `dir`.
    pub fn write(mut self, dir: &mut RunDir) -> Result<()> {
        let mut files = dir.files.clone();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files = files;
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        let path = dir.root.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formatting() {
        let mut t = Table::new("t", &["a", "b", "c", "d"]);
        t.push(vec![0.1.into(), 3usize.into(), Cell::Empty, "x,y".into()]);
        assert_eq!(t.to_csv(), "a,b,c,d\n1.0000000000000001e-1,3,,\"x,y\"\n");
        let back: f64 = "1.0000000000000001e-1".parse().unwrap();
        assert_eq!(back, 0.1);
    }

    #[test]
    fn json_rows() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec![1.5.into(), Cell::Empty]);
        assert_eq!(t.to_json(), serde_json::json!([{ "a": 1.5, "b": null }]));
    }

    #[test]
    fn prefix_columns() {
        let mut t = Table::new("t", &["a"]);
        t.push(vec![1.0.into()]);
        let p = t.prefixed(&["index".into(), "T".into()], &[0usize.into(), 0.5.into()]);
        assert_eq!(p.columns, ["index", "T", "a"]);
        assert_eq!(p.rows[0].len(), 3);
    }
}
