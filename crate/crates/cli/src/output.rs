//! Tabular output with a provenance header, as CSV or JSON.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map(Cell::Num).unwrap_or(Cell::Empty)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Run identity echoed at the top of every output.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

impl Header {
    /// Hashes the canonical JSON of `config` (plus any extra input bytes).
    pub fn new<C: Serialize>(command: &str, config: &C, extra: &[u8], seed: Option<u64>) -> Self {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(serde_json::to_vec(config).expect("config serialises"));
        h.update(extra);
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: format!("{:x}", h.finalize()),
            seed,
        }
    }
}

pub struct Table {
    pub header: Header,
    /// Extra `key = value` lines for the header block.
    pub notes: Vec<(String, Value)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Decimal places for numeric cells.
    pub precision: usize,
}

impl Table {
    pub fn new(header: Header, columns: &[&str], precision: usize) -> Self {
        Self {
            header,
            notes: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            precision,
        }
    }

    pub fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.notes.push((key.to_string(), value.into()));
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn fmt_num(&self, v: f64) -> String {
        if v.is_finite() {
            let s = format!("{:.*}", self.precision, v);
            if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
                s[1..].to_string()
            } else {
                s
            }
        } else {
            String::new()
        }
    }

    fn cell_text(&self, c: &Cell) -> String {
        match c {
            Cell::Num(v) => self.fmt_num(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn cell_json(&self, c: &Cell) -> Value {
        match c {
            Cell::Num(v) if v.is_finite() => {
                let rounded: f64 = self.fmt_num(*v).parse().unwrap_or(*v);
                json!(rounded)
            }
            Cell::Num(_) | Cell::Empty => Value::Null,
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }

    pub fn write<W: Write>(&self, mut w: W, format: Format) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Failure(format!("write failed: {e}"));
        match format {
            Format::Csv => {
                writeln!(w, "# command: {}", self.header.command).map_err(io)?;
                writeln!(w, "# version: {}", self.header.version).map_err(io)?;
                writeln!(w, "# config_sha256: {}", self.header.config_sha256).map_err(io)?;
                match self.header.seed {
                    Some(s) => writeln!(w, "# seed: {s}").map_err(io)?,
                    None => writeln!(w, "# seed: none").map_err(io)?,
                }
                for (k, v) in &self.notes {
                    let text = match v {
                        Value::Number(n) if n.is_f64() => self.fmt_num(n.as_f64().unwrap_or(f64::NAN)),
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    writeln!(w, "# {k}: {text}").map_err(io)?;
                }
                let mut cw = csv::Writer::from_writer(&mut w);
                let csv_err = |e: csv::Error| CliError::Failure(format!("write failed: {e}"));
                cw.write_record(&self.columns).map_err(csv_err)?;
                for r in &self.rows {
                    cw.write_record(r.iter().map(|c| self.cell_text(c))).map_err(csv_err)?;
                }
                cw.flush().map_err(io)?;
            }
            Format::Json => {
                let mut head = Map::new();
                head.insert("command".into(), json!(self.header.command));
                head.insert("version".into(), json!(self.header.version));
                head.insert("config_sha256".into(), json!(self.header.config_sha256));
                head.insert("seed".into(), json!(self.header.seed));
                for (k, v) in &self.notes {
                    let v = match v {
                        Value::Number(n) if n.is_f64() => self.cell_json(&Cell::Num(n.as_f64().unwrap_or(f64::NAN))),
                        other => other.clone(),
                    };
                    head.insert(k.clone(), v);
                }
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let mut m = Map::new();
                        for (c, cell) in self.columns.iter().zip(r) {
                            m.insert(c.clone(), self.cell_json(cell));
                        }
                        Value::Object(m)
                    })
                    .collect();
                let doc = json!({ "header": Value::Object(head), "rows": rows });
                serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Failure(e.to_string()))?;
                writeln!(w).map_err(io)?;
            }
        }
        Ok(())
    }
}
