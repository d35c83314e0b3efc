//! Result tables and their CSV / JSON encodings.

use std::io::Write;
use std::path::Path;

use optoent::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Empty,
    Bool(bool),
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn num(v: f64) -> Cell {
        if v.is_finite() {
            Cell::Num(v)
        } else {
            Cell::Empty
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }

    fn csv_field(&self) -> String {
        match self {
            Cell::Empty => String::new(),
            Cell::Bool(b) => b.to_string(),
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format {s:?} (csv or json)")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonTable {
    schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    generated: Option<String>,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of one column (`None` for empty cells).
    pub fn values(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let k = self.column(name)?;
        Some(self.rows.iter().map(|r| r[k].as_f64()).collect())
    }

    /// Appends the rows of `other`; columns must match.
    pub fn extend(&mut self, other: Table) -> Result<()> {
        if self.columns.is_empty() && self.rows.is_empty() {
            *self = other;
            return Ok(());
        }
        if self.columns != other.columns {
            return Err(Error::contract("cannot concatenate tables with different columns"));
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    /// Encodes the table. CSV floats carry 17 significant digits; `generated`
    /// adds a leading `# generated ...` line (CSV) or field (JSON).
    pub fn encode(&self, format: Format, generated: Option<&str>) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        match format {
            Format::Csv => {
                if let Some(g) = generated {
                    writeln!(out, "# generated {g}").expect("write to vec");
                }
                let mut w = csv::Writer::from_writer(&mut out);
                let err = |e: csv::Error| Error::contract(format!("csv encoding: {e}"));
                w.write_record(&self.columns).map_err(err)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::csv_field)).map_err(err)?;
                }
                w.flush().map_err(|e| Error::contract(format!("csv encoding: {e}")))?;
            }
            Format::Json => {
                let doc = JsonTable {
                    schema_version: SCHEMA_VERSION,
                    generated: generated.map(str::to_string),
                    columns: self.columns.clone(),
                    rows: self.rows.clone(),
                };
                serde_json::to_writer_pretty(&mut out, &doc)
                    .map_err(|e| Error::contract(format!("json encoding: {e}")))?;
                out.push(b'\n');
            }
        }
        Ok(out)
    }

    pub fn emit(&self, format: Format, generated: Option<&str>, path: &Path) -> Result<()> {
        let bytes = self.encode(format, generated)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Parses CSV written by [`Table::encode`]. Cells come back as numbers,
    /// booleans, text or empty.
    pub fn parse_csv(data: &[u8]) -> Result<Table> {
        let body: Vec<u8> = data
            .split_inclusive(|&b| b == b'\n')
            .filter(|l| !l.starts_with(b"#"))
            .flatten()
            .copied()
            .collect();
        let mut r = csv::Reader::from_reader(body.as_slice());
        let err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        let columns = r.headers().map_err(err)?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(err)?;
            rows.push(
                rec.iter()
                    .map(|f| {
                        if f.is_empty() {
                            Cell::Empty
                        } else if let Ok(b) = f.parse::<bool>() {
                            Cell::Bool(b)
                        } else if let Ok(v) = f.parse::<f64>() {
                            Cell::Num(v)
                        } else {
                            Cell::Text(f.to_string())
                        }
                    })
                    .collect(),
            );
        }
        Ok(Table { columns, rows })
    }

    pub fn parse_json(data: &[u8]) -> Result<Table> {
        let doc: JsonTable = serde_json::from_slice(data).map_err(|e| Error::Config(format!("json: {e}")))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema_version {}", doc.schema_version)));
        }
        Ok(Table {
            columns: doc.columns,
            rows: doc.rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        Table {
            columns: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            rows: vec![
                vec![Cell::Num(0.1), Cell::Num(1.0 / 3.0), Cell::Bool(true), Cell::Empty],
                vec![Cell::Num(-2.5e-300), Cell::Num(6.02214076e23), Cell::Bool(false), Cell::Text("bracket: x, y".into())],
            ],
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(vec!["x".into(), "y".into()]);
        assert_eq!(t.encode(Format::Csv, None).unwrap(), b"x,y\n");
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let t = sample();
        let back = Table::parse_csv(&t.encode(Format::Csv, Some("now")).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let t = sample();
        let back = Table::parse_json(&t.encode(Format::Json, None).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
