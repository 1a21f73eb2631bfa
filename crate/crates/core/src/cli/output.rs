use std::io::{self, Write};
use std::path::Path;

use anyhow::Context;
use clap::ValueEnum;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    JsonLines,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Str(String),
    Num(f64),
    Int(i64),
    Bool(bool),
    Null,
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Str(s.to_string())
    }
}
impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Str(s)
    }
}
impl From<&String> for Cell {
    fn from(s: &String) -> Self {
        Cell::Str(s.clone())
    }
}
impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}
impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<i32> for Cell {
    fn from(v: i32) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}
impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Null, Into::into)
    }
}

/// Compact human rendering: six significant-ish digits, exponent form for
/// very small or large magnitudes.
fn human(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return v.to_string();
    }
    let a = v.abs();
    if (1e-3..1e6).contains(&a) {
        let s = format!("{v:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.4e}")
    }
}

impl Cell {
    fn text(&self, exact: bool) -> String {
        match self {
            Cell::Str(s) => s.clone(),
            Cell::Num(v) if exact => v.to_string(),
            Cell::Num(v) => human(*v),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Null if exact => String::new(),
            Cell::Null => "-".into(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Str(s) => Value::String(s.clone()),
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(i) => Value::from(*i),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Null => Value::Null,
        }
    }
}

pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, headers: &[&str]) -> Self {
        Table { name: name.to_string(), headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    fn write_csv(&self, w: &mut dyn Write) -> anyhow::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.headers)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|c| c.text(true)))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn render(&self, format: Format, w: &mut dyn Write) -> anyhow::Result<()> {
        match format {
            Format::Table => {
                writeln!(w, "{}", self.name)?;
                let cells: Vec<Vec<String>> =
                    self.rows.iter().map(|r| r.iter().map(|c| c.text(false)).collect()).collect();
                let widths: Vec<usize> = (0..self.headers.len())
                    .map(|i| {
                        cells.iter().map(|r| r[i].chars().count()).chain([self.headers[i].len()]).max().unwrap_or(0)
                    })
                    .collect();
                let line = |parts: &[String]| {
                    parts
                        .iter()
                        .zip(&widths)
                        .map(|(p, w)| format!("{p:<w$}"))
                        .collect::<Vec<_>>()
                        .join("  ")
                        .trim_end()
                        .to_string()
                };
                writeln!(w, "{}", line(&self.headers))?;
                for r in &cells {
                    writeln!(w, "{}", line(r))?;
                }
                writeln!(w)?;
            }
            Format::Csv => {
                writeln!(w, "# {}", self.name)?;
                self.write_csv(w)?;
                writeln!(w)?;
            }
            Format::JsonLines => {
                for row in &self.rows {
                    let mut obj = Map::new();
                    obj.insert("table".into(), Value::String(self.name.clone()));
                    for (h, c) in self.headers.iter().zip(row) {
                        obj.insert(h.clone(), c.json());
                    }
                    writeln!(w, "{}", Value::Object(obj))?;
                }
            }
        }
        Ok(())
    }

    /// Write `<dir>/<name>.csv`.
    pub fn save_csv(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.write_csv(&mut f)
    }
}

pub fn emit(tables: &[Table], format: Format) -> anyhow::Result<()> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    for t in tables {
        t.render(format, &mut lock)?;
    }
    lock.flush()?;
    Ok(())
}
