//! CSV tables with documented columns and the JSON run summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

/// A CSV table; every column carries a one-line description that is written
/// as a `#` comment above the header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub title: String,
    columns: Vec<(String, String)>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, title: &str) -> Self {
        Self {
            name: name.to_string(),
            title: title.to_string(),
            columns: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn column(mut self, name: impl Into<String>, doc: impl Into<String>) -> Self {
        self.columns.push((name.into(), doc.into()));
        self
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|v| num(*v)).collect());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# {}", self.title).unwrap();
        for (name, doc) in &self.columns {
            writeln!(out, "# {name}: {doc}").unwrap();
        }
        let header: Vec<&str> = self.columns.iter().map(|(n, _)| n.as_str()).collect();
        writeln!(out, "{}", header.join(",")).unwrap();
        for row in &self.rows {
            writeln!(out, "{}", row.join(",")).unwrap();
        }
        out
    }
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// Results of one command: tables plus scalar results for the summary.
#[derive(Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub results: Map<String, Value>,
    pub tolerances: Map<String, Value>,
}

impl Report {
    pub fn result(&mut self, key: &str, value: impl Into<Value>) {
        self.results.insert(key.to_string(), value.into());
    }

    pub fn tolerance(&mut self, key: &str, value: f64) {
        self.tolerances.insert(key.to_string(), value.into());
    }

    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }
}

pub fn table_path(prefix: &str, name: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}.{name}.csv"))
}

pub fn summary_path(prefix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}.summary.json"))
}

pub fn write_file(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_documents_every_column() {
        let mut t = Table::new("x", "demo").column("a", "first").column("b", "second");
        t.push_f64(&[1.0, 0.25]);
        let text = t.render();
        assert_eq!(text, "# demo\n# a: first\n# b: second\na,b\n1e0,2.5e-1\n");
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -3.0e-17, 7.402203300817572, 1e300] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
