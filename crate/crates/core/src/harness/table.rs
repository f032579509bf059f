use std::fmt;
use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(x) => write!(f, "{x}"),
            Cell::Float(x) => write!(f, "{x}"),
            Cell::Bool(x) => write!(f, "{x}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl Cell {
    fn to_json(&self) -> serde_json::Value {
        match self {
            Cell::Int(x) => (*x).into(),
            Cell::Float(x) => serde_json::Number::from_f64(*x).map(Into::into).unwrap_or(serde_json::Value::Null),
            Cell::Bool(x) => (*x).into(),
            Cell::Text(s) => s.clone().into(),
        }
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    JsonLines,
}

/// Rows with a fixed column set.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width differs from the column set");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn render(&self, format: OutputFormat) -> Result<Vec<u8>, HarnessError> {
        match format {
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(|c| c.to_string()))?;
                }
                w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
            }
            OutputFormat::JsonLines => {
                let mut out = Vec::new();
                for row in &self.rows {
                    // Built by hand so keys keep column order.
                    out.push(b'{');
                    for (k, (name, cell)) in self.columns.iter().zip(row).enumerate() {
                        if k > 0 {
                            out.push(b',');
                        }
                        serde_json::to_writer(&mut out, name)?;
                        out.push(b':');
                        serde_json::to_writer(&mut out, &cell.to_json())?;
                    }
                    out.extend_from_slice(b"}\n");
                }
                Ok(out)
            }
        }
    }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| HarnessError::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(&["name", "x", "ok"]);
        t.push(vec!["a,b".into(), 0.1.into(), true.into()]);
        t.push(vec!["say \"hi\"".into(), 3usize.into(), false.into()]);
        t
    }

    #[test]
    fn csv_quotes_fields() {
        let text = String::from_utf8(sample().render(OutputFormat::Csv).unwrap()).unwrap();
        assert_eq!(text, "name,x,ok\n\"a,b\",0.1,true\n\"say \"\"hi\"\"\",3,false\n");
        let header_only = Table::new(&["a", "b"]).render(OutputFormat::Csv).unwrap();
        assert_eq!(header_only, b"a,b\n");
    }

    #[test]
    fn json_lines_keep_column_order() {
        let text = String::from_utf8(sample().render(OutputFormat::JsonLines).unwrap()).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, r#"{"name":"a,b","x":0.1,"ok":true}"#);
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn atomic_write_replaces_the_target() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"old").unwrap();
        write_atomic(&path, b"new").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"new");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
