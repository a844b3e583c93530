//! Tabular experiment results with provenance, emitted as CSV.
//!
//! Every output file starts with `# key: value` comment lines carrying the
//! run's provenance (experiment id, configuration hash, code version,
//! timestamp, and which columns hold wall-clock timings), followed by an
//! RFC-4180 body.  Timing columns are marked so that downstream comparisons
//! can ignore them: two runs of the same configuration must agree bit for
//! bit everywhere else.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::CliError;

/// One table entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.6e}"),
            Cell::Text(s) => s.clone(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Cell::Float(v) => v.is_finite(),
            _ => true,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Column header plus whether the column holds a timing measurement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub timing: bool,
}

impl Column {
    pub fn data(name: &str) -> Self {
        Column {
            name: name.to_string(),
            timing: false,
        }
    }

    pub fn timing(name: &str) -> Self {
        Column {
            name: name.to_string(),
            timing: true,
        }
    }
}

/// A finished experiment table: provenance metadata, typed columns, rows.
#[derive(Debug, Clone)]
pub struct ResultTable {
    /// Output stem, e.g. `table1`.
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    /// Provenance and derived quantities, written as `# key: value` lines.
    pub metadata: BTreeMap<String, String>,
}

impl ResultTable {
    pub fn new(name: &str, columns: Vec<Column>, metadata: BTreeMap<String, String>) -> Self {
        ResultTable {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
            metadata,
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width does not match the column count"
        );
        self.rows.push(row);
    }

    fn timing_column_list(&self) -> String {
        let names: Vec<&str> = self
            .columns
            .iter()
            .filter(|c| c.timing)
            .map(|c| c.name.as_str())
            .collect();
        names.join(",")
    }

    /// Renders the full file: comment header, then the RFC-4180 body.
    ///
    /// A non-finite float anywhere in the table is a bug in the run that
    /// produced it, so emission refuses rather than writing `NaN` fields.
    pub fn to_csv_string(&self) -> Result<String, CliError> {
        for (r, row) in self.rows.iter().enumerate() {
            for (cell, column) in row.iter().zip(&self.columns) {
                if !cell.is_finite() {
                    return Err(CliError::Format(format!(
                        "non-finite value in table '{}', row {}, column '{}'",
                        self.name,
                        r + 1,
                        column.name
                    )));
                }
            }
        }
        let mut header = String::new();
        for (key, value) in &self.metadata {
            header.push_str(&format!("# {key}: {value}\n"));
        }
        header.push_str(&format!("# timing-columns: {}\n", self.timing_column_list()));

        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(self.columns.iter().map(|c| c.name.as_str()))
            .map_err(|e| CliError::Format(format!("csv write failed: {e}")))?;
        for row in &self.rows {
            writer
                .write_record(row.iter().map(Cell::render))
                .map_err(|e| CliError::Format(format!("csv write failed: {e}")))?;
        }
        let body = writer
            .into_inner()
            .map_err(|e| CliError::Format(format!("csv write failed: {e}")))?;
        let body = String::from_utf8(body)
            .map_err(|e| CliError::Format(format!("csv body not utf-8: {e}")))?;
        Ok(header + &body)
    }

    /// Writes `<out_dir>/<name>.csv` and returns the path.
    pub fn write_csv(&self, out_dir: &Path) -> Result<std::path::PathBuf, CliError> {
        let text = self.to_csv_string()?;
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, text)?;
        Ok(path)
    }

    /// True when the two tables agree on everything except wall-clock data:
    /// timing-marked columns, the timestamp, and `time-*` metadata (derived
    /// from timings) are skipped, all other cells are compared by their
    /// rendered text.
    pub fn non_timing_equal(&self, other: &ResultTable) -> bool {
        if self.name != other.name
            || self.columns != other.columns
            || self.rows.len() != other.rows.len()
        {
            return false;
        }
        let skip_meta = |m: &BTreeMap<String, String>| -> BTreeMap<String, String> {
            m.iter()
                .filter(|(k, _)| k.as_str() != "timestamp" && !k.starts_with("time-"))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()
        };
        if skip_meta(&self.metadata) != skip_meta(&other.metadata) {
            return false;
        }
        for (left, right) in self.rows.iter().zip(&other.rows) {
            for ((a, b), column) in left.iter().zip(right).zip(&self.columns) {
                if column.timing {
                    continue;
                }
                if a.render() != b.render() {
                    return false;
                }
            }
        }
        true
    }
}

fn parse_cell(field: &str) -> Cell {
    if let Ok(v) = field.parse::<i64>() {
        return Cell::Int(v);
    }
    if let Ok(v) = field.parse::<f64>() {
        return Cell::Float(v);
    }
    Cell::Text(field.to_string())
}

/// Reads a file written by [`ResultTable::write_csv`] back into memory.
pub fn parse_csv(path: &Path) -> Result<ResultTable, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut metadata = BTreeMap::new();
    let mut timing_names: Vec<String> = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some((key, value)) = comment.split_once(':') {
                let key = key.trim().to_string();
                let value = value.trim().to_string();
                if key == "timing-columns" {
                    timing_names = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect();
                } else {
                    metadata.insert(key, value);
                }
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }

    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::Format(format!("csv header parse failed: {e}")))?
        .clone();
    let columns: Vec<Column> = headers
        .iter()
        .map(|name| Column {
            name: name.to_string(),
            timing: timing_names.iter().any(|t| t == name),
        })
        .collect();

    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("table")
        .to_string();
    let mut table = ResultTable::new(&stem, columns, metadata);
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Format(format!("csv row parse failed: {e}")))?;
        table.push_row(record.iter().map(parse_cell).collect());
    }
    Ok(table)
}
