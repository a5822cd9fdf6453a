//! Flat-file formats: `#` metadata headers, comma-delimited tables,
//! two-column traces and one-value-per-line quadrature exports.

use std::fmt::Write as _;
use std::io::{self, Write};

pub const TOOL_VERSION: &str = concat!("gmcs ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("no data rows")]
    Empty,
}

/// Comment block opening every output file: tool version, the command line
/// options that shaped the run, and the fully resolved config.
#[derive(Debug, Clone, Default)]
pub struct Metadata {
    pub command: String,
    pub options: Vec<(String, String)>,
    pub config_source: Option<String>,
    pub config_toml: Option<String>,
}

impl Metadata {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            ..Self::default()
        }
    }

    pub fn option(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.options.push((key.to_string(), value.to_string()));
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# {TOOL_VERSION}").unwrap();
        writeln!(s, "# command: {}", self.command).unwrap();
        for (k, v) in &self.options {
            writeln!(s, "# option: {k} = {v}").unwrap();
        }
        if let Some(src) = &self.config_source {
            writeln!(s, "# config source: {src}").unwrap();
        }
        if let Some(toml) = &self.config_toml {
            writeln!(s, "# resolved config:").unwrap();
            for line in toml.lines() {
                if line.is_empty() {
                    writeln!(s, "#").unwrap();
                } else {
                    writeln!(s, "#   {line}").unwrap();
                }
            }
        }
        s
    }
}

/// Metadata header, a header row naming the columns, then one comma-delimited
/// row per record. Floats use the shortest representation that round-trips.
pub fn write_table<W: Write>(mut w: W, meta: &Metadata, columns: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    w.write_all(meta.render().as_bytes())?;
    writeln!(w, "{}", columns.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()
}

/// One value per line after the metadata header.
pub fn write_values<W: Write>(mut w: W, meta: &Metadata, values: &[f64]) -> io::Result<()> {
    w.write_all(meta.render().as_bytes())?;
    for v in values {
        writeln!(w, "{v:?}")?;
    }
    w.flush()
}

/// Two-column trace (time_seconds, volts).
pub fn write_trace<W: Write>(w: W, meta: &Metadata, sample_period_s: f64, samples: &[f64]) -> io::Result<()> {
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i as f64 * sample_period_s, *v])
        .collect();
    write_table(w, meta, &["time_seconds", "volts"], &rows)
}

/// Rows of a two-column numeric file. Blank lines and `#` comments are
/// skipped, columns split on commas or whitespace, and a single non-numeric
/// header row before the first data row is allowed.
pub fn read_two_column(text: &str) -> Result<Vec<(f64, f64)>, ParseError> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let err = |message: String| ParseError::Line { line: i + 1, message };
        if fields.len() != 2 {
            return Err(err(format!("expected 2 columns, found {}", fields.len())));
        }
        let parsed: Vec<Result<f64, _>> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match (&parsed[0], &parsed[1]) {
            (Ok(x), Ok(y)) => {
                if !x.is_finite() || !y.is_finite() {
                    return Err(err("non-finite value".into()));
                }
                rows.push((*x, *y));
            }
            _ if rows.is_empty() && !header_seen && parsed.iter().all(Result::is_err) => header_seen = true,
            _ => {
                let bad = fields
                    .iter()
                    .zip(&parsed)
                    .find(|(_, p)| p.is_err())
                    .map(|(f, _)| *f)
                    .unwrap_or("");
                return Err(err(format!("cannot parse `{bad}` as a number")));
            }
        }
    }
    if rows.is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(rows)
}

/// Uniformly sampled trace read from a two-column file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace {
    pub sample_period_s: f64,
    pub start_s: f64,
    pub samples: Vec<f64>,
}

pub fn read_trace(text: &str) -> Result<RawTrace, ParseError> {
    let rows = read_two_column(text)?;
    if rows.len() < 2 {
        return Err(ParseError::Line {
            line: 0,
            message: "a trace needs at least two samples".into(),
        });
    }
    let span = rows[rows.len() - 1].0 - rows[0].0;
    let dt = span / (rows.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(ParseError::Line {
            line: 0,
            message: "time column must increase".into(),
        });
    }
    // locate the offending data row for the error message
    for (k, w) in rows.windows(2).enumerate() {
        let step = w[1].0 - w[0].0;
        if ((step - dt) / dt).abs() > 1e-3 {
            let line = data_line_number(text, k + 2);
            return Err(ParseError::Line {
                line,
                message: format!("non-uniform sampling: step {step:e} s, expected {dt:e} s"),
            });
        }
    }
    Ok(RawTrace {
        sample_period_s: dt,
        start_s: rows[0].0,
        samples: rows.into_iter().map(|r| r.1).collect(),
    })
}

/// Line number of the `n`-th (1-based) numeric data row.
fn data_line_number(text: &str, n: usize) -> usize {
    let mut seen = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let numeric = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .find(|f| !f.is_empty())
            .is_some_and(|f| f.parse::<f64>().is_ok());
        if numeric {
            seen += 1;
            if seen == n {
                return i + 1;
            }
        }
    }
    0
}
