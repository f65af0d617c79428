//! Test-result and summary tables in text, CSV and JSON.
//!
//! Text tables print three decimals and mark p-values below α with `**`. CSV and
//! JSON keep full precision.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epa::{EpaResult, TestKind};
use crate::panel::SummaryRow;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to report")]
    EmptyResults,
    #[error("unknown output format `{0}` (expected text, csv or json)")]
    UnknownFormat(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Text => "txt",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub statistic: f64,
    pub p_value: f64,
}

impl From<&EpaResult> for Cell {
    fn from(r: &EpaResult) -> Self {
        Self {
            statistic: r.statistic,
            p_value: r.p_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub firm: String,
    /// One entry per column; `None` where the test was undefined.
    pub cells: Vec<Option<Cell>>,
}

/// One test across firms (rows) and model variants (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpaTable {
    pub test: TestKind,
    pub alpha: f64,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl EpaTable {
    pub fn new(test: TestKind, alpha: f64, columns: Vec<String>) -> Self {
        Self {
            test,
            alpha,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, firm: impl Into<String>, cells: Vec<Option<Cell>>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(ReportRow {
            firm: firm.into(),
            cells,
        });
    }

    fn check(&self) -> Result<(), ReportError> {
        if self.rows.is_empty() || self.columns.is_empty() {
            return Err(ReportError::EmptyResults);
        }
        Ok(())
    }

    pub fn render(&self, format: Format) -> Result<String, ReportError> {
        match format {
            Format::Text => self.render_text(),
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }

    /// Aligned text table with a stat and p column per variant.
    pub fn render_text(&self) -> Result<String, ReportError> {
        self.check()?;
        let mut header = vec!["firm".to_string()];
        for c in &self.columns {
            header.push(format!("{c} stat"));
            header.push(format!("{c} p"));
        }
        let mut body: Vec<Vec<String>> = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let mut line = vec![row.firm.clone()];
            for cell in &row.cells {
                match cell {
                    Some(c) => {
                        line.push(format!("{:.3}", c.statistic));
                        let p = format!("{:.3}", c.p_value);
                        line.push(if c.p_value < self.alpha { format!("**{p}**") } else { p });
                    }
                    None => {
                        line.push("n/a".into());
                        line.push("n/a".into());
                    }
                }
            }
            body.push(line);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|j| {
                body.iter()
                    .map(|l| l[j].len())
                    .chain([header[j].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let fmt_line = |cells: &[String]| {
            cells
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    if j == 0 {
                        format!("{c:<w$}", w = widths[j])
                    } else {
                        format!("{c:>w$}", w = widths[j])
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = String::new();
        let _ = writeln!(out, "{} test (** marks p < {})", self.test, self.alpha);
        let _ = writeln!(out, "{}", fmt_line(&header));
        let _ = writeln!(
            out,
            "{}",
            widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ")
        );
        for line in &body {
            let _ = writeln!(out, "{}", fmt_line(line));
        }
        Ok(out)
    }

    /// `firm,<col>_stat,<col>_p,...` with empty cells for undefined tests.
    pub fn render_csv(&self) -> Result<String, ReportError> {
        self.check()?;
        let mut out = String::from("firm");
        for c in &self.columns {
            let _ = write!(out, ",{c}_stat,{c}_p");
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.firm);
            for cell in &row.cells {
                match cell {
                    Some(c) => {
                        let _ = write!(out, ",{},{}", c.statistic, c.p_value);
                    }
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn render_json(&self) -> Result<String, ReportError> {
        self.check()?;
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Writes `table` as `<dir>/<stem>.<ext>` for each format and returns the paths.
pub fn render_tables(
    table: &EpaTable,
    formats: &[Format],
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>, ReportError> {
    table.check()?;
    formats
        .iter()
        .map(|f| {
            let path = dir.join(format!("{stem}.{}", f.extension()));
            std::fs::write(&path, table.render(*f)?).map_err(|source| ReportError::Io {
                path: path.clone(),
                source,
            })?;
            Ok(path)
        })
        .collect()
}

/// Per-firm descriptive statistics of daily RV.
pub fn render_summary(rows: &[SummaryRow], format: Format) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptyResults);
    }
    let ar = |r: &SummaryRow, prec: bool| match (r.ar1, prec) {
        (Some(v), true) => v.to_string(),
        (Some(v), false) => format!("{v:.3}"),
        (None, true) => String::new(),
        (None, false) => "n/a".into(),
    };
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
        Format::Csv => {
            let mut out = String::from("firm,n,min,mean,median,max,ar1\n");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.firm,
                    r.n,
                    r.min,
                    r.mean,
                    r.median,
                    r.max,
                    ar(r, true)
                );
            }
            Ok(out)
        }
        Format::Text => {
            let w = rows.iter().map(|r| r.firm.len()).max().unwrap_or(4).max(4);
            let mut out = format!(
                "{:<w$}  {:>6}  {:>9}  {:>9}  {:>9}  {:>9}  {:>6}\n",
                "firm", "n", "min", "mean", "median", "max", "AR(1)"
            );
            for r in rows {
                let _ = writeln!(
                    out,
                    "{:<w$}  {:>6}  {:>9.3}  {:>9.3}  {:>9.3}  {:>9.3}  {:>6}",
                    r.firm,
                    r.n,
                    r.min,
                    r.mean,
                    r.median,
                    r.max,
                    ar(r, false)
                );
            }
            Ok(out)
        }
    }
}
