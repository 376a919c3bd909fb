//! Tabular reports written as CSV with a Markdown mirror.

use std::path::Path;

use crate::error::{io_at, CliError, Result};

pub const CSV_NAME: &str = "report.csv";
pub const MARKDOWN_NAME: &str = "report.md";

/// A table of preformatted cells with a stable column order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new(columns: Vec<String>) -> Self {
        Report {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(CliError::Config(format!(
                "report row has {} cells for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(String::from).collect();
        let mut report = Report::new(columns);
        for rec in r.records() {
            report.push(rec?.iter().map(String::from).collect())?;
        }
        Ok(report)
    }

    pub fn to_markdown(&self) -> String {
        let esc = |s: &str| s.replace('|', "\\|");
        let line = |cells: &[String]| format!("| {} |\n", cells.iter().map(|c| esc(c)).collect::<Vec<_>>().join(" | "));
        let mut out = line(&self.columns);
        out.push_str(&format!("|{}\n", " --- |".repeat(self.columns.len())));
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }
}

/// A fraction as a percentage with two decimals: `0.9519` prints `95.19`.
pub fn percent(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// Writes `report.csv` and `report.md` into `dir`.
pub fn emit_report(dir: &Path, report: &Report) -> Result<()> {
    if report.rows.is_empty() {
        return Err(CliError::Config("refusing to emit an empty report".into()));
    }
    write_text(&dir.join(CSV_NAME), &report.to_csv()?)?;
    write_text(&dir.join(MARKDOWN_NAME), &report.to_markdown())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::new(vec!["region".into(), "IoU".into(), "Dice".into()]);
        r.push(vec!["Brain".into(), percent(0.9081), percent(0.9519)]).unwrap();
        r
    }

    #[test]
    fn percent_formatting() {
        assert_eq!(percent(0.9519), "95.19");
        assert_eq!(percent(1.0), "100.00");
        assert_eq!(percent(0.0), "0.00");
    }

    #[test]
    fn csv_round_trip_and_markdown_shape() {
        let r = sample();
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(Report::from_csv(&csv).unwrap(), r);
        let md = r.to_markdown();
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 3);
        for l in lines {
            assert_eq!(l.matches('|').count(), r.columns.len() + 1);
        }
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let mut r = sample();
        assert!(r.push(vec!["x".into()]).is_err());
    }
}
