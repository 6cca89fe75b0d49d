//! Row/column result tables with a column-mean row, CSV and Markdown output.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Marker written for absent cells.
pub const ABSENT: &str = "NA";
pub const MEAN_ROW: &str = "mean";
/// Rows shown on the terminal before truncating.
pub const TERMINAL_ROWS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: String,
    pub cells: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    /// Header of the label column.
    pub row_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    /// Free-form remarks (absent methods, skipped inputs, failures).
    pub notes: Vec<String>,
}

impl ComparisonTable {
    pub fn new(row_header: impl Into<String>, columns: Vec<String>) -> Self {
        Self {
            row_header: row_header.into(),
            columns,
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, cells: Vec<Option<f64>>) {
        assert_eq!(cells.len(), self.columns.len(), "row width must match the header");
        self.rows.push(Row {
            label: label.into(),
            cells,
        });
    }

    pub fn push_absent(&mut self, label: impl Into<String>, reason: impl AsRef<str>) {
        let label = label.into();
        self.notes.push(format!("{label}: {}", reason.as_ref()));
        self.rows.push(Row {
            label,
            cells: vec![None; self.columns.len()],
        });
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn row(&self, label: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn cell(&self, label: &str, column: &str) -> Option<f64> {
        let j = self.column_index(column)?;
        self.row(label)?.cells[j]
    }

    /// Mean over the populated cells of each column; absent if none are.
    pub fn means(&self) -> Vec<Option<f64>> {
        (0..self.columns.len())
            .map(|j| {
                let vals: Vec<f64> = self.rows.iter().filter_map(|r| r.cells[j]).collect();
                if vals.is_empty() {
                    None
                } else {
                    Some(vals.iter().sum::<f64>() / vals.len() as f64)
                }
            })
            .collect()
    }

    /// CSV with a trailing mean row. Values use the shortest round-trip
    /// representation so re-parsing is exact.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.row_header.clone()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(record(&row.label, &row.cells)).expect("in-memory write");
        }
        w.write_record(record(MEAN_ROW, &self.means())).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    /// Parses [`to_csv`](Self::to_csv) output. The mean row is dropped and
    /// recomputed on demand.
    pub fn from_csv(text: &str) -> CliResult<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = r
            .headers()
            .map_err(|e| CliError::Runtime(format!("table header: {e}")))?
            .clone();
        let mut it = headers.iter();
        let row_header = it.next().unwrap_or_default().to_string();
        let mut table = Self::new(row_header, it.map(str::to_string).collect());
        for rec in r.records() {
            let rec = rec.map_err(|e| CliError::Runtime(format!("table row: {e}")))?;
            let label = rec.get(0).unwrap_or_default().to_string();
            if label == MEAN_ROW {
                continue;
            }
            let cells = rec
                .iter()
                .skip(1)
                .map(|s| parse_cell(s))
                .collect::<CliResult<Vec<_>>>()?;
            if cells.len() != table.columns.len() {
                return Err(CliError::Runtime(format!("row {label} has {} cells", cells.len())));
            }
            table.push(label, cells);
        }
        Ok(table)
    }

    /// Aligned Markdown with the per-column best and worst values marked
    /// `(max)` and `(min)`. `max_rows` truncates the body rows.
    pub fn to_markdown(&self, max_rows: Option<usize>) -> String {
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut header = vec![self.row_header.clone()];
        header.extend(self.columns.iter().cloned());
        grid.push(header);

        let extrema: Vec<Option<(f64, f64)>> = (0..self.columns.len())
            .map(|j| {
                let vals: Vec<f64> = self
                    .rows
                    .iter()
                    .filter_map(|r| r.cells[j])
                    .filter(|v| v.is_finite())
                    .collect();
                if vals.len() < 2 {
                    return None;
                }
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (hi > lo).then_some((lo, hi))
            })
            .collect();

        let shown = max_rows.unwrap_or(self.rows.len()).min(self.rows.len());
        for row in &self.rows[..shown] {
            let mut line = vec![row.label.clone()];
            for (j, c) in row.cells.iter().enumerate() {
                let mut s = format_cell(*c);
                if let (Some(v), Some((lo, hi))) = (c, extrema[j]) {
                    if *v == hi {
                        s.push_str(" (max)");
                    } else if *v == lo {
                        s.push_str(" (min)");
                    }
                }
                line.push(s);
            }
            grid.push(line);
        }
        let mut mean = vec![MEAN_ROW.to_string()];
        mean.extend(self.means().into_iter().map(format_cell));
        grid.push(mean);

        let widths: Vec<usize> = (0..grid[0].len())
            .map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0).max(3))
            .collect();
        let mut out = String::new();
        for (i, line) in grid.iter().enumerate() {
            out.push('|');
            for (j, cell) in line.iter().enumerate() {
                let pad = widths[j] - cell.chars().count();
                if j == 0 {
                    let _ = write!(out, " {cell}{} |", " ".repeat(pad));
                } else {
                    let _ = write!(out, " {}{cell} |", " ".repeat(pad));
                }
            }
            out.push('\n');
            if i == 0 {
                out.push('|');
                for (j, w) in widths.iter().enumerate() {
                    let dashes = "-".repeat(*w);
                    if j == 0 {
                        let _ = write!(out, " {dashes} |");
                    } else {
                        let _ = write!(out, " {}: |", &dashes[1..]);
                    }
                }
                out.push('\n');
            }
        }
        if shown < self.rows.len() {
            let _ = writeln!(out, "\n... {} more rows in the CSV output", self.rows.len() - shown);
        }
        for note in &self.notes {
            let _ = writeln!(out, "\n- {note}");
        }
        out
    }

    pub fn to_terminal(&self) -> String {
        self.to_markdown(Some(TERMINAL_ROWS))
    }

    /// Writes `<stem>.csv` and `<stem>.md` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> CliResult<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv_path, self.to_csv()).map_err(|e| CliError::io(&csv_path, e))?;
        let md_path = dir.join(format!("{stem}.md"));
        std::fs::write(&md_path, self.to_markdown(None)).map_err(|e| CliError::io(&md_path, e))?;
        Ok(())
    }
}

fn record(label: &str, cells: &[Option<f64>]) -> Vec<String> {
    std::iter::once(label.to_string())
        .chain(cells.iter().map(|c| match c {
            Some(v) => format!("{v}"),
            None => ABSENT.to_string(),
        }))
        .collect()
}

fn parse_cell(s: &str) -> CliResult<Option<f64>> {
    if s == ABSENT {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| CliError::Runtime(format!("bad table cell {s:?}")))
}

fn format_cell(c: Option<f64>) -> String {
    match c {
        Some(v) if v.is_infinite() => format!("{v}"),
        Some(v) if v != 0.0 && v.abs() < 1e-3 => format!("{v:.3e}"),
        Some(v) => format!("{v:.4}"),
        None => ABSENT.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ComparisonTable {
        let mut t = ComparisonTable::new("method", vec!["uiqm".into(), "psnr".into()]);
        t.push("he", vec![Some(3.25), Some(f64::INFINITY)]);
        t.push("udcp", vec![Some(0.1 + 0.2), None]);
        t.push_absent("analytic", "no parameters");
        t
    }

    #[test]
    fn mean_row_skips_absent_cells() {
        let t = sample();
        let m = t.means();
        assert!((m[0].unwrap() - (3.25 + 0.1 + 0.2) / 2.0).abs() < 1e-12);
        assert_eq!(m[1], Some(f64::INFINITY));
        let empty = ComparisonTable::new("x", vec!["a".into()]);
        assert_eq!(empty.means(), vec![None]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let back = ComparisonTable::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back.rows, t.rows);
        assert_eq!(back.columns, t.columns);
        assert!(t.to_csv().contains("analytic,NA,NA"));
    }

    #[test]
    fn csv_quotes_awkward_labels() {
        let mut t = ComparisonTable::new("image", vec!["mse".into()]);
        t.push("a,b \"c\"", vec![Some(1.0)]);
        let back = ComparisonTable::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back.rows[0].label, "a,b \"c\"");
    }

    #[test]
    fn markdown_marks_extrema_and_truncates() {
        let mut t = ComparisonTable::new("image", vec!["v".into()]);
        for i in 0..60 {
            t.push(format!("img{i}"), vec![Some(i as f64)]);
        }
        let md = t.to_terminal();
        assert!(md.contains("0.0000 (min)"));
        assert!(!md.contains("(max)"));
        assert!(md.contains("10 more rows"));
        assert!(t.to_markdown(None).contains("59.0000 (max)"));
    }
}
