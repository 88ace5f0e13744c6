//! CSV serialization of run traces and the byte-cost comparison across runs.
//!
//! Floats are written with `{}` formatting, which emits the shortest decimal
//! string that parses back to the identical bit pattern, so a written trace
//! reads back exactly.

use std::fmt::Write as _;

use crate::solver::TraceRow;

pub const CSV_HEADER: &str =
    "iter,f_gap,dist_sq,bytes_up_cum,bytes_down_cum,hessians_computed_cum,grads_computed_cum,participated";

/// Optimality-gap levels the comparison table reports byte costs at.
pub const GAP_LEVELS: [f64; 4] = [1e-4, 1e-6, 1e-8, 1e-10];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CsvError {
    #[error("csv header mismatch: expected {CSV_HEADER:?}, found {found:?}")]
    Header { found: String },
    #[error("csv line {line}: {what}")]
    Row { line: usize, what: String },
}

/// Renders rows to CSV, keeping every row whose iteration number is a
/// multiple of `record_every` plus the last row. Counters are cumulative, so
/// thinning drops resolution without losing totals.
pub fn write_rows_csv(rows: &[TraceRow], record_every: u64) -> String {
    assert!(record_every >= 1, "record_every must be at least 1");
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        let keep = row.iter % record_every == 0 || i + 1 == rows.len();
        if !keep {
            continue;
        }
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.iter,
            row.f_gap,
            row.dist_sq,
            row.bytes_up_cum,
            row.bytes_down_cum,
            row.hessians_computed_cum,
            row.grads_computed_cum,
            row.participated,
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Parses a trace CSV produced by [`write_rows_csv`], checking the header and
/// the row shape.
pub fn read_trace_csv(text: &str) -> Result<Vec<TraceRow>, CsvError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != CSV_HEADER {
        return Err(CsvError::Header { found: header.to_string() });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(CsvError::Row {
                line: line_no,
                what: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let int = |idx: usize| -> Result<u64, CsvError> {
            fields[idx].parse().map_err(|e| CsvError::Row {
                line: line_no,
                what: format!("field {}: {e}", idx + 1),
            })
        };
        let float = |idx: usize| -> Result<f64, CsvError> {
            fields[idx].parse().map_err(|e| CsvError::Row {
                line: line_no,
                what: format!("field {}: {e}", idx + 1),
            })
        };
        rows.push(TraceRow {
            iter: int(0)?,
            f_gap: float(1)?,
            dist_sq: float(2)?,
            bytes_up_cum: int(3)?,
            bytes_down_cum: int(4)?,
            hessians_computed_cum: int(5)?,
            grads_computed_cum: int(6)?,
            participated: int(7)?,
        });
    }
    Ok(rows)
}

/// Builds the comparison table: for each gap level, the total bytes moved
/// (uplink plus downlink, all devices) by the first recorded iteration whose
/// gap is at or below the level, per labeled run.
pub fn compare_runs(runs: &[(String, Vec<TraceRow>)]) -> String {
    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["gap".to_string()];
    header.extend(runs.iter().map(|(label, _)| label.clone()));
    cells.push(header);
    for level in GAP_LEVELS {
        let mut row = vec![format!("{level:.0e}")];
        for (_, rows) in runs {
            let hit = rows.iter().find(|r| r.f_gap <= level);
            row.push(match hit {
                Some(r) => (r.bytes_up_cum + r.bytes_down_cum).to_string(),
                None => "not reached".to_string(),
            });
        }
        cells.push(row);
    }

    let columns = cells[0].len();
    let widths: Vec<usize> = (0..columns)
        .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            write!(line, "{cell:<width$}", width = widths[c]).expect("writing to a String cannot fail");
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
