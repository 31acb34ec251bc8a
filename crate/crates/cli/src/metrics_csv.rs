//! Metrics CSV emission and column extraction.
//!
//! The schema is fixed:
//! `t,data_pass,grad_norm_sq,grad_map_sq,objective,consensus_error,L_min,restarts_total,potential`
//! with rows in time order, floats in round-trip precision, and optional
//! columns left as empty cells.

use std::io::Write;
use std::path::Path;

use cgtvr::error::Result;
use cgtvr::optimizers::MetricsRow;

pub const CSV_HEADER: &str =
    "t,data_pass,grad_norm_sq,grad_map_sq,objective,consensus_error,L_min,restarts_total,potential";

fn fmt(v: f64) -> String {
    // Debug formatting of f64 is the shortest representation that parses
    // back to the same bits.
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 96 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.t,
            fmt(r.data_pass),
            fmt(r.grad_norm_sq),
            fmt(r.grad_map_sq),
            fmt(r.objective),
            fmt(r.consensus_error),
            fmt_opt(r.l_min),
            r.restarts_total,
            fmt_opt(r.potential),
        ));
    }
    out
}

pub fn emit_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(rows_to_csv(rows).as_bytes())?;
    Ok(())
}

/// Extract `(data_pass, metric)` pairs from a metrics CSV, skipping rows
/// with an empty metric cell.
pub fn read_metric_column(path: &Path, metric: &str) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let x_idx = headers
        .iter()
        .position(|h| h == "data_pass")
        .ok_or_else(|| cgtvr::Error::Ingestion("missing data_pass column".into()))?;
    let y_idx = headers
        .iter()
        .position(|h| h == metric)
        .ok_or_else(|| cgtvr::Error::Ingestion(format!("metric column '{metric}' not found")))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let x: f64 = match record.get(x_idx).map(str::trim) {
            Some(cell) if !cell.is_empty() => cell
                .parse()
                .map_err(|_| cgtvr::Error::Ingestion("bad data_pass cell".into()))?,
            _ => continue,
        };
        match record.get(y_idx).map(str::trim) {
            Some(cell) if !cell.is_empty() => {
                let y: f64 = cell
                    .parse()
                    .map_err(|_| cgtvr::Error::Ingestion(format!("bad {metric} cell")))?;
                out.push((x, y));
            }
            _ => continue,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row(t: usize) -> MetricsRow {
        MetricsRow {
            t,
            data_pass: 1.5 + t as f64,
            grad_norm_sq: 0.25,
            grad_map_sq: 0.25,
            objective: 1.0 / 3.0,
            consensus_error: 0.0,
            l_min: Some(2.0),
            restarts_total: 3,
            potential: None,
        }
    }

    #[test]
    fn golden_header_and_first_row() {
        let csv = rows_to_csv(&[sample_row(0)]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "0,1.5,0.25,0.25,0.3333333333333333,0.0,2.0,3,"
        );
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn optional_columns_are_empty_cells() {
        let mut row = sample_row(1);
        row.l_min = None;
        let csv = rows_to_csv(&[row]);
        let line = csv.lines().nth(1).unwrap();
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 9);
        assert_eq!(cells[6], "");
        assert_eq!(cells[8], "");
    }

    #[test]
    fn round_trips_through_reader() {
        let rows: Vec<MetricsRow> = (0..4).map(sample_row).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        emit_metrics_csv(&rows, &path).unwrap();
        let col = read_metric_column(&path, "grad_norm_sq").unwrap();
        assert_eq!(col.len(), 4);
        assert_eq!(col[0], (1.5, 0.25));
        // empty potential column yields no points
        let pot = read_metric_column(&path, "potential").unwrap();
        assert!(pot.is_empty());
    }
}
