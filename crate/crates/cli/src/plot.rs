//! Static SVG convergence plots: log-log axes, one polyline per input CSV,
//! legend from file names.
//!
//! The x-axis is `data_pass + 1` (so the initial point is plottable on a log
//! axis); values are floored at `1e-16` for the log scale; leading all-zero
//! points of a series are dropped unless the whole series is zero, in which
//! case it is floored and plotted flat.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cgtvr::error::{Error, Result};

use crate::metrics_csv::read_metric_column;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 620.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 40.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 70.0;
const FLOOR: f64 = 1e-16;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

/// Render `metric` from each CSV into one SVG. Inputs whose metric column is
/// entirely empty are skipped with a warning on stderr; if nothing remains,
/// an error is returned.
pub fn render_svg(csv_paths: &[PathBuf], metric: &str, out: &Path) -> Result<()> {
    let mut series = Vec::new();
    for path in csv_paths {
        let raw = read_metric_column(path, metric)?;
        if raw.is_empty() {
            eprintln!(
                "warning: {} has no values for metric '{metric}', skipping",
                path.display()
            );
            continue;
        }
        let all_zero = raw.iter().all(|&(_, y)| y == 0.0);
        let points: Vec<(f64, f64)> = raw
            .iter()
            .skip_while(|&&(_, y)| !all_zero && y == 0.0)
            .map(|&(x, y)| (x + 1.0, y.abs().max(FLOOR)))
            .collect();
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        series.push(Series { label, points });
    }
    if series.is_empty() {
        return Err(Error::invalid(format!(
            "no plottable series for metric '{metric}'"
        )));
    }
    let svg = draw(&series, metric);
    std::fs::write(out, svg)?;
    Ok(())
}

fn log_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        let l = v.log10();
        lo = lo.min(l);
        hi = hi.max(l);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    if (hi - lo).abs() < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn draw(series: &[Series], metric: &str) -> String {
    let (x_lo, x_hi) = log_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y_lo, y_hi) = log_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x.log10() - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| MARGIN_T + (y_hi - y.log10()) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="28" font-family="sans-serif" font-size="18" text-anchor="middle">{metric} vs data passes (log-log)</text>"#,
        WIDTH / 2.0
    );

    // frame
    let _ = write!(
        svg,
        r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333" stroke-width="1"/>"##
    );

    // decade grid lines and tick labels
    for k in (x_lo.ceil() as i64)..=(x_hi.floor() as i64) {
        let x = px(10f64.powi(k as i32));
        let _ = write!(
            svg,
            r##"<line x1="{x:.2}" y1="{MARGIN_T}" x2="{x:.2}" y2="{}" stroke="#ddd" stroke-width="1"/>"##,
            MARGIN_T + plot_h
        );
        let _ = write!(
            svg,
            r#"<text x="{x:.2}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">1e{k}</text>"#,
            MARGIN_T + plot_h + 20.0
        );
    }
    for k in (y_lo.ceil() as i64)..=(y_hi.floor() as i64) {
        let y = py(10f64.powi(k as i32));
        let _ = write!(
            svg,
            r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd" stroke-width="1"/>"##,
            MARGIN_L + plot_w
        );
        let _ = write!(
            svg,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">1e{k}</text>"#,
            MARGIN_L - 8.0,
            y + 4.0
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">data passes + 1</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 18.0
    );

    // polylines
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut pts = String::new();
        for &(x, y) in &s.points {
            let _ = write!(pts, "{:.2},{:.2} ", px(x), py(y));
        }
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            pts.trim_end()
        );
        // legend entry
        let ly = MARGIN_T + 16.0 + idx as f64 * 18.0;
        let lx = MARGIN_L + plot_w - 230.0;
        let _ = write!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
            lx + 24.0
        );
        let _ = write!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(dir: &Path, name: &str, rows: &[(usize, f64, f64)]) -> PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "{}", crate::metrics_csv::CSV_HEADER).unwrap();
        for (t, dp, v) in rows {
            writeln!(f, "{t},{dp},{v},{v},{v},{v},,0,").unwrap();
        }
        path
    }

    #[test]
    fn two_inputs_give_two_polylines_and_legend_entries() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(dir.path(), "alpha.csv", &[(0, 1.0, 1.0), (1, 2.0, 0.5)]);
        let b = write_csv(dir.path(), "beta.csv", &[(0, 1.0, 2.0), (1, 2.0, 1.0)]);
        let out = dir.path().join("plot.svg");
        render_svg(&[a, b], "grad_norm_sq", &out).unwrap();
        let svg = std::fs::read_to_string(&out).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("alpha"));
        assert!(svg.contains("beta"));
    }

    #[test]
    fn monotone_series_descends_in_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(
            dir.path(),
            "mono.csv",
            &[(0, 1.0, 1.0), (1, 2.0, 0.1), (2, 4.0, 0.01)],
        );
        let out = dir.path().join("plot.svg");
        render_svg(&[a], "objective", &out).unwrap();
        let svg = std::fs::read_to_string(&out).unwrap();
        let pts = svg
            .split("<polyline points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        let ys: Vec<f64> = pts
            .split_whitespace()
            .map(|p| p.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        // y pixels grow downward, so decreasing values mean increasing y
        assert!(ys.windows(2).all(|w| w[1] > w[0]), "pixels {ys:?}");
    }

    #[test]
    fn all_zero_series_is_floored_not_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(dir.path(), "zero.csv", &[(0, 1.0, 0.0), (1, 2.0, 0.0)]);
        let out = dir.path().join("plot.svg");
        render_svg(&[a], "consensus_error", &out).unwrap();
        let svg = std::fs::read_to_string(&out).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn leading_zero_rows_are_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(
            dir.path(),
            "lead.csv",
            &[(0, 1.0, 0.0), (1, 2.0, 0.5), (2, 3.0, 0.25)],
        );
        let out = dir.path().join("plot.svg");
        render_svg(&[a], "consensus_error", &out).unwrap();
        let svg = std::fs::read_to_string(&out).unwrap();
        let pts = svg
            .split("<polyline points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        assert_eq!(pts.split_whitespace().count(), 2);
    }

    #[test]
    fn empty_metric_column_is_skipped_with_error_when_alone() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(dir.path(), "empty.csv", &[(0, 1.0, 1.0)]);
        let out = dir.path().join("plot.svg");
        // L_min column is written empty by the helper
        assert!(render_svg(&[a], "L_min", &out).is_err());
    }
}
