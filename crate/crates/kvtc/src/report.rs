//! Plain-text and CSV table rendering for the CLI. Output formats are pinned
//! by golden tests; change them deliberately.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
}

/// Renders a table. Text mode pads columns with two-space separators; CSV
/// mode quotes nothing (callers keep cells comma-free).
pub fn render_table(headers: &[&str], rows: &[Vec<String>], format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut out = String::new();
            out.push_str(&headers.join(","));
            out.push('\n');
            for row in rows {
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out
        }
        TableFormat::Text => {
            let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
            for row in rows {
                for (i, cell) in row.iter().enumerate() {
                    if cell.len() > widths[i] {
                        widths[i] = cell.len();
                    }
                }
            }
            let mut out = String::new();
            let mut line = |cells: Vec<&str>| {
                let mut parts = Vec::with_capacity(cells.len());
                for (i, cell) in cells.iter().enumerate() {
                    parts.push(format!("{:<width$}", cell, width = widths[i]));
                }
                out.push_str(parts.join("  ").trim_end());
                out.push('\n');
            };
            line(headers.to_vec());
            for row in rows {
                line(row.iter().map(|s| s.as_str()).collect());
            }
            out
        }
    }
}

/// Renders an error report: one line of overall error, then a per-position
/// table (flagged zero-norm rows marked), then any calibration-size curve
/// points.
pub fn render_error_report(report: &crate::calib::ErrorReport, format: TableFormat) -> String {
    let mut out = format!("overall relative error: {}\n", fmt_f64(report.overall));
    let rows: Vec<Vec<String>> = report
        .per_position
        .iter()
        .enumerate()
        .map(|(i, e)| {
            vec![
                i.to_string(),
                fmt_f64(*e),
                if report.flagged_rows.contains(&i) { "zero-norm" } else { "" }.to_string(),
            ]
        })
        .collect();
    out.push_str(&render_table(&["position", "relative_error", "flag"], &rows, format));
    if !report.size_curve.is_empty() {
        let rows: Vec<Vec<String>> = report
            .size_curve
            .iter()
            .map(|(n, e)| vec![n.to_string(), fmt_f64(*e)])
            .collect();
        out.push_str(&render_table(&["calibration_rows", "heldout_error"], &rows, format));
    }
    out
}

/// Fixed-precision float formatting shared by all tables so runs diff
/// cleanly.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e4 || v.abs() < 1e-4 {
        format!("{v:.6e}")
    } else {
        format!("{v:.6}")
    }
}
