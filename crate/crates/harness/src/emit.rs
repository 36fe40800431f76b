//! CSV and SVG artifacts for sweep tables.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};
use crate::metrics::MetricRow;
use crate::sweeps::Table;

pub const COLUMNS: [&str; 6] = [
    "sweep_value",
    "rrmse_tau",
    "rrmse_nu",
    "success_rate",
    "mean_runtime_s",
    "trials",
];

/// Description of the aggregation, repeated in every CSV header.
pub const POOLING: &str = "rrmse=sqrt(sum of squared normalized errors over all targets of all successful trials / their count); failed trials excluded from rrmse and counted in success_rate";

/// Shortest round-trip decimal; `NaN`, `inf` and `-inf` for non-finite values.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        v.to_string()
    }
}

/// `# ...` comment line followed by the column header and one line per row.
pub fn write_csv<W: Write>(table: &Table, config_hash: &str, w: W) -> Result<()> {
    let mut w = w;
    writeln!(
        w,
        "# gesedd table={} sweep_value={} config_hash={} success_rate={} pooling: {}",
        table.name, table.axis, config_hash, table.success_meaning, POOLING
    )?;
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(COLUMNS)?;
    for r in &table.rows {
        out.write_record([
            format_value(r.sweep_value),
            format_value(r.rrmse_tau),
            format_value(r.rrmse_nu),
            format_value(r.success_rate),
            format_value(r.mean_runtime_s),
            r.trials.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn csv_string(table: &Table, config_hash: &str) -> String {
    let mut buf = Vec::new();
    write_csv(table, config_hash, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("ascii output")
}

/// Parses a CSV produced by [`write_csv`].
pub fn read_csv<R: Read>(r: R) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(COLUMNS) {
        return Err(HarnessError::Config(format!(
            "unexpected CSV header {headers:?}"
        )));
    }
    let mut rows = vec![];
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad number {:?}", &rec[i])))
        };
        rows.push(MetricRow {
            sweep_value: f(0)?,
            rrmse_tau: f(1)?,
            rrmse_nu: f(2)?,
            success_rate: f(3)?,
            mean_runtime_s: f(4)?,
            trials: rec[5]
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad trial count {:?}", &rec[5])))?,
        });
    }
    Ok(rows)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const SERIES: [(&str, &str); 3] = [
    ("rrmse_tau", "#1f77b4"),
    ("rrmse_nu", "#d62728"),
    ("success_rate", "#2ca02c"),
];

fn series_value(r: &MetricRow, i: usize) -> f64 {
    match i {
        0 => r.rrmse_tau,
        1 => r.rrmse_nu,
        _ => r.success_rate,
    }
}

/// Line plot of the metric columns against the finite sweep values.
pub fn svg_string(table: &Table) -> String {
    let rows: Vec<&MetricRow> = table
        .rows
        .iter()
        .filter(|r| r.sweep_value.is_finite())
        .collect();
    let finite = |v: f64| v.is_finite().then_some(v);
    let xs: Vec<f64> = rows.iter().map(|r| r.sweep_value).collect();
    let ys: Vec<f64> = rows
        .iter()
        .flat_map(|r| (0..SERIES.len()).filter_map(move |i| finite(series_value(r, i))))
        .collect();
    let (x0, x1) = span(&xs);
    let (_, y1) = span(&ys);
    let y0 = 0.0f64.min(ys.iter().copied().fold(0.0, f64::min));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        table.name
    );
    let (bx, by) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{bx:.1},{:.1} L{bx:.1},{by:.1} L{:.1},{by:.1}" stroke="black" fill="none"/>"#,
        MARGIN,
        WIDTH - MARGIN
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(fx),
            by + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            bx - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0,
        table.axis
    );
    for (i, (name, color)) in SERIES.iter().enumerate() {
        let mut d = String::new();
        let mut pen_down = false;
        for r in &rows {
            match finite(series_value(r, i)) {
                Some(y) => {
                    let _ = write!(
                        d,
                        "{}{:.2},{:.2} ",
                        if pen_down { "L" } else { "M" },
                        sx(r.sweep_value),
                        sy(y)
                    );
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        if !d.is_empty() {
            let _ = writeln!(
                s,
                r#"<path d="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#,
                d.trim_end()
            );
        }
        for r in &rows {
            if let Some(y) = finite(series_value(r, i)) {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                    sx(r.sweep_value),
                    sy(y)
                );
            }
        }
        let ly = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{name}</text>"#,
            WIDTH - MARGIN - 80.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn span(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) if hi > lo => (lo, hi),
        (true, true) => (lo - 0.5, hi + 0.5),
        _ => (0.0, 1.0),
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

/// Writes `<name>.csv`, `<name>.svg` and, when there are notes,
/// `<name>.notes.txt` under `dir`; returns the written paths.
pub fn emit(table: &Table, config_hash: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    if table.rows.is_empty() {
        return Err(HarnessError::Config(format!(
            "table {} has no rows",
            table.name
        )));
    }
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", table.name));
    std::fs::write(&csv_path, csv_string(table, config_hash))?;
    let svg_path = dir.join(format!("{}.svg", table.name));
    std::fs::write(&svg_path, svg_string(table))?;
    let mut paths = vec![csv_path, svg_path];
    if !table.notes.is_empty() {
        let notes_path = dir.join(format!("{}.notes.txt", table.name));
        let mut text = format!("config_hash={config_hash}\n");
        for n in &table.notes {
            text.push_str(n);
            text.push('\n');
        }
        std::fs::write(&notes_path, text)?;
        paths.push(notes_path);
    }
    Ok(paths)
}
