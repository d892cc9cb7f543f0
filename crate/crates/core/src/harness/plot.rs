//! Single line chart from two CSV columns, optionally split by a series column.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::HarnessError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub csv: PathBuf,
    pub x: String,
    pub y: String,
    pub series: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, HarnessError> {
    headers.iter().position(|h| h == name).ok_or_else(|| {
        let known: Vec<&str> = headers.iter().collect();
        HarnessError::Input(format!(
            "{}: no column {name:?}; columns are {}",
            path.display(),
            known.join(", ")
        ))
    })
}

fn number(raw: &str, col: &str, line: usize, path: &Path) -> Result<f64, HarnessError> {
    raw.trim().parse::<f64>().map_err(|_| {
        HarnessError::Input(format!("{}: line {line}: column {col:?} is not numeric: {raw:?}", path.display()))
    })
}

fn csv_error(path: &Path, err: csv::Error) -> HarnessError {
    if err.is_io_error() {
        match err.into_kind() {
            csv::ErrorKind::Io(e) => HarnessError::io(path, e),
            _ => unreachable!("checked io kind"),
        }
    } else {
        HarnessError::Input(format!("{}: {err}", path.display()))
    }
}

fn read_series(spec: &PlotSpec) -> Result<Vec<Series>, HarnessError> {
    let path = spec.csv.as_path();
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() {
        return Err(HarnessError::Input(format!("{}: empty CSV (no header)", path.display())));
    }
    let xi = column(&headers, &spec.x, path)?;
    let yi = column(&headers, &spec.y, path)?;
    let si = spec.series.as_deref().map(|s| column(&headers, s, path)).transpose()?;
    let mut series: Vec<Series> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = k + 2;
        let x = number(&record[xi], &spec.x, line, path)?;
        let y = number(&record[yi], &spec.y, line, path)?;
        let name = si.map_or_else(String::new, |i| record[i].to_string());
        match series.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push((x, y)),
            None => series.push(Series { name, points: vec![(x, y)] }),
        }
    }
    if series.is_empty() {
        return Err(HarnessError::Input(format!("{}: CSV has a header but no data rows", path.display())));
    }
    for s in &mut series {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    series.sort_by(|a, b| match (a.name.parse::<f64>(), b.name.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.name.cmp(&b.name),
    });
    Ok(series)
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    match (hi - lo).partial_cmp(&0.0) {
        Some(Ordering::Greater) => {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
        _ => {
            let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
            (lo - pad, hi + pad)
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".into() } else { s.to_string() }
    } else {
        format!("{v:.2e}")
    }
}

/// Render the chart as SVG text; identical input gives identical bytes.
pub fn render_svg(spec: &PlotSpec) -> Result<String, HarnessError> {
    let series = read_series(spec)?;
    let (x0, x1) = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#333"/>"##
    );
    for k in 0..=TICKS {
        let t = k as f64 / TICKS as f64;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#333"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT:.2}" y2="{py:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(&spec.x)
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&spec.y)
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(x), sy(y));
        }
        if let Some(col) = &spec.series {
            let ly = TOP + 12.0 + 16.0 * k as f64;
            let lx = WIDTH - RIGHT + 12.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}={}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(col),
                escape(&s.name)
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(spec: &PlotSpec, out: &Path) -> Result<(), HarnessError> {
    let svg = render_svg(spec)?;
    std::fs::write(out, svg).map_err(|e| HarnessError::io(out, e))
}
