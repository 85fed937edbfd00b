//! Tabular results and their CSV and SVG renderings.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::numfmt::g9;

/// A cell of a [`Table`]: numbers are written at nine significant digits.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Text(String),
    Empty,
}

impl Value {
    pub fn render(&self) -> String {
        match self {
            Value::Num(v) => g9(*v),
            Value::Text(s) => s.clone(),
            Value::Empty => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<Option<f64>> for Value {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Value::Empty, Value::Num)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric column; non-numeric cells are skipped.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().filter_map(|r| r[j].as_f64()).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Value::render))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: &Path) -> Result<PathBuf> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))?;
        Ok(path.to_path_buf())
    }
}

/// metrics.csv layout.
pub fn metrics_table(reports: &[MetricsReport]) -> Table {
    let mut t = Table::new(&MetricsReport::HEADER);
    for r in reports {
        let mut row = vec![Value::from(r.label.as_str())];
        row.extend(r.values().iter().map(|v| Value::from(*v)));
        t.push(row);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesStyle {
    #[default]
    Line,
    Scatter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub style: SeriesStyle,
}

impl Series {
    pub fn line(label: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series {
            label: label.into(),
            x,
            y,
            style: SeriesStyle::Line,
        }
    }

    pub fn scatter(label: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series {
            style: SeriesStyle::Scatter,
            ..Series::line(label, x, y)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: f64,
    pub height: f64,
    pub series: Vec<Series>,
}

impl PlotSpec {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        PlotSpec {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            width: 640.0,
            height: 400.0,
            series: Vec::new(),
        }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
const MARGIN: (f64, f64, f64, f64) = (64.0, 24.0, 40.0, 52.0); // left, right, top, bottom

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Nice tick positions covering [lo, hi].
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

/// Renders a static SVG plot with axes, legend and title. Output depends
/// only on the inputs.
pub fn emit_plot(spec: &PlotSpec) -> Result<String> {
    if spec.series.is_empty() || spec.series.iter().all(|s| s.x.is_empty()) {
        return Err(Error::EmptyData(format!("plot `{}` has no data", spec.title)));
    }
    for s in &spec.series {
        if s.x.len() != s.y.len() {
            return Err(Error::Contract(format!("series `{}` has unequal x and y lengths", s.label)));
        }
    }
    let (x0, x1) = bounds(spec.series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = bounds(spec.series.iter().flat_map(|s| s.y.iter().copied()));
    let (ml, mr, mt, mb) = MARGIN;
    let (w, h) = (spec.width, spec.height);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="11">"#,
        g9(w),
        g9(h),
        g9(w),
        g9(h)
    );
    let _ = writeln!(s, r#"<rect width="{}" height="{}" fill="white"/>"#, g9(w), g9(h));
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        g9(w / 2.0),
        escape(&spec.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        g9(ml),
        g9(mt),
        g9(pw),
        g9(ph)
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/><text x="{0}" y="{3}" text-anchor="middle">{4}</text>"#,
            g9(x),
            g9(mt + ph),
            g9(mt + ph + 4.0),
            g9(mt + ph + 16.0),
            crate::numfmt::fmt_sig(t, 4)
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/><text x="{3}" y="{4}" text-anchor="end">{5}</text>"#,
            g9(ml - 4.0),
            g9(y),
            g9(ml),
            g9(ml - 6.0),
            g9(y + 4.0),
            crate::numfmt::fmt_sig(t, 4)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        g9(ml + pw / 2.0),
        g9(h - 12.0),
        escape(&spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{0}" text-anchor="middle" transform="rotate(-90 14 {0})">{1}</text>"#,
        g9(mt + ph / 2.0),
        escape(&spec.y_label)
    );
    for (k, series) in spec.series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = series
            .x
            .iter()
            .zip(&series.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| (sx(x), sy(y)))
            .collect();
        match series.style {
            SeriesStyle::Line => {
                let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", g9(*x), g9(*y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                    coords.join(" ")
                );
            }
            SeriesStyle::Scatter => {
                for (x, y) in &pts {
                    let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="3" fill="{colour}"/>"#, g9(*x), g9(*y));
                }
            }
        }
        let ly = mt + 12.0 + 14.0 * k as f64;
        let lx = ml + pw - 120.0;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{colour}"/><text x="{}" y="{}">{}</text>"#,
            g9(lx),
            g9(ly - 9.0),
            g9(lx + 14.0),
            g9(ly),
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn save_plot(spec: &PlotSpec, path: &Path) -> Result<PathBuf> {
    let svg = emit_plot(spec)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_and_formats() {
        let mut t = Table::new(&["label", "v"]);
        t.push(vec!["a,b".into(), (1.0 / 3.0).into()]);
        t.push(vec!["c".into(), Value::Empty]);
        assert_eq!(t.to_csv_string().unwrap(), "label,v\n\"a,b\",0.333333333\nc,\n");
    }

    #[test]
    fn two_points_make_one_polyline() {
        let spec = PlotSpec::new("t", "x", "y").with(Series::line("s", vec![0.0, 1.0], vec![0.0, 2.0]));
        let svg = emit_plot(&spec).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 2);
        assert_eq!(svg, emit_plot(&spec).unwrap());
    }

    #[test]
    fn empty_plot_is_an_error() {
        let spec = PlotSpec::new("t", "x", "y");
        assert!(matches!(emit_plot(&spec), Err(Error::EmptyData(_))));
        let spec = spec.with(Series::line("s", vec![], vec![]));
        assert!(matches!(emit_plot(&spec), Err(Error::EmptyData(_))));
    }

    #[test]
    fn scatter_draws_markers() {
        let spec = PlotSpec::new("sweep", "ratio", "Xc").with(Series::scatter("closed", vec![0.2, 1.0, 5.0], vec![1.0; 3]));
        let svg = emit_plot(&spec).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn ticks_cover_range() {
        let t = ticks(0.0, 1440.0);
        assert!(t.len() >= 3 && t[0] >= 0.0 && *t.last().unwrap() <= 1440.0);
    }
}
