//! Flat-file artifacts: CSV tables, JSON summaries and polyline SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::config::{Format, RunConfig};
use crate::error::{CliError, Result};

/// A CSV cell.
#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // Shortest representation that round-trips, independent of locale.
            Cell::Num(x) => format!("{x}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| *h == name)?;
        Some(self.rows.iter().map(|r| if let Cell::Num(x) = r[j] { x } else { f64::NAN }).collect())
    }
}

/// Writes artifacts of one command into the output directory, honouring `output.formats`.
pub struct Emitter {
    dir: PathBuf,
    formats: Vec<Format>,
    written: Vec<PathBuf>,
}

impl Emitter {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let dir = PathBuf::from(&cfg.output.dir);
        fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
        Ok(Self { dir, formats: cfg.output.formats.clone(), written: Vec::new() })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn target(&self, stem: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{stem}.{ext}"))
    }

    pub fn csv(&mut self, stem: &str, table: &Table) -> Result<()> {
        if !self.formats.contains(&Format::Csv) {
            return Ok(());
        }
        let path = self.target(stem, "csv");
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_path(&path)?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush().map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        self.written.push(path);
        Ok(())
    }

    pub fn json(&mut self, stem: &str, summary: &Value) -> Result<()> {
        if !self.formats.contains(&Format::Json) {
            return Ok(());
        }
        let path = self.target(stem, "json");
        let mut text = serde_json::to_string_pretty(summary)?;
        text.push('\n');
        write_file(&path, &text)?;
        self.written.push(path);
        Ok(())
    }

    pub fn svg(&mut self, stem: &str, plot: &Plot) -> Result<()> {
        if !self.formats.contains(&Format::Svg) {
            return Ok(());
        }
        let path = self.target(stem, "svg");
        write_file(&path, &plot.render())?;
        self.written.push(path);
        Ok(())
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

/// A line plot of several series over a shared abscissa.
#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: &'static str,
    pub x: Vec<f64>,
    pub series: Vec<Series>,
    /// Abscissae marked with a vertical dashed line.
    pub markers: Vec<(f64, &'static str)>,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: &'static str,
    pub color: &'static str,
    pub y: Vec<f64>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let finite = |v: &f64| v.is_finite();
        let x0 = self.x.iter().copied().filter(finite).fold(f64::INFINITY, f64::min);
        let x1 = self.x.iter().copied().filter(finite).fold(f64::NEG_INFINITY, f64::max);
        let ys = self.series.iter().flat_map(|s| s.y.iter().copied()).filter(finite);
        let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        let pad = |lo: f64, hi: f64| if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        (x0, x1, y0, y1)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        let mut out = String::new();
        let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let _ = writeln!(
            out,
            r#"<polyline points="{m},{t} {m},{b} {r},{b}" fill="none" stroke="black" stroke-width="1"/>"#,
            m = MARGIN,
            t = MARGIN,
            b = HEIGHT - MARGIN,
            r = WIDTH - MARGIN
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{x0:.4}</text>"#, MARGIN, HEIGHT - MARGIN + 15.0);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{x1:.4}</text>"#,
            WIDTH - MARGIN,
            HEIGHT - MARGIN + 15.0
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, self.x_label);
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{y1:.4}</text>"#, MARGIN - 4.0, MARGIN + 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{y0:.4}</text>"#, MARGIN - 4.0, HEIGHT - MARGIN);
        for (x, label) in &self.markers {
            let px = sx(*x);
            let _ = writeln!(
                out,
                r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="gray" stroke-dasharray="4,3"/><text x="{px:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                MARGIN,
                HEIGHT - MARGIN,
                MARGIN - 4.0,
                escape(label)
            );
        }
        for (k, s) in self.series.iter().enumerate() {
            let mut pts = String::new();
            for (x, y) in self.x.iter().zip(&s.y) {
                if x.is_finite() && y.is_finite() {
                    let _ = write!(pts, "{:.2},{:.2} ", sx(*x), sy(*y));
                }
            }
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, pts.trim_end(), s.color);
            let ly = MARGIN + 16.0 * k as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="1.5"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
                WIDTH - MARGIN - 90.0,
                WIDTH - MARGIN - 70.0,
                s.color,
                WIDTH - MARGIN - 65.0,
                ly + 4.0,
                escape(s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}
