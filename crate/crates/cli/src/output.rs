//! Table, summary and plot writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Format};
use crate::error::CliError;

/// A numeric table with named columns.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// One pass/fail check reported by a command.
#[derive(Debug, Clone, Serialize)]
pub struct Gate {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Gate {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }
}

/// Writes tables, the summary and the resolved config into one directory.
pub struct OutputDir {
    root: PathBuf,
    format: Format,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
        let mut dir = Self { root: cfg.out.clone(), format: cfg.format, written: Vec::new() };
        dir.write_json("config.json", &serde_json::to_value(cfg).expect("config serializes"))?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write_bytes(&mut self, file: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.root.join(file);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json(&mut self, file: &str, value: &Value) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("json serializes");
        text.push('\n');
        self.write_bytes(file, text.as_bytes())
    }

    pub fn write_text(&mut self, file: &str, text: &str) -> Result<PathBuf, CliError> {
        self.write_bytes(file, text.as_bytes())
    }

    /// Writes `<name>.csv` or `<name>.json` according to the format.
    pub fn write_table(&mut self, table: &Table) -> Result<PathBuf, CliError> {
        match self.format {
            Format::Csv => {
                let bytes = table_to_csv(table).map_err(|e| CliError::io(&self.root.join(&table.name), e))?;
                self.write_bytes(&format!("{}.csv", table.name), &bytes)
            }
            Format::Json => {
                let records: Vec<Value> = table
                    .rows
                    .iter()
                    .map(|r| Value::Object(table.columns.iter().cloned().zip(r.iter().map(|v| json!(v))).collect()))
                    .collect();
                self.write_json(&format!("{}.json", table.name), &Value::Array(records))
            }
        }
    }
}

pub fn table_to_csv(table: &Table) -> std::io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

/// Reads a CSV table written by [`table_to_csv`].
pub fn read_csv_table(path: &Path) -> Result<Table, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let columns: Vec<String> = r
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .map(|v| v.parse::<f64>().map_err(|e| CliError::Config(format!("{}: {e}", path.display()))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Table { name, columns, rows })
}

/// One polyline of a plot.
pub struct Series<'a> {
    pub label: String,
    pub points: &'a [(f64, f64)],
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Minimal SVG line plot: axes, tick labels at the extremes, one polyline
/// per series and a legend.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let (w, h, margin) = (640.0, 420.0, 56.0);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| margin + (x - x0) / (x1 - x0) * (w - 2.0 * margin);
    let sy = |y: f64| h - margin - (y - y0) / (y1 - y0) * (h - 2.0 * margin);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    out += &format!("<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n", w / 2.0);
    out += &format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = margin,
        b = h - margin,
        r = w - margin
    );
    out += &format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n", w / 2.0, h - 12.0);
    out += &format!(
        "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{y_label}</text>\n",
        h / 2.0,
        h / 2.0
    );
    for (x, anchor) in [(x0, "start"), (x1, "end")] {
        out +=
            &format!("<text x=\"{:.1}\" y=\"{}\" text-anchor=\"{anchor}\">{x:.3}</text>\n", sx(x), h - margin + 16.0);
    }
    for y in [y0, y1] {
        out += &format!("<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{y:.3}</text>\n", margin - 4.0, sy(y) + 4.0);
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        out += &format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        );
        let ly = margin + 16.0 * k as f64;
        out += &format!(
            "<line x1=\"{a}\" y1=\"{ly}\" x2=\"{b}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{c}\" y=\"{ty}\">{label}</text>\n",
            a = w - margin - 110.0,
            b = w - margin - 90.0,
            c = w - margin - 84.0,
            ty = ly + 4.0,
            label = s.label
        );
    }
    out += "</svg>\n";
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new("cdf", &["h", "value"]);
        t.push(vec![0.0, 0.0]);
        t.push(vec![0.5, 0.393_469_340_287_366_6]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cdf.csv");
        fs::write(&path, table_to_csv(&t).unwrap()).unwrap();
        let back = read_csv_table(&path).unwrap();
        assert_eq!(back.columns, t.columns);
        assert_eq!(back.rows, t.rows);
        assert_eq!(back.column("value").unwrap()[1], 0.393_469_340_287_366_6);
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let a = [(0.0, 0.0), (1.0, 1.0)];
        let b = [(0.0, 0.5), (1.0, 0.2)];
        let svg = svg_plot(
            "t",
            "h",
            "F",
            &[Series { label: "a".into(), points: &a }, Series { label: "b".into(), points: &b }],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
}
