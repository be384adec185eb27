//! Trajectory CSV, SVG line plots and the content-addressed run registry.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use backstep_core::simkit::{ColumnLabels, DivergenceInfo, IntegratorSettings, Sample, Trajectory};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("no run `{0}` in the registry")]
    MissingRun(String),
    #[error("malformed JSON in {path}: {reason}")]
    Json { path: String, reason: String },
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes the trajectory with the fixed column order of
/// [`ColumnLabels::header`]. Floats use the shortest round-trip form.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = traj.labels.header().join(",");
    out.push('\n');
    for s in &traj.samples {
        let row = std::iter::once(&s.t)
            .chain(&s.x)
            .chain(&s.z)
            .chain(&s.k)
            .chain([&s.u])
            .chain(&s.psi)
            .chain(&s.eta)
            .chain(&s.extras);
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn parse(text: &str) -> Result<Self, OutputError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| OutputError::Csv("empty file".into()))?
            .split(',')
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| OutputError::Csv(format!("row {}: {e}", i + 1)))?;
            if row.len() != header.len() {
                return Err(OutputError::Csv(format!(
                    "row {} has {} fields, header has {}",
                    i + 1,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Columns named `prefix` followed by digits, in header order.
    pub fn indexed_columns(&self, prefix: &str) -> Vec<(String, Vec<f64>)> {
        self.header
            .iter()
            .enumerate()
            .filter(|(_, h)| {
                h.strip_prefix(prefix)
                    .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
            })
            .map(|(j, h)| (h.clone(), self.rows.iter().map(|r| r[j]).collect()))
            .collect()
    }
}

/// Rebuilds a trajectory from its CSV given the labels it was written with.
pub fn trajectory_from_csv(
    text: &str,
    labels: ColumnLabels,
    scenario: &str,
    settings: IntegratorSettings,
    seed: u64,
    divergence: Option<DivergenceInfo>,
) -> Result<Trajectory, OutputError> {
    let table = CsvTable::parse(text)?;
    if table.header != labels.header() {
        return Err(OutputError::Csv(format!(
            "header {:?} does not match the scenario columns {:?}",
            table.header,
            labels.header()
        )));
    }
    let widths = [
        1,
        labels.x.len(),
        labels.z.len(),
        labels.k.len(),
        1,
        labels.psi.len(),
        labels.eta.len(),
        labels.extras.len(),
    ];
    let samples = table
        .rows
        .iter()
        .map(|row| {
            let mut parts = Vec::with_capacity(widths.len());
            let mut at = 0;
            for w in widths {
                parts.push(row[at..at + w].to_vec());
                at += w;
            }
            Sample {
                t: parts[0][0],
                x: parts[1].clone(),
                z: parts[2].clone(),
                k: parts[3].clone(),
                u: parts[4][0],
                psi: parts[5].clone(),
                eta: parts[6].clone(),
                extras: parts[7].clone(),
            }
        })
        .collect();
    Ok(Trajectory {
        scenario: scenario.to_string(),
        seed,
        settings,
        labels,
        samples,
        divergence,
    })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / count as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut v = start;
    while v <= hi + step * 1e-9 {
        ticks.push(if v.abs() < step * 1e-9 { 0.0 } else { v });
        v += step;
    }
    ticks
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// A line chart with axes, ticks and a legend.
pub fn svg_line_plot(title: &str, x_label: &str, t: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let (w, h) = (720.0, 420.0);
    let (left, right, top, bottom) = (70.0, 140.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let finite = |v: &&f64| v.is_finite();
    let (t0, t1) = (
        t.iter().filter(finite).cloned().fold(f64::INFINITY, f64::min),
        t.iter().filter(finite).cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let (t0, t1) = if t0 < t1 { (t0, t1) } else { (0.0, 1.0) };
    let mut y0 = series.iter().flat_map(|s| s.1.iter()).filter(finite).cloned().fold(f64::INFINITY, f64::min);
    let mut y1 = series
        .iter()
        .flat_map(|s| s.1.iter())
        .filter(finite)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(y0 < y1) {
        let c = if y0.is_finite() { y0 } else { 0.0 };
        (y0, y1) = (c - 1.0, c + 1.0);
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |v: f64| left + (v - t0) / (t1 - t0) * pw;
    let sy = |v: f64| top + (y1 - v) / (y1 - y0) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, left + pw / 2.0, escape(title)).unwrap();
    for v in nice_ticks(y0, y1, 6) {
        let y = sy(v);
        writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, left + pw).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, tick_label(v)).unwrap();
    }
    for v in nice_ticks(t0, t1, 8) {
        let x = sx(v);
        writeln!(s, r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##, top + ph).unwrap();
        writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, top + ph + 18.0, tick_label(v)).unwrap();
    }
    writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 12.0, escape(x_label)).unwrap();
    for (i, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = String::new();
        for (tv, yv) in t.iter().zip(ys) {
            if tv.is_finite() && yv.is_finite() {
                write!(pts, "{:.2},{:.2} ", sx(*tv), sy(*yv)).unwrap();
            }
        }
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.trim_end()
        )
        .unwrap();
        let ly = top + 16.0 + 20.0 * i as f64;
        let lx = left + pw + 14.0;
        writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 24.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, escape(name)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `states.svg`, `gains.svg` and `control.svg` from a trajectory
/// CSV into `dir`; returns the written paths.
pub fn render_plots(table: &CsvTable, dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    let t = table
        .column("t")
        .ok_or_else(|| OutputError::Csv("missing `t` column".into()))?;
    let u = table
        .column("u")
        .ok_or_else(|| OutputError::Csv("missing `u` column".into()))?;
    let plots = [
        ("states.svg", "States x_i(t)", table.indexed_columns("x")),
        ("gains.svg", "Adaptive gains k_i(t)", table.indexed_columns("k")),
        ("control.svg", "Control u(t)", vec![("u".to_string(), u)]),
    ];
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for (file, title, series) in plots {
        let path = dir.join(file);
        std::fs::write(&path, svg_line_plot(title, "t [s]", &t, &series)).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

/// What a registry entry holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub hash: String,
    pub timestamp_unix: u64,
    pub config: PathBuf,
    pub trajectory_csv: PathBuf,
    pub summary_json: PathBuf,
    pub plots: Vec<PathBuf>,
    pub complete: bool,
}

pub fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let text = serde_json::to_string_pretty(value).expect("report is serializable");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, OutputError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| OutputError::Json {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_floats_exactly() {
        let labels = ColumnLabels::indexed(1, false);
        let traj = Trajectory {
            scenario: "s".into(),
            seed: 3,
            settings: IntegratorSettings::new(1.0, 0.1, 1),
            labels: labels.clone(),
            samples: vec![Sample {
                t: 0.1,
                x: vec![1.0 / 3.0],
                z: vec![-2.5e-300],
                k: vec![0.01],
                u: f64::MIN_POSITIVE,
                psi: vec![2.0],
                eta: vec![],
                extras: vec![],
            }],
            divergence: None,
        };
        let text = trajectory_csv(&traj);
        assert_eq!(text.lines().next().unwrap(), "t,x1,z1,k1,u,psi1");
        let back = trajectory_from_csv(&text, labels, "s", traj.settings, 3, None).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn indexed_columns_skip_lookalikes() {
        let t = CsvTable::parse("t,x1,x2,xi,k1\n0,1,2,3,4\n").unwrap();
        let names: Vec<_> = t.indexed_columns("x").into_iter().map(|c| c.0).collect();
        assert_eq!(names, ["x1", "x2"]);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(CsvTable::parse("t,x1\n0\n").is_err());
        assert!(CsvTable::parse("t,x1\n0,abc\n").is_err());
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let t = [0.0, 1.0, 2.0];
        let svg = svg_line_plot(
            "demo",
            "t",
            &t,
            &[("a".into(), vec![0.0, 1.0, 0.5]), ("b".into(), vec![1.0, f64::NAN, 0.0])],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn ticks_cover_range() {
        let ticks = nice_ticks(-2.0, 3.0, 6);
        assert_eq!(ticks.first(), Some(&-2.0));
        assert_eq!(ticks.last(), Some(&3.0));
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
