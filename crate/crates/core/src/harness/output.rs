//! CSV, SVG and metadata emitters. All output is a pure function of its input.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{HarnessError, ParetoTable, RegretCurve, SimulationResult};

/// Generator recorded in run metadata.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.3), replicate seed splitmix64(seed ^ splitmix64(r))";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub generator: String,
    pub version: String,
    pub horizon: u64,
    pub replicates: u32,
}

impl RunMetadata {
    pub fn new(run_id: &str, config_text: &str, seed: u64, horizon: u64, replicates: u32) -> Self {
        Self {
            run_id: run_id.to_string(),
            config_hash: config_hash(config_text.as_bytes()),
            seed,
            generator: GENERATOR.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            horizon,
            replicates,
        }
    }
}

/// Lowercase hex SHA-256.
pub fn config_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Long-format CSV with one line per replicate and checkpoint.
pub fn curve_csv(results: &[&SimulationResult]) -> String {
    let mut out = String::from("run_id,policy,env,replicate,t,cum_regret,learner\n");
    for res in results {
        for (r, rep) in res.replicates.iter().enumerate() {
            for (k, &t) in res.curve.checkpoints.iter().enumerate() {
                let learner = rep.learner[k].map_or(-1, |i| i as i64);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    res.run_id, res.policy, res.env, r, t, rep.regret[k], learner
                );
            }
        }
    }
    out
}

pub fn pareto_csv(table: &ParetoTable) -> String {
    let mut out = String::from("z2,benign_regret,benign_stderr,hard_regret,hard_stderr\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.z2, r.benign_regret, r.benign_stderr, r.hard_regret, r.hard_stderr
        );
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let (mut x0, mut x1) = bounds(xs);
        let (mut y0, mut y1) = bounds(ys);
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn bounds(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn svg_open(title: &str, xlabel: &str, ylabel: &str, f: &Frame) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (xa, xb, ya, yb) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(s, r#"<path d="M{xa},{ya} L{xa},{yb} L{xb},{yb}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let fy = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let (px, py) = (f.px(fx), f.py(fy));
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{yb}" x2="{px:.2}" y2="{}" stroke="black"/>"#, yb + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, yb + 18.0, tick(fx));
        let _ = writeln!(s, r#"<line x1="{}" y1="{py:.2}" x2="{xa}" y2="{py:.2}" stroke="black"/>"#, xa - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, xa - 8.0, py + 4.0, tick(fy));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (xa + xb) / 2.0, H - 10.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (ya + yb) / 2.0,
        escape(ylabel)
    );
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean regret curves with a ±1 standard error band.
pub fn regret_svg(title: &str, curves: &[(&str, &RegretCurve)]) -> String {
    let xs = curves.iter().flat_map(|(_, c)| c.checkpoints.iter().map(|&t| t as f64)).chain([0.0]);
    let ys = curves
        .iter()
        .flat_map(|(_, c)| c.mean.iter().zip(&c.stderr).map(|(m, s)| m + s))
        .chain([0.0]);
    let f = Frame::new(xs.collect::<Vec<_>>().into_iter(), ys.collect::<Vec<_>>().into_iter());
    let mut s = svg_open(title, "round t", "cumulative pseudo-regret", &f);
    for (i, (label, c)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut band = String::new();
        for (k, &t) in c.checkpoints.iter().enumerate() {
            let _ = write!(band, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, f.px(t as f64), f.py(c.mean[k] + c.stderr[k]));
        }
        for (k, &t) in c.checkpoints.iter().enumerate().rev() {
            let _ = write!(band, "L{:.2},{:.2} ", f.px(t as f64), f.py(c.mean[k] - c.stderr[k]));
        }
        let _ = writeln!(s, r#"<path d="{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band);
        let line: Vec<String> = c
            .checkpoints
            .iter()
            .zip(&c.mean)
            .map(|(&t, &m)| format!("{:.2},{:.2}", f.px(t as f64), f.py(m)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = TOP + 10.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/>"#, LEFT + 12.0, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, LEFT + 30.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

/// Scatter of benign against hard regret, one labelled point per `Z₂`.
pub fn pareto_svg(title: &str, table: &ParetoTable) -> String {
    let xs: Vec<f64> = table.rows.iter().map(|r| r.hard_regret).chain([0.0]).collect();
    let ys: Vec<f64> = table.rows.iter().map(|r| r.benign_regret).chain([0.0]).collect();
    let f = Frame::new(xs.into_iter(), ys.into_iter());
    let mut s = svg_open(title, "regret on the hard instance", "regret on the benign instance", &f);
    for r in &table.rows {
        let (px, py) = (f.px(r.hard_regret), f.py(r.benign_regret));
        let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="4" fill="{}"/>"#, PALETTE[0]);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">Z2={}</text>"#, px + 6.0, py - 6.0, tick(r.z2));
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes `regret.csv`, `regret.svg` and `metadata.json` into `dir`.
pub fn write_run_outputs(dir: &Path, result: &SimulationResult, meta: &RunMetadata) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    write(&dir.join("regret.csv"), &curve_csv(&[result]))?;
    write(
        &dir.join("regret.svg"),
        &regret_svg(&result.run_id, &[(result.policy.as_str(), &result.curve)]),
    )?;
    let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    write(&dir.join("metadata.json"), &(json + "\n"))
}

/// Writes `pareto.csv`, `pareto.svg` and `metadata.json` into `dir`.
pub fn write_sweep_outputs(dir: &Path, table: &ParetoTable, meta: &RunMetadata) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    write(&dir.join("pareto.csv"), &pareto_csv(table))?;
    write(&dir.join("pareto.svg"), &pareto_svg(&meta.run_id, table))?;
    let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    write(&dir.join("metadata.json"), &(json + "\n"))
}
