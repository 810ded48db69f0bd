//! Report rows, correlations and the files they are written to.
//!
//! `rows.csv` has the fixed header
//!
//! ```text
//! experiment,model,sigma_init,lambda,seed,metric,value,metric_rate,test_rate,degradation,averaged
//! ```
//!
//! `sigma_init` is in rad/s, rates in Hz, `degradation` in dB (SI-SDR at the
//! trained rate minus SI-SDR at `test_rate`). `seed` is empty on
//! seed-averaged rows, which carry `averaged = true`.
//!
//! `correlations.csv` holds Pearson ρ with the least-squares line of the
//! metric against the SI-SDR degradation (per metric and test rate) or
//! against λ (`test_rate` empty). `report.json` nests both by experiment.
//! Each SVG scatter plot embeds its points in a comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::{least_squares, pearson};

use super::HarnessError;

pub const CSV_HEADER: &str =
    "experiment,model,sigma_init,lambda,seed,metric,value,metric_rate,test_rate,degradation,averaged";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub model: String,
    pub sigma_init: f64,
    pub lambda: f64,
    pub seed: Option<u64>,
    pub metric: String,
    pub value: f64,
    /// Rate the metric was computed at.
    pub metric_rate: f64,
    pub test_rate: f64,
    pub degradation: f64,
    pub averaged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Against {
    Degradation,
    Lambda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub experiment: String,
    pub metric: String,
    pub metric_rate: f64,
    pub against: Against,
    pub test_rate: Option<f64>,
    pub points: usize,
    pub rho: f64,
    /// Least-squares line `y = slope·x + intercept`, with `x` the metric for
    /// `Degradation` and `x = λ` for `Lambda`.
    pub slope: f64,
    pub intercept: f64,
}

/// Key identifying one scatter: experiment, metric, metric rate, test rate.
type SeriesKey = (String, String, u64, u64);

fn key(r: &ReportRow) -> SeriesKey {
    (r.experiment.clone(), r.metric.clone(), r.metric_rate.to_bits(), r.test_rate.to_bits())
}

/// Averaged rows grouped per scatter, in first-appearance order.
fn series(rows: &[ReportRow]) -> Vec<(SeriesKey, Vec<&ReportRow>)> {
    let mut out: Vec<(SeriesKey, Vec<&ReportRow>)> = Vec::new();
    for r in rows.iter().filter(|r| r.averaged) {
        let k = key(r);
        match out.iter_mut().find(|(kk, _)| *kk == k) {
            Some((_, v)) => v.push(r),
            None => out.push((k, vec![r])),
        }
    }
    out
}

fn fit(experiment: &str, metric: &str, metric_rate: f64, against: Against, test_rate: Option<f64>, xs: &[f64], ys: &[f64]) -> Option<Correlation> {
    let rho = match pearson(xs, ys) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("{experiment} {metric}: no correlation ({e})");
            return None;
        }
    };
    let (slope, intercept) = least_squares(xs, ys).ok()?;
    Some(Correlation {
        experiment: experiment.to_string(),
        metric: metric.to_string(),
        metric_rate,
        against,
        test_rate,
        points: xs.len(),
        rho,
        slope,
        intercept,
    })
}

/// ρ(metric, degradation) for every scatter of averaged rows. With
/// `with_lambda`, also ρ(λ, metric) once per metric and metric rate.
/// Degenerate scatters (one point, constant column) are skipped with a
/// warning.
pub fn correlations(rows: &[ReportRow], with_lambda: bool) -> Vec<Correlation> {
    let mut out = Vec::new();
    let mut seen_lambda = Vec::new();
    for ((exp, metric, mrate, trate), pts) in series(rows) {
        let mrate = f64::from_bits(mrate);
        let xs: Vec<f64> = pts.iter().map(|r| r.value).collect();
        let ys: Vec<f64> = pts.iter().map(|r| r.degradation).collect();
        if with_lambda && !seen_lambda.contains(&(exp.clone(), metric.clone(), mrate.to_bits())) {
            seen_lambda.push((exp.clone(), metric.clone(), mrate.to_bits()));
            let ls: Vec<f64> = pts.iter().map(|r| r.lambda).collect();
            out.extend(fit(&exp, &metric, mrate, Against::Lambda, None, &ls, &xs));
        }
        out.extend(fit(&exp, &metric, mrate, Against::Degradation, Some(f64::from_bits(trate)), &xs, &ys));
    }
    out
}

pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Report(e.to_string()))?;
    }
    if rows.is_empty() {
        return Ok(format!("{CSV_HEADER}\n"));
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Report(e.to_string()))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ReportRow>, HarnessError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| HarnessError::Data(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != CSV_HEADER {
        return Err(HarnessError::Data(format!("unexpected CSV header `{}`", header.join(","))));
    }
    rd.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| HarnessError::Data(format!("row {}: {e}", i + 1))))
        .collect()
}

fn correlations_to_csv(cs: &[Correlation]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cs {
        w.serialize(c).map_err(|e| HarnessError::Report(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Report(e.to_string()))
}

/// `{experiment: {"rows": [...], "correlations": [...]}}`
pub fn to_json(rows: &[ReportRow], cs: &[Correlation]) -> serde_json::Value {
    let mut map: BTreeMap<&str, (Vec<&ReportRow>, Vec<&Correlation>)> = BTreeMap::new();
    for r in rows {
        map.entry(&r.experiment).or_default().0.push(r);
    }
    for c in cs {
        map.entry(&c.experiment).or_default().1.push(c);
    }
    serde_json::Value::Object(
        map.into_iter()
            .map(|(k, (r, c))| (k.to_string(), serde_json::json!({ "rows": r, "correlations": c })))
            .collect(),
    )
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' }).collect()
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 56.0;

fn span(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        let m = 0.05 * (hi - lo);
        (lo - m, hi + m)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Scatter of `(x, y)` with the least-squares line.
pub fn scatter_svg(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64]) -> Result<String, HarnessError> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(HarnessError::Report(format!("{title}: empty metric column, no plot written")));
    }
    let (x0, x1) = span(xs);
    let (y0, y1) = span(ys);
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, "<!-- data x,y");
    for (x, y) in xs.iter().zip(ys) {
        let _ = writeln!(s, "{x},{y}");
    }
    let _ = writeln!(s, "-->");
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#, W / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    for (v, x) in [(x0, PAD), (x1, W - PAD)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle" font-size="10">{v:.3}</text>"#, H - PAD + 14.0);
    }
    for (v, y) in [(y0, H - PAD), (y1, PAD)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end" font-size="10">{v:.3}</text>"#, PAD - 4.0);
    }
    if let Ok((a, b)) = least_squares(xs, ys) {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="crimson" stroke-width="1.5"><title>y = {a}x + {b}</title></line>"#,
            px(x0),
            py(a * x0 + b),
            px(x1),
            py(a * x1 + b)
        );
    }
    for (x, y) in xs.iter().zip(ys) {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="steelblue"/>"#, px(*x), py(*y));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Write `rows.csv`, `correlations.csv`, `report.json` and one SVG per
/// scatter into `dir`. Returns the paths written.
pub fn emit_report(rows: &[ReportRow], cs: &[Correlation], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Report("no rows to report".into()));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<(), HarnessError> {
        let p = dir.join(name);
        fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    put("rows.csv".into(), rows_to_csv(rows)?)?;
    put("correlations.csv".into(), correlations_to_csv(cs)?)?;
    let json = serde_json::to_string_pretty(&to_json(rows, cs)).map_err(|e| HarnessError::Report(e.to_string()))?;
    put("report.json".into(), json)?;
    let groups = series(rows);
    if groups.is_empty() {
        return Err(HarnessError::Report("no seed-averaged rows: empty metric column, no plot written".into()));
    }
    for ((exp, metric, mrate, trate), pts) in groups {
        let (mrate, trate) = (f64::from_bits(mrate), f64::from_bits(trate));
        let xs: Vec<f64> = pts.iter().map(|r| r.value).collect();
        let ys: Vec<f64> = pts.iter().map(|r| r.degradation).collect();
        let title = format!("{exp}: {metric} at {} kHz vs degradation at {} kHz", mrate / 1000.0, trate / 1000.0);
        let svg = scatter_svg(&title, metric.as_str(), "SI-SDR degradation [dB]", &xs, &ys)?;
        put(format!("{}_{}_{}_{}.svg", slug(&exp), slug(&metric), mrate as u64, trate as u64), svg)?;
    }
    Ok(written)
}
