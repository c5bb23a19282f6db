use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::batch_io::fmt_f64;
use crate::density::Estimator;
use crate::dyneval::{ExactSum, Metric};
use crate::error::{Error, Result};
use crate::space::EnvKind;

pub const CSV_HEADER: &str = "env,transform,seed,nu_k,theta,d_raw,d_aug,delta,metric";

/// Numeric columns of one report row. Shift columns are absent when the shift
/// was not measured; `theta` is absent for discrete detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Values {
    pub nu_k: f64,
    pub theta: Option<f64>,
    pub d_raw: Option<f64>,
    pub d_aug: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub env: EnvKind,
    pub transform: String,
    pub seed: u64,
    #[serde(flatten)]
    pub values: Values,
    pub metric: Option<Metric>,
    /// Whether `nu_k` clears the configured threshold, when one was set.
    pub augmented: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub transform: String,
    /// Completed runs the statistics are taken over.
    pub n: usize,
    pub mean: Values,
    /// Sample standard deviation; zero when `n = 1`.
    pub std: Values,
    pub metric: Option<Metric>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub env: EnvKind,
    pub estimator: Estimator,
    pub config_digest: String,
    pub n_requested: usize,
    pub completed_seeds: Vec<u64>,
    pub failures: Vec<SeedFailure>,
    /// Set when some seeds failed and were left out.
    pub incomplete: bool,
    /// Set when statistics rest on a single run, so every `std` is zero.
    pub single_run: bool,
    pub rows: Vec<SeedRow>,
    pub summaries: Vec<Summary>,
}

impl Report {
    pub fn summary(&self, transform: &str) -> Option<&Summary> {
        self.summaries
            .iter()
            .find(|s| s.transform.eq_ignore_ascii_case(transform))
    }

    /// Per-seed rows of one transform, in seed order.
    pub fn rows_for<'a>(&'a self, transform: &'a str) -> impl Iterator<Item = &'a SeedRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.transform.eq_ignore_ascii_case(transform))
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mut s = ExactSum::new();
    xs.iter().for_each(|&x| s.add(x));
    let mean = s.value() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let mut ss = ExactSum::new();
    xs.iter().for_each(|&x| ss.add((x - mean) * (x - mean)));
    (mean, (ss.value() / (n - 1.0)).sqrt())
}

/// Mean and std of an optional column; absent if any row lacks it.
fn column(rows: &[&SeedRow], get: impl Fn(&Values) -> Option<f64>) -> (Option<f64>, Option<f64>) {
    let xs: Option<Vec<f64>> = rows.iter().map(|r| get(&r.values)).collect();
    match xs {
        Some(xs) if !xs.is_empty() => {
            let (m, s) = mean_std(&xs);
            (Some(m), Some(s))
        }
        _ => (None, None),
    }
}

/// Aggregates per transform, in order of first appearance.
pub fn summarize(rows: &[SeedRow]) -> Vec<Summary> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.transform.as_str()) {
            order.push(&r.transform);
        }
    }
    order
        .into_iter()
        .map(|name| {
            let group: Vec<&SeedRow> = rows.iter().filter(|r| r.transform == name).collect();
            let (nu_m, nu_s) = column(&group, |v| Some(v.nu_k));
            let (th_m, th_s) = column(&group, |v| v.theta);
            let (raw_m, raw_s) = column(&group, |v| v.d_raw);
            let (aug_m, aug_s) = column(&group, |v| v.d_aug);
            let (d_m, d_s) = column(&group, |v| v.delta);
            Summary {
                transform: name.to_string(),
                n: group.len(),
                mean: Values {
                    nu_k: nu_m.unwrap_or(f64::NAN),
                    theta: th_m,
                    d_raw: raw_m,
                    d_aug: aug_m,
                    delta: d_m,
                },
                std: Values {
                    nu_k: nu_s.unwrap_or(f64::NAN),
                    theta: th_s,
                    d_raw: raw_s,
                    d_aug: aug_s,
                    delta: d_s,
                },
                metric: group[0].metric,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::Usage(format!("unknown report format `{s}` (expected csv or json)"))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_line(env: EnvKind, transform: &str, seed: &str, v: &Values, metric: Option<Metric>) -> String {
    format!(
        "{env},{transform},{seed},{},{},{},{},{},{}\n",
        fmt_f64(v.nu_k),
        opt(v.theta),
        opt(v.d_raw),
        opt(v.d_aug),
        opt(v.delta),
        metric.map(|m| m.to_string()).unwrap_or_default()
    )
}

/// Per-seed rows followed by one `mean` and one `std` row per transform.
pub fn report_to_csv(r: &Report) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for row in &r.rows {
        out += &csv_line(row.env, &row.transform, &row.seed.to_string(), &row.values, row.metric);
    }
    for s in &r.summaries {
        out += &csv_line(r.env, &s.transform, "mean", &s.mean, s.metric);
        out += &csv_line(r.env, &s.transform, "std", &s.std, s.metric);
    }
    out
}

pub fn report_to_json(r: &Report) -> Result<String> {
    Ok(serde_json::to_string_pretty(r)? + "\n")
}

pub fn export_report(r: &Report, path: impl AsRef<Path>, format: &str) -> Result<()> {
    let text = match format.parse::<ReportFormat>()? {
        ReportFormat::Csv => report_to_csv(r),
        ReportFormat::Json => report_to_json(r)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Rows and aggregate rows read back from a report CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedCsv {
    pub rows: Vec<SeedRow>,
    pub means: Vec<(String, Values)>,
    pub stds: Vec<(String, Values)>,
}

pub fn parse_report_csv(text: &str) -> Result<ParsedCsv> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(Error::Schema(format!("expected header `{CSV_HEADER}`"))),
    }
    let mut out = ParsedCsv::default();
    for (i, line) in lines {
        let line_no = i + 1;
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            return Err(err(format!("{} columns", cols.len())));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| err(format!("bad number `{s}`")))
        };
        let values = Values {
            nu_k: num(cols[3])?.ok_or_else(|| err("missing nu_k".into()))?,
            theta: num(cols[4])?,
            d_raw: num(cols[5])?,
            d_aug: num(cols[6])?,
            delta: num(cols[7])?,
        };
        let metric = match cols[8] {
            "" => None,
            "TVD" => Some(Metric::Tvd),
            "MSE" => Some(Metric::Mse),
            m => return Err(err(format!("unknown metric `{m}`"))),
        };
        let transform = cols[1].to_string();
        match cols[2] {
            "mean" => out.means.push((transform, values)),
            "std" => out.stds.push((transform, values)),
            seed => out.rows.push(SeedRow {
                env: cols[0].parse().map_err(|_| err(format!("unknown env `{}`", cols[0])))?,
                transform,
                seed: seed.parse().map_err(|_| err(format!("bad seed `{seed}`")))?,
                values,
                metric,
                augmented: None,
            }),
        }
    }
    Ok(out)
}
