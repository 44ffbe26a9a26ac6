//! File formats: run and sweep outputs, real-data ingestion, and the
//! simulation/real comparison table.
//!
//! Every CSV written here has a header row and ends with one metadata comment
//! line (`# config_hash=... seed=...`). Readers skip `#` lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;
use thiserror::Error;

use crate::config::SimConfig;
use crate::engine::{RunOutput, SweepOutput};
use crate::stats::{MetricsReport, SeriesView, StatsError, VolatilityLags};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: row {row}: {reason}")]
    Row {
        path: String,
        row: usize,
        reason: String,
    },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: String, column: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn metadata_line(config: &SimConfig, extra: &str) -> String {
    format!(
        "# config_hash={} seed={}{}\n",
        config.hash(),
        config.master_seed,
        extra
    )
}

/// Directory name for a percentage: `50`, `12.5`.
pub fn percent_label(p: f64) -> String {
    format!("{p}")
}

/// `out/<bias>/<p>/<run_index>/`
pub fn run_dir(out: &Path, config: &SimConfig, run_index: u64) -> PathBuf {
    out.join(config.bias_kind.as_str())
        .join(percent_label(config.bias_percent))
        .join(run_index.to_string())
}

pub fn series_csv(run: &RunOutput, stock: usize) -> String {
    let s = &run.stocks[stock];
    let mut out = String::from("t,phase,price,volume,spread,fundamental,bankrupt_count\n");
    for k in 0..run.phases.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            k + 1,
            run.phases[k].as_str(),
            s.prices[k],
            s.volumes[k],
            s.spreads[k],
            s.fundamentals[k],
            run.bankrupt_counts[k]
        );
    }
    out.push_str(&metadata_line(
        &run.config,
        &format!(" run={}", run.run_index),
    ));
    out
}

pub fn agents_csv(run: &RunOutput) -> String {
    let mut out = String::from(
        "agent,bias,tau,memory,gesture,reflexivity,initial_cash,final_cash,final_holdings,final_nav,bankrupt\n",
    );
    for a in &run.agents {
        let holdings: Vec<String> = a.final_holdings.iter().map(u64::to_string).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            a.agent,
            a.bias.as_str(),
            a.tau,
            a.memory,
            a.gesture,
            a.reflexivity,
            a.initial_cash,
            a.final_cash,
            holdings.join(";"),
            a.final_nav,
            u8::from(a.bankrupt)
        );
    }
    out.push_str(&metadata_line(
        &run.config,
        &format!(" run={}", run.run_index),
    ));
    out
}

/// Metric name as written to flat outputs; stocks after the first get a prefix.
fn stock_metric(stock: usize, name: &str) -> String {
    if stock == 0 {
        name.to_string()
    } else {
        format!("s{stock}:{name}")
    }
}

/// Flat `metric -> value` map over all stocks.
pub fn flat_metrics(reports: &[MetricsReport]) -> BTreeMap<String, f64> {
    reports
        .iter()
        .enumerate()
        .flat_map(|(j, r)| {
            r.flat()
                .into_iter()
                .map(move |(k, v)| (stock_metric(j, &k), v))
        })
        .collect()
}

pub fn metrics_json(reports: &[MetricsReport]) -> String {
    let mut s = serde_json::to_string_pretty(&flat_metrics(reports)).expect("metrics serialize");
    s.push('\n');
    s
}

/// Writes `series_s<j>.csv`, `agents.csv` and `metrics.json` into `dir`.
pub fn write_run(run: &RunOutput, dir: &Path) -> Result<Vec<MetricsReport>, IoError> {
    for j in 0..run.stocks.len() {
        write_file(&dir.join(format!("series_s{j}.csv")), &series_csv(run, j))?;
    }
    write_file(&dir.join("agents.csv"), &agents_csv(run))?;
    let reports = run.metrics()?;
    write_file(&dir.join("metrics.json"), &metrics_json(&reports))?;
    Ok(reports)
}

/// Writes one policy table as `agent,state,action,value,visits`.
pub fn policy_csv<'a>(
    config: &SimConfig,
    tables: impl Iterator<Item = (usize, &'a crate::policy::TabularPolicy)>,
) -> String {
    let mut out = String::from("agent,state,action,value,visits\n");
    for (agent, table) in tables {
        for c in table.cells() {
            let _ = writeln!(
                out,
                "{agent},{},{},{},{}",
                c.state, c.action, c.value, c.visits
            );
        }
    }
    out.push_str(&metadata_line(config, ""));
    out
}

pub fn sweep_summary_csv(sweep: &SweepOutput, config: &SimConfig) -> String {
    let mut out = String::from("bias,p,run,metric,value\n");
    for cell in &sweep.cells {
        for (run, report) in cell.runs.iter().zip(&cell.reports) {
            for (metric, value) in report.flat() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    sweep.bias_kind.as_str(),
                    percent_label(cell.bias_percent),
                    run.run_index,
                    metric,
                    value
                );
            }
        }
    }
    out.push_str(&metadata_line(config, ""));
    out
}

/// Writes every run directory, per-cell aggregates and `out/<bias>/summary.csv`.
/// Returns the summary path.
pub fn write_sweep(
    sweep: &SweepOutput,
    config: &SimConfig,
    out: &Path,
) -> Result<PathBuf, IoError> {
    for cell in &sweep.cells {
        for run in &cell.runs {
            write_run(run, &run_dir(out, &run.config, run.run_index))?;
        }
        let cell_dir = out
            .join(sweep.bias_kind.as_str())
            .join(percent_label(cell.bias_percent));
        let agg = serde_json::to_string_pretty(&cell.aggregate).expect("aggregate serializes");
        write_file(&cell_dir.join("cell_metrics.json"), &(agg + "\n"))?;
    }
    let path = out.join(sweep.bias_kind.as_str()).join("summary.csv");
    write_file(&path, &sweep_summary_csv(sweep, config))?;
    Ok(path)
}

/// One daily observation of a real stock.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSeriesRecord {
    pub date: NaiveDate,
    pub close: f64,
    pub volume: f64,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    date: String,
    close: String,
    volume: String,
}

/// Reads `date,close,volume`. Dates must be ISO days in strictly increasing
/// order; closes positive; volumes non-negative. Row numbers in errors count
/// the header as row 1.
pub fn ingest_real_csv(path: &Path) -> Result<Vec<RealSeriesRecord>, IoError> {
    let name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| IoError::Csv {
            path: name.clone(),
            source,
        })?;
    let headers = reader
        .headers()
        .map_err(|source| IoError::Csv {
            path: name.clone(),
            source,
        })?
        .clone();
    for column in ["date", "close", "volume"] {
        if !headers.iter().any(|h| h == column) {
            return Err(IoError::MissingColumn {
                path: name,
                column: column.into(),
            });
        }
    }
    let mut records: Vec<RealSeriesRecord> = Vec::new();
    for (i, row) in reader.deserialize::<RawRecord>().enumerate() {
        let row_no = i + 2;
        let bad = |reason: String| IoError::Row {
            path: name.clone(),
            row: row_no,
            reason,
        };
        let raw = row.map_err(|e| bad(e.to_string()))?;
        let date = NaiveDate::parse_from_str(&raw.date, "%Y-%m-%d")
            .map_err(|e| bad(format!("bad date `{}`: {e}", raw.date)))?;
        let close: f64 = raw
            .close
            .parse()
            .map_err(|_| bad(format!("bad close `{}`", raw.close)))?;
        if !(close.is_finite() && close > 0.0) {
            return Err(bad(format!("close must be positive, got {close}")));
        }
        let volume: f64 = raw
            .volume
            .parse()
            .map_err(|_| bad(format!("bad volume `{}`", raw.volume)))?;
        if !(volume.is_finite() && volume >= 0.0) {
            return Err(bad(format!("volume must be non-negative, got {volume}")));
        }
        if let Some(prev) = records.last() {
            if date <= prev.date {
                return Err(bad(format!("date {date} does not follow {}", prev.date)));
            }
        }
        records.push(RealSeriesRecord {
            date,
            close,
            volume,
        });
    }
    Ok(records)
}

/// Metric battery over a real close series. Spread, gesture and bankruptcy
/// fields are absent.
pub fn analyze_records(
    records: &[RealSeriesRecord],
    lags: VolatilityLags,
) -> Result<MetricsReport, IoError> {
    let prices: Vec<f64> = records.iter().map(|r| r.close).collect();
    let volumes: Vec<f64> = records.iter().map(|r| r.volume).collect();
    Ok(MetricsReport::compute(
        SeriesView {
            prices: &prices,
            volumes: &volumes,
            spreads: None,
            agents: None,
        },
        lags,
    )?)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SummaryRow {
    pub bias: String,
    pub p: String,
    pub run: String,
    pub metric: String,
    pub value: f64,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, IoError> {
    let name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|source| IoError::Csv {
            path: name.clone(),
            source,
        })?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| IoError::Row {
                path: name.clone(),
                row: i + 2,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn read_flat_metrics(path: &Path) -> Result<BTreeMap<String, f64>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Joins each summary row with the real-data value of the same metric.
/// No simulation value is recomputed.
pub fn compare_table(summary: &[SummaryRow], real: &BTreeMap<String, f64>) -> String {
    let mut out = String::from("bias,p,run,metric,value,real_value\n");
    for row in summary {
        let real_value = real
            .get(&row.metric)
            .map(|v| v.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.bias, row.p, row.run, row.metric, row.value, real_value
        );
    }
    out
}

pub fn write_text(path: &Path, contents: &str) -> Result<(), IoError> {
    write_file(path, contents)
}
