//! Market metric battery.
//!
//! Everything here is a pure function of the series handed in, so the same
//! code scores simulated runs and ingested real data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("prices must be positive and finite")]
    NonPositivePrice,
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("need at least 10 agents for decile statistics, got {0}")]
    TooFewAgents(usize),
    #[error("rolling lag must be at least 2, got {0}")]
    BadLag(usize),
}

fn check_prices(prices: &[f64], needed: usize) -> Result<(), StatsError> {
    if prices.len() < needed {
        return Err(StatsError::TooShort {
            needed,
            got: prices.len(),
        });
    }
    if prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(StatsError::NonPositivePrice);
    }
    Ok(())
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

pub fn population_std(xs: &[f64]) -> f64 {
    let Some(m) = mean(xs) else { return 0.0 };
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Nearest-rank percentile: the `ceil(q * n)`-th smallest value (at least the first).
pub fn nearest_rank_percentile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty());
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

pub fn log_returns(prices: &[f64]) -> Result<Vec<f64>, StatsError> {
    check_prices(prices, 2)?;
    Ok(prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

pub fn mean_abs_log_return(prices: &[f64]) -> Result<f64, StatsError> {
    let r = log_returns(prices)?;
    Ok(r.iter().map(|x| x.abs()).sum::<f64>() / r.len() as f64)
}

/// `sigma / P(t)` over the inclusive window `[t - lag + 1, t]`, for every `t >= lag - 1`.
pub fn rolling_volatility(prices: &[f64], lag: usize) -> Result<Vec<f64>, StatsError> {
    if lag < 2 {
        return Err(StatsError::BadLag(lag));
    }
    check_prices(prices, lag)?;
    Ok(prices
        .windows(lag)
        .map(|w| population_std(w) / w[lag - 1])
        .collect())
}

pub fn mean_rolling_volatility(prices: &[f64], lag: usize) -> Result<f64, StatsError> {
    let v = rolling_volatility(prices, lag)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Drops of more than `threshold` below the running peak. The peak resets
/// to the crash price after each event.
pub fn count_crashes(prices: &[f64], threshold: f64) -> usize {
    let mut crashes = 0;
    let mut peak = match prices.first() {
        Some(&p) => p,
        None => return 0,
    };
    for &p in &prices[1..] {
        if p < (1.0 - threshold) * peak {
            crashes += 1;
            peak = p;
        } else {
            peak = peak.max(p);
        }
    }
    crashes
}

/// Signed lengths of maximal up (+k) and down (-k) runs of one-step moves.
/// Flat steps end a run and contribute nothing.
pub fn run_length_distribution(prices: &[f64]) -> BTreeMap<i64, u64> {
    let mut hist = BTreeMap::new();
    let mut run: i64 = 0;
    let mut flush = |run: &mut i64| {
        if *run != 0 {
            *hist.entry(*run).or_insert(0) += 1;
            *run = 0;
        }
    };
    for w in prices.windows(2) {
        let step = match w[1].partial_cmp(&w[0]) {
            Some(std::cmp::Ordering::Greater) => 1,
            Some(std::cmp::Ordering::Less) => -1,
            _ => 0,
        };
        if step == 0 || (run != 0 && run.signum() != step) {
            flush(&mut run);
        }
        run += step;
    }
    flush(&mut run);
    hist
}

/// Population fourth standardized moment minus three.
pub fn excess_kurtosis(xs: &[f64]) -> Result<f64, StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    if m2 <= (1e-12 * m.abs()).powi(2) {
        return Err(StatsError::ZeroVariance);
    }
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Per-agent record consumed by the population statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub gesture: f64,
    pub final_nav: f64,
    pub bankrupt: bool,
}

/// Mean gesture of the best and worst `ceil(n / 10)` agents by final NAV.
/// Equal NAVs rank by agent index.
pub fn gesture_by_performance_decile(agents: &[AgentOutcome]) -> Result<(f64, f64), StatsError> {
    if agents.len() < 10 {
        return Err(StatsError::TooFewAgents(agents.len()));
    }
    let mut order: Vec<usize> = (0..agents.len()).collect();
    order.sort_by(|&a, &b| {
        agents[b]
            .final_nav
            .total_cmp(&agents[a].final_nav)
            .then(a.cmp(&b))
    });
    let k = agents.len().div_ceil(10);
    let avg =
        |idx: &[usize]| idx.iter().map(|&i| agents[i].gesture).sum::<f64>() / idx.len() as f64;
    let best = avg(&order[..k]);
    // Worst decile: lowest NAV first, ties again by index.
    let mut worst: Vec<usize> = (0..agents.len()).collect();
    worst.sort_by(|&a, &b| {
        agents[a]
            .final_nav
            .total_cmp(&agents[b].final_nav)
            .then(a.cmp(&b))
    });
    Ok((best, avg(&worst[..k])))
}

pub fn bankruptcy_rate(agents: &[AgentOutcome]) -> f64 {
    if agents.is_empty() {
        return 0.0;
    }
    agents.iter().filter(|a| a.bankrupt).count() as f64 / agents.len() as f64
}

/// The three rolling windows reported for volatility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolatilityLags {
    pub week: usize,
    pub month: usize,
    pub half_year: usize,
}

impl VolatilityLags {
    pub fn from_calendar(week: usize, month: usize) -> Self {
        Self {
            week,
            month,
            half_year: 6 * month,
        }
    }

    pub fn all(self) -> [usize; 3] {
        [self.week, self.month, self.half_year]
    }
}

impl Default for VolatilityLags {
    fn default() -> Self {
        Self::from_calendar(5, 21)
    }
}

/// Full metric set for one price series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mean_abs_log_return: f64,
    pub volatility_by_lag: BTreeMap<usize, f64>,
    pub mean_volume: f64,
    /// Absent when no spread series is available (real data).
    pub mean_spread_pct: Option<f64>,
    pub crash_count: u64,
    pub run_length_histogram: BTreeMap<i64, u64>,
    pub gesture_best10_mean: Option<f64>,
    pub gesture_worst10_mean: Option<f64>,
    /// Absent when there is no agent population (real data).
    pub bankruptcy_rate: Option<f64>,
    pub excess_kurtosis: Option<f64>,
}

/// Inputs for [`MetricsReport::compute`].
#[derive(Debug, Clone, Copy)]
pub struct SeriesView<'a> {
    pub prices: &'a [f64],
    pub volumes: &'a [f64],
    /// Raw spread in currency units, aligned with `prices`.
    pub spreads: Option<&'a [f64]>,
    pub agents: Option<&'a [AgentOutcome]>,
}

pub const CRASH_THRESHOLD: f64 = 0.20;

impl MetricsReport {
    pub fn compute(view: SeriesView<'_>, lags: VolatilityLags) -> Result<Self, StatsError> {
        let prices = view.prices;
        check_prices(prices, 2)?;
        let returns = log_returns(prices)?;
        let mean_abs_log_return =
            returns.iter().map(|x| x.abs()).sum::<f64>() / returns.len() as f64;

        let mut volatility_by_lag = BTreeMap::new();
        for lag in lags.all() {
            let v = if prices.len() >= lag {
                mean_rolling_volatility(prices, lag)?
            } else {
                0.0
            };
            volatility_by_lag.insert(lag, v);
        }

        let mean_volume = mean(view.volumes).unwrap_or(0.0);
        let mean_spread_pct = view.spreads.map(|s| {
            let pct: Vec<f64> = s.iter().zip(prices).map(|(s, p)| 100.0 * s / p).collect();
            mean(&pct).unwrap_or(0.0)
        });

        let (gesture_best10_mean, gesture_worst10_mean) = match view.agents {
            Some(a) if a.len() >= 10 => {
                let (b, w) = gesture_by_performance_decile(a)?;
                (Some(b), Some(w))
            }
            _ => (None, None),
        };

        Ok(Self {
            mean_abs_log_return,
            volatility_by_lag,
            mean_volume,
            mean_spread_pct,
            crash_count: count_crashes(prices, CRASH_THRESHOLD) as u64,
            run_length_histogram: run_length_distribution(prices),
            gesture_best10_mean,
            gesture_worst10_mean,
            bankruptcy_rate: view.agents.map(bankruptcy_rate),
            excess_kurtosis: excess_kurtosis(&returns).ok(),
        })
    }

    /// Flat `(name, value)` pairs in a fixed order, for CSV rows.
    pub fn flat(&self) -> Vec<(String, f64)> {
        let mut rows = vec![("mean_abs_log_return".to_string(), self.mean_abs_log_return)];
        for (lag, v) in &self.volatility_by_lag {
            rows.push((format!("volatility_lag_{lag}"), *v));
        }
        rows.push(("mean_volume".into(), self.mean_volume));
        if let Some(s) = self.mean_spread_pct {
            rows.push(("mean_spread_pct".into(), s));
        }
        rows.push(("crash_count".into(), self.crash_count as f64));
        if let Some(v) = self.gesture_best10_mean {
            rows.push(("gesture_best10_mean".into(), v));
        }
        if let Some(v) = self.gesture_worst10_mean {
            rows.push(("gesture_worst10_mean".into(), v));
        }
        if let Some(v) = self.bankruptcy_rate {
            rows.push(("bankruptcy_rate".into(), v));
        }
        if let Some(v) = self.excess_kurtosis {
            rows.push(("excess_kurtosis".into(), v));
        }
        let total: u64 = self.run_length_histogram.values().sum();
        for (k, c) in &self.run_length_histogram {
            rows.push((format!("run_length:{k:+}"), *c as f64));
        }
        rows.push(("run_length_total".into(), total as f64));
        rows
    }
}

/// Across-run aggregate for one sweep cell: scalar fields averaged, run-length
/// histograms pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub runs: usize,
    pub means: BTreeMap<String, f64>,
    pub run_length_histogram: BTreeMap<i64, u64>,
}

impl CellMetrics {
    pub fn aggregate(reports: &[MetricsReport]) -> Self {
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        let mut hist = BTreeMap::new();
        for r in reports {
            for (name, v) in r.flat() {
                if name.starts_with("run_length") {
                    continue;
                }
                let e = sums.entry(name).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
            for (k, c) in &r.run_length_histogram {
                *hist.entry(*k).or_insert(0) += c;
            }
        }
        Self {
            runs: reports.len(),
            means: sums
                .into_iter()
                .map(|(k, (s, n))| (k, s / n as f64))
                .collect(),
            run_length_histogram: hist,
        }
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.means.get(metric).copied()
    }
}
