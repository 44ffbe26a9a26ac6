//! Per-stock market history with the derived statistics agents observe.

use serde::{Deserialize, Serialize};

use crate::stats::population_std;

/// Price, volume and spread history of one stock, indexed by step.
///
/// Index 0 holds the opening state; index `t` holds the outcome of the
/// auction that closed step `t - 1`. Alongside the raw series the history
/// caches the relative volatility over a week and a month, and the mean
/// traded volume over the last week, so that percentile levels can be read
/// without recomputing the windows per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockHistory {
    week: usize,
    month: usize,
    prices: Vec<f64>,
    volumes: Vec<u64>,
    spreads: Vec<f64>,
    long_volatility: Vec<f64>,
    short_volatility: Vec<f64>,
    liquidity: Vec<f64>,
}

fn trailing<T>(xs: &[T], len: usize) -> &[T] {
    &xs[xs.len().saturating_sub(len)..]
}

impl StockHistory {
    pub fn new(initial_price: f64, initial_spread: f64, week: usize, month: usize) -> Self {
        let mut h = Self {
            week,
            month,
            prices: Vec::new(),
            volumes: Vec::new(),
            spreads: Vec::new(),
            long_volatility: Vec::new(),
            short_volatility: Vec::new(),
            liquidity: Vec::new(),
        };
        h.push(initial_price, 0, initial_spread);
        h
    }

    pub fn push(&mut self, price: f64, volume: u64, spread: f64) {
        self.prices.push(price);
        self.volumes.push(volume);
        self.spreads.push(spread);
        let rel_vol = |w: &[f64]| population_std(w) / price;
        self.long_volatility
            .push(rel_vol(trailing(&self.prices, self.month)));
        self.short_volatility
            .push(rel_vol(trailing(&self.prices, self.week)));
        let recent = trailing(&self.volumes, self.week);
        self.liquidity
            .push(recent.iter().sum::<u64>() as f64 / recent.len() as f64);
    }

    /// Index of the latest entry.
    pub fn now(&self) -> usize {
        self.prices.len() - 1
    }

    pub fn last_price(&self) -> f64 {
        *self.prices.last().expect("history is never empty")
    }

    pub fn last_spread(&self) -> f64 {
        *self.spreads.last().expect("history is never empty")
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn volumes(&self) -> &[u64] {
        &self.volumes
    }

    pub fn spreads(&self) -> &[f64] {
        &self.spreads
    }

    pub fn long_volatility(&self) -> &[f64] {
        &self.long_volatility
    }

    pub fn short_volatility(&self) -> &[f64] {
        &self.short_volatility
    }

    pub fn liquidity(&self) -> &[f64] {
        &self.liquidity
    }

    /// The last `len` prices (fewer if history is shorter).
    pub fn recent_prices(&self, len: usize) -> &[f64] {
        trailing(&self.prices, len)
    }
}

/// Tercile level (0, 1, 2) of the latest value of `series` against its own
/// last `memory` values.
///
/// With nearest-rank percentiles `q_lo` and `q_hi` over the window, the level
/// is 0 when `x <= q_lo`, 1 when `x <= q_hi`, 2 otherwise. `x <= q` for the
/// `k`-th smallest value is equivalent to fewer than `k` window values lying
/// strictly below `x`, which is what is counted here.
pub fn tercile_level(series: &[f64], memory: usize, quantiles: [f64; 2]) -> usize {
    let window = trailing(series, memory.max(1));
    let x = *window.last().expect("non-empty series");
    let n = window.len();
    let below = window.iter().filter(|&&v| v < x).count();
    let rank = |q: f64| ((q * n as f64).ceil() as usize).clamp(1, n);
    if below < rank(quantiles[0]) {
        0
    } else if below < rank(quantiles[1]) {
        1
    } else {
        2
    }
}

/// Whether the latest value is strictly below the nearest-rank median of its
/// last `memory` values.
pub fn below_running_median(series: &[f64], memory: usize) -> bool {
    let window = trailing(series, memory.max(1));
    let x = *window.last().expect("non-empty series");
    let n = window.len();
    let at_or_below = window.iter().filter(|&&v| v <= x).count();
    at_or_below < (n as f64 * 0.5).ceil().max(1.0) as usize
}
