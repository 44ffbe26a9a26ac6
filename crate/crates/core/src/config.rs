//! Simulation configuration.
//!
//! Stored as flat JSON. Every key is optional and falls back to the default
//! listed on [`SimConfig::default`]; unknown keys are rejected.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fundamentals::FundamentalParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

/// Behavioral profile assigned to the biased share of the population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    #[default]
    DelayDiscounting,
    Fear,
    Greed,
}

impl BiasKind {
    pub const ALL: [BiasKind; 3] = [BiasKind::DelayDiscounting, BiasKind::Fear, BiasKind::Greed];

    pub fn as_str(self) -> &'static str {
        match self {
            BiasKind::DelayDiscounting => "delay_discounting",
            BiasKind::Fear => "fear",
            BiasKind::Greed => "greed",
        }
    }
}

impl fmt::Display for BiasKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BiasKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "delay_discounting" | "delay-discounting" | "dd" => Ok(BiasKind::DelayDiscounting),
            "fear" => Ok(BiasKind::Fear),
            "greed" => Ok(BiasKind::Greed),
            other => Err(format!(
                "unknown bias `{other}` (expected delay_discounting, fear or greed)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FundamentalConfig {
    /// Per-run step volatility is drawn uniformly from this range.
    pub step_volatility_range: [f64; 2],
    /// Jump probability per step; `None` means one per trading year.
    pub jump_rate: Option<f64>,
    pub jump_scale: f64,
    /// Standard deviation of the log of each agent's constant valuation bias.
    pub valuation_bias_sd: f64,
    pub observation_noise: f64,
}

impl Default for FundamentalConfig {
    fn default() -> Self {
        Self {
            step_volatility_range: [0.005, 0.02],
            jump_rate: None,
            jump_scale: 0.1,
            valuation_bias_sd: 0.1,
            observation_noise: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Number of agents.
    pub agents: usize,
    /// Number of stocks.
    pub stocks: usize,
    /// Measured steps after the learning phase.
    pub steps: usize,
    /// Independent runs per sweep cell.
    pub runs: usize,
    pub learning_steps: usize,
    pub week: usize,
    pub month: usize,
    pub year: usize,
    pub bias_kind: BiasKind,
    /// Percentage of agents carrying `bias_kind`.
    pub bias_percent: f64,
    pub master_seed: u64,

    pub learning_rate: f64,
    pub temperature: f64,
    /// Share of available cash committed by a buy order.
    pub order_fraction: f64,
    /// Interest on cash per step.
    pub risk_free_rate: f64,

    pub initial_price: f64,
    pub initial_shares: u64,
    /// Initial cash is `initial_shares * initial_price * u` with `u` uniform here.
    pub initial_cash_multiplier: [f64; 2],
    pub initial_spread: f64,
    pub gesture_range: [f64; 2],
    /// Multipliers on the reflexivity amplitude for the low/mid/high action.
    pub reflexivity_weights: [f64; 3],
    /// Relative valuation gap boundaries between low/mid and mid/high.
    pub gap_thresholds: [f64; 2],
    /// Relative forecast move treated as flat.
    pub trend_dead_band: f64,
    pub tercile_quantiles: [f64; 2],
    /// Mean number of steps between bias overrides.
    pub override_period: u32,
    /// An agent is bankrupt once its NAV falls below this share of its initial NAV.
    pub bankruptcy_fraction: f64,
    /// Forecasts and limit prices never go below this share of the current price.
    pub price_floor_fraction: f64,
    pub fundamental: FundamentalConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            agents: 500,
            stocks: 1,
            steps: 2875,
            runs: 20,
            learning_steps: 1000,
            week: 5,
            month: 21,
            year: 286,
            bias_kind: BiasKind::DelayDiscounting,
            bias_percent: 0.0,
            master_seed: 42,
            learning_rate: 0.1,
            temperature: 0.2,
            order_fraction: 0.2,
            risk_free_rate: 0.0,
            initial_price: 100.0,
            initial_shares: 100,
            initial_cash_multiplier: [0.5, 2.0],
            initial_spread: 1.0,
            gesture_range: [0.2, 0.8],
            reflexivity_weights: [0.2, 0.5, 0.8],
            gap_thresholds: [0.02, 0.10],
            trend_dead_band: 0.01,
            tercile_quantiles: [0.33, 0.67],
            override_period: 5,
            bankruptcy_fraction: 0.05,
            price_floor_fraction: 0.01,
            fundamental: FundamentalConfig::default(),
        }
    }
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

fn ordered_range(key: &'static str, r: [f64; 2], lo: f64, hi: f64) -> Result<(), ConfigError> {
    if !(r[0].is_finite() && r[1].is_finite() && lo <= r[0] && r[0] <= r[1] && r[1] <= hi) {
        return Err(invalid(
            key,
            format!("expected {lo} <= low <= high <= {hi}, got {r:?}"),
        ));
    }
    Ok(())
}

impl SimConfig {
    /// Laptop-sized setting used by the acceptance suite.
    pub fn desk() -> Self {
        Self {
            agents: 100,
            steps: 1000,
            runs: 5,
            learning_steps: 300,
            ..Self::default()
        }
    }

    pub fn total_steps(&self) -> usize {
        self.learning_steps + self.steps
    }

    pub fn max_horizon(&self) -> usize {
        6 * self.month
    }

    /// Lag windows for the short/mid/long forecast action.
    pub fn forecast_lags(&self) -> [usize; 3] {
        [self.week, self.month, 6 * self.month]
    }

    pub fn jump_rate(&self) -> f64 {
        self.fundamental.jump_rate.unwrap_or(1.0 / self.year as f64)
    }

    pub fn fundamental_params(&self, step_volatility: f64) -> FundamentalParams {
        FundamentalParams {
            initial_value: self.initial_price,
            step_volatility,
            jump_rate: self.jump_rate(),
            jump_scale: self.fundamental.jump_scale,
        }
    }

    /// Number of agents carrying the configured bias.
    pub fn biased_agents(&self) -> usize {
        ((self.agents as f64) * self.bias_percent / 100.0).floor() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.agents < 2 {
            return Err(invalid("agents", "need at least 2 agents"));
        }
        if self.stocks < 1 {
            return Err(invalid("stocks", "need at least 1 stock"));
        }
        if self.runs < 1 {
            return Err(invalid("runs", "need at least 1 run"));
        }
        if self.week < 1 {
            return Err(invalid("week", "must be at least 1"));
        }
        if self.month < self.week {
            return Err(invalid("month", "must be at least `week`"));
        }
        if self.year < self.month {
            return Err(invalid("year", "must be at least `month`"));
        }
        if self.steps < self.week {
            return Err(invalid(
                "steps",
                format!("must be at least week ({})", self.week),
            ));
        }
        if !(0.0..=100.0).contains(&self.bias_percent) {
            return Err(invalid(
                "bias_percent",
                format!("must lie in [0, 100], got {}", self.bias_percent),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(invalid("learning_rate", "must lie in (0, 1]"));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(invalid("temperature", "must be positive"));
        }
        if !(self.order_fraction > 0.0 && self.order_fraction <= 1.0) {
            return Err(invalid("order_fraction", "must lie in (0, 1]"));
        }
        if !(self.risk_free_rate.is_finite() && self.risk_free_rate >= 0.0) {
            return Err(invalid("risk_free_rate", "must be non-negative"));
        }
        if !(self.initial_price.is_finite() && self.initial_price > 0.0) {
            return Err(invalid("initial_price", "must be positive"));
        }
        ordered_range(
            "initial_cash_multiplier",
            self.initial_cash_multiplier,
            0.0,
            f64::MAX,
        )?;
        if !(self.initial_spread.is_finite() && self.initial_spread >= 0.0) {
            return Err(invalid("initial_spread", "must be non-negative"));
        }
        ordered_range("gesture_range", self.gesture_range, 0.0, f64::MAX)?;
        if self
            .reflexivity_weights
            .iter()
            .any(|w| !(0.0..=1.0).contains(w))
        {
            return Err(invalid(
                "reflexivity_weights",
                "each weight must lie in [0, 1]",
            ));
        }
        ordered_range("gap_thresholds", self.gap_thresholds, 0.0, f64::MAX)?;
        if !(self.trend_dead_band.is_finite() && self.trend_dead_band >= 0.0) {
            return Err(invalid("trend_dead_band", "must be non-negative"));
        }
        ordered_range("tercile_quantiles", self.tercile_quantiles, 0.0, 1.0)?;
        if self.override_period < 1 {
            return Err(invalid("override_period", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.bankruptcy_fraction) {
            return Err(invalid("bankruptcy_fraction", "must lie in [0, 1)"));
        }
        if !(self.price_floor_fraction > 0.0 && self.price_floor_fraction < 1.0) {
            return Err(invalid("price_floor_fraction", "must lie in (0, 1)"));
        }
        let f = &self.fundamental;
        ordered_range(
            "fundamental.step_volatility_range",
            f.step_volatility_range,
            0.0,
            1.0,
        )?;
        if let Some(rate) = f.jump_rate {
            if !(0.0..=1.0).contains(&rate) {
                return Err(invalid("fundamental.jump_rate", "must lie in [0, 1]"));
            }
        }
        if !(f.jump_scale.is_finite() && f.jump_scale >= 0.0) {
            return Err(invalid("fundamental.jump_scale", "must be non-negative"));
        }
        if !(f.valuation_bias_sd.is_finite() && f.valuation_bias_sd >= 0.0) {
            return Err(invalid(
                "fundamental.valuation_bias_sd",
                "must be non-negative",
            ));
        }
        if !(f.observation_noise.is_finite() && f.observation_noise >= 0.0) {
            return Err(invalid(
                "fundamental.observation_noise",
                "must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = if text.trim().is_empty() {
            SimConfig::default()
        } else {
            serde_json::from_str(text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

pub fn load_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SimConfig::from_json(&text)
}

pub fn save_config(config: &SimConfig, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, config.to_json())
}
