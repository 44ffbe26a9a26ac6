//! Run orchestration: learning phase, portfolio reset, measured phase, and
//! sweeps over the biased share of the population.
//!
//! One step, for every stock at once:
//!
//! 1. matured forecasts and trades are scored at the pre-clearing price,
//! 2. every solvent agent forecasts,
//! 3. every solvent agent decides and submits at most one order per stock,
//! 4. each book clears,
//! 5. fills settle at the trade price,
//! 6. the outcome is appended to the history and bankruptcies are flagged.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Bias, RealizedRewards};
use crate::config::{BiasKind, ConfigError, SimConfig};
use crate::fundamentals::{generate_fundamental_series, FundamentalSeries};
use crate::market::StockHistory;
use crate::orderbook::{clear_auction, ClearingResult, Order, Side};
use crate::policy::Intent;
use crate::rng::{lane_rng, Lane};
use crate::stats::{
    AgentOutcome, CellMetrics, MetricsReport, SeriesView, StatsError, VolatilityLags,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Learning,
    Measured,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Learning => "learning",
            Phase::Measured => "measured",
        }
    }
}

/// Per-step outcome series of one stock. Entry `k` is the result of step `k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StockSeries {
    pub prices: Vec<f64>,
    pub volumes: Vec<u64>,
    pub spreads: Vec<f64>,
    pub fundamentals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: usize,
    pub bias: Bias,
    pub tau: usize,
    pub memory: usize,
    pub gesture: f64,
    pub reflexivity: f64,
    pub initial_cash: f64,
    pub final_cash: f64,
    pub final_holdings: Vec<u64>,
    pub final_nav: f64,
    pub bankrupt: bool,
}

impl AgentSummary {
    pub fn outcome(&self) -> AgentOutcome {
        AgentOutcome {
            gesture: self.gesture,
            final_nav: self.final_nav,
            bankrupt: self.bankrupt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub config: SimConfig,
    pub run_index: u64,
    pub phases: Vec<Phase>,
    pub stocks: Vec<StockSeries>,
    pub bankrupt_counts: Vec<usize>,
    pub agents: Vec<AgentSummary>,
    /// Sum and count of forecast rewards realized at each step.
    pub forecast_rewards: Vec<(f64, usize)>,
    pub trade_rewards: Vec<(f64, usize)>,
}

impl RunOutput {
    fn measured_range(&self) -> std::ops::Range<usize> {
        self.config.learning_steps..self.phases.len()
    }

    pub fn agent_outcomes(&self) -> Vec<AgentOutcome> {
        self.agents.iter().map(AgentSummary::outcome).collect()
    }

    /// Metric battery over the measured phase of `stock`.
    pub fn metrics_for(&self, stock: usize) -> Result<MetricsReport, StatsError> {
        let range = self.measured_range();
        let s = &self.stocks[stock];
        let volumes: Vec<f64> = s.volumes[range.clone()].iter().map(|&v| v as f64).collect();
        let outcomes = self.agent_outcomes();
        MetricsReport::compute(
            SeriesView {
                prices: &s.prices[range.clone()],
                volumes: &volumes,
                spreads: Some(&s.spreads[range]),
                agents: Some(&outcomes),
            },
            VolatilityLags::from_calendar(self.config.week, self.config.month),
        )
    }

    pub fn metrics(&self) -> Result<Vec<MetricsReport>, StatsError> {
        (0..self.stocks.len())
            .map(|j| self.metrics_for(j))
            .collect()
    }

    /// Mean forecast reward over the steps in `range`.
    pub fn mean_forecast_reward(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let (sum, n) = self.forecast_rewards[range]
            .iter()
            .fold((0.0, 0usize), |(s, n), &(x, k)| (s + x, n + k));
        (n > 0).then(|| sum / n as f64)
    }
}

/// Aggregate bookkeeping for one step, for conservation audits.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub t: usize,
    pub phase: Phase,
    pub reset: bool,
    pub cash_before: f64,
    pub accrual: f64,
    pub cash_after: f64,
    pub shares_before: Vec<u64>,
    pub shares_after: Vec<u64>,
    pub nav_before: f64,
    pub nav_after_at_old_prices: f64,
    pub clearings: Vec<ClearingResult>,
    pub submitters: Vec<usize>,
    pub rewards: RealizedRewards,
}

/// A run in progress.
pub struct Simulation {
    config: SimConfig,
    run_index: u64,
    agents: Vec<Agent>,
    fundamentals: Vec<FundamentalSeries>,
    histories: Vec<StockHistory>,
    t: usize,
    phases: Vec<Phase>,
    stocks: Vec<StockSeries>,
    bankrupt_counts: Vec<usize>,
    forecast_rewards: Vec<(f64, usize)>,
    trade_rewards: Vec<(f64, usize)>,
}

impl Simulation {
    pub fn new(config: &SimConfig, run_index: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        let seed = config.master_seed;
        let total = config.total_steps();
        let fundamentals = (0..config.stocks)
            .map(|stock| {
                let mut rng = lane_rng(seed, run_index, Lane::Fundamental { stock });
                let [lo, hi] = config.fundamental.step_volatility_range;
                let sigma = if lo < hi {
                    rng.random_range(lo..hi)
                } else {
                    lo
                };
                generate_fundamental_series(
                    &config.fundamental_params(sigma),
                    total + config.max_horizon() + 1,
                    &mut rng,
                )
            })
            .collect();
        let biased = config.biased_agents();
        let agents = (0..config.agents)
            .map(|index| {
                let bias = if index < biased {
                    Bias::from(config.bias_kind)
                } else {
                    Bias::None
                };
                Agent::new(
                    index,
                    bias,
                    config,
                    lane_rng(seed, run_index, Lane::Agent { index }),
                )
            })
            .collect();
        let histories = (0..config.stocks)
            .map(|_| {
                StockHistory::new(
                    config.initial_price,
                    config.initial_spread,
                    config.week,
                    config.month,
                )
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            run_index,
            agents,
            fundamentals,
            histories,
            t: 0,
            phases: Vec::with_capacity(total),
            stocks: vec![StockSeries::default(); config.stocks],
            bankrupt_counts: Vec::with_capacity(total),
            forecast_rewards: Vec::with_capacity(total),
            trade_rewards: Vec::with_capacity(total),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [Agent] {
        &mut self.agents
    }

    pub fn histories(&self) -> &[StockHistory] {
        &self.histories
    }

    pub fn fundamentals(&self) -> &[FundamentalSeries] {
        &self.fundamentals
    }

    /// Index of the next step to run.
    pub fn now(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.config.total_steps()
    }

    /// Forces every agent's order direction; `Intent::Hold` freezes the market.
    pub fn lock_intents(&mut self, intent: Option<Intent>) {
        for a in &mut self.agents {
            a.intent_lock = intent;
        }
    }

    fn last_prices(&self) -> Vec<f64> {
        self.histories
            .iter()
            .map(StockHistory::last_price)
            .collect()
    }

    fn total_cash(&self) -> f64 {
        self.agents.iter().map(|a| a.portfolio.cash).sum()
    }

    fn total_shares(&self) -> Vec<u64> {
        (0..self.config.stocks)
            .map(|j| self.agents.iter().map(|a| a.portfolio.holdings[j]).sum())
            .collect()
    }

    fn total_nav(&self, prices: &[f64]) -> f64 {
        self.agents.iter().map(|a| a.mark_to_market(prices)).sum()
    }

    pub fn step(&mut self) -> StepReport {
        assert!(!self.is_done(), "simulation already finished");
        let t = self.t;
        let cfg = &self.config;
        let phase = if t < cfg.learning_steps {
            Phase::Learning
        } else {
            Phase::Measured
        };
        let reset = t == cfg.learning_steps && t > 0;
        if reset {
            for a in &mut self.agents {
                a.reset_portfolio();
            }
        }

        let cash_before = self.total_cash();
        let shares_before = self.total_shares();
        let mut accrual = 0.0;
        if cfg.risk_free_rate > 0.0 {
            for a in &mut self.agents {
                let interest = a.portfolio.cash * cfg.risk_free_rate;
                a.portfolio.cash += interest;
                accrual += interest;
            }
        }

        let prices = self.last_prices();
        let mut rewards = RealizedRewards::default();
        for a in &mut self.agents {
            rewards += a.realize_matured(t, &prices);
        }

        let n_stocks = cfg.stocks;
        let mut bids: Vec<Vec<Order>> = vec![Vec::new(); n_stocks];
        let mut asks: Vec<Vec<Order>> = vec![Vec::new(); n_stocks];
        let mut submitters = Vec::new();
        for a in &mut self.agents {
            if a.is_bankrupt() {
                continue;
            }
            let mut available = a.portfolio.cash;
            let mut submitted = false;
            for j in 0..n_stocks {
                let forecast = a.forecast(j, &self.histories[j], &self.fundamentals[j], cfg);
                if let Some(order) =
                    a.decide_trade(&forecast, &self.histories[j], cfg, &mut available)
                {
                    match order.side {
                        Side::Bid => bids[j].push(order),
                        Side::Ask => asks[j].push(order),
                    }
                    submitted = true;
                }
            }
            if submitted {
                submitters.push(a.id);
            }
        }

        let nav_before = self.total_nav(&prices);
        let clearings: Vec<ClearingResult> = (0..n_stocks)
            .map(|j| {
                let h = &self.histories[j];
                clear_auction(&bids[j], &asks[j], h.last_price(), h.last_spread())
            })
            .collect();

        for (j, result) in clearings.iter().enumerate() {
            for trade in &result.trades {
                let notional = trade.price * trade.quantity as f64;
                let buyer = &mut self.agents[trade.buyer_id];
                buyer.portfolio.cash -= notional;
                buyer.portfolio.holdings[j] += trade.quantity;
                buyer.record_fill(t, j, trade.quantity, notional);
                let seller = &mut self.agents[trade.seller_id];
                seller.portfolio.cash += notional;
                seller.portfolio.holdings[j] -= trade.quantity;
                seller.record_fill(t, j, trade.quantity, notional);
            }
        }
        let nav_after_at_old_prices = self.total_nav(&prices);

        for (j, result) in clearings.iter().enumerate() {
            self.histories[j].push(result.market_price, result.volume, result.spread);
            let s = &mut self.stocks[j];
            s.prices.push(result.market_price);
            s.volumes.push(result.volume);
            s.spreads.push(result.spread);
            s.fundamentals.push(self.fundamentals[j].at(t + 1));
        }

        let new_prices = self.last_prices();
        let fraction = self.config.bankruptcy_fraction;
        let bankrupt = self
            .agents
            .iter_mut()
            .map(|a| a.check_bankruptcy(&new_prices, fraction))
            .filter(|&b| b)
            .count();

        self.phases.push(phase);
        self.bankrupt_counts.push(bankrupt);
        self.forecast_rewards
            .push((rewards.forecast_sum, rewards.forecast_count));
        self.trade_rewards
            .push((rewards.trade_sum, rewards.trade_count));
        self.t += 1;

        StepReport {
            t,
            phase,
            reset,
            cash_before,
            accrual,
            cash_after: self.total_cash(),
            shares_before,
            shares_after: self.total_shares(),
            nav_before,
            nav_after_at_old_prices,
            clearings,
            submitters,
            rewards,
        }
    }

    /// Realizes every entry still pending after the last step, each at its own
    /// maturity, with the market frozen at its closing prices. Idempotent.
    pub fn drain(&mut self) {
        assert!(self.is_done(), "drain before the last step");
        let prices = self.last_prices();
        let end = self.config.total_steps() + self.config.max_horizon();
        for t in self.t..=end {
            for a in &mut self.agents {
                a.realize_matured(t, &prices);
            }
        }
        self.t = self.t.max(end + 1);
    }

    pub fn finish(mut self) -> RunOutput {
        self.drain();
        let prices: Vec<f64> = self
            .histories
            .iter()
            .map(StockHistory::last_price)
            .collect();
        let agents = self
            .agents
            .iter()
            .map(|a| AgentSummary {
                agent: a.id,
                bias: a.params.bias,
                tau: a.params.tau,
                memory: a.params.memory,
                gesture: a.params.gesture,
                reflexivity: a.params.reflexivity,
                initial_cash: a.portfolio.initial_cash(),
                final_cash: a.portfolio.cash,
                final_holdings: a.portfolio.holdings.clone(),
                final_nav: a.mark_to_market(&prices),
                bankrupt: a.is_bankrupt(),
            })
            .collect();
        RunOutput {
            config: self.config,
            run_index: self.run_index,
            phases: self.phases,
            stocks: self.stocks,
            bankrupt_counts: self.bankrupt_counts,
            agents,
            forecast_rewards: self.forecast_rewards,
            trade_rewards: self.trade_rewards,
        }
    }
}

pub fn run_simulation(config: &SimConfig, run_index: u64) -> Result<RunOutput, ConfigError> {
    let mut sim = Simulation::new(config, run_index)?;
    while !sim.is_done() {
        sim.step();
    }
    Ok(sim.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub bias_percent: f64,
    pub runs: Vec<RunOutput>,
    /// Per-run metrics of stock 0.
    pub reports: Vec<MetricsReport>,
    pub aggregate: CellMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub bias_kind: BiasKind,
    pub cells: Vec<SweepCell>,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("metrics failed for p={p} run={run}: {source}")]
    Metrics {
        p: f64,
        run: u64,
        source: StatsError,
    },
}

/// Runs `config.runs` simulations for every percentage in `p_grid`.
///
/// Run `r` of every cell uses the same seed lanes, so cells differ only in
/// which agents carry the bias.
pub fn run_sweep(config: &SimConfig, p_grid: &[f64]) -> Result<SweepOutput, SweepError> {
    let cell_configs: Vec<SimConfig> = p_grid
        .iter()
        .map(|&p| {
            let cfg = SimConfig {
                bias_percent: p,
                ..config.clone()
            };
            cfg.validate().map(|_| cfg)
        })
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(usize, u64)> = (0..cell_configs.len())
        .flat_map(|c| (0..config.runs as u64).map(move |r| (c, r)))
        .collect();
    let outputs: Vec<RunOutput> = jobs
        .par_iter()
        .map(|&(c, r)| run_simulation(&cell_configs[c], r))
        .collect::<Result<_, _>>()?;

    let mut outputs = outputs.into_iter();
    let mut cells = Vec::with_capacity(cell_configs.len());
    for cfg in &cell_configs {
        let runs: Vec<RunOutput> = outputs.by_ref().take(config.runs).collect();
        let reports = runs
            .iter()
            .map(|run| {
                run.metrics_for(0).map_err(|source| SweepError::Metrics {
                    p: cfg.bias_percent,
                    run: run.run_index,
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let aggregate = CellMetrics::aggregate(&reports);
        cells.push(SweepCell {
            bias_percent: cfg.bias_percent,
            runs,
            reports,
            aggregate,
        });
    }
    Ok(SweepOutput {
        bias_kind: config.bias_kind,
        cells,
    })
}
