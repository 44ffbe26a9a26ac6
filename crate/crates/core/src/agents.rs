//! Trader agents.
//!
//! Each agent runs two tabular learners per step and stock: a forecaster that
//! picks a pricing formula and a trader that picks an order. Rewards for both
//! arrive `tau` steps later, when the forecast horizon matures and the trade
//! is marked against the then-current price.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{BiasKind, SimConfig};
use crate::fundamentals::{AgentFundamentalLens, FundamentalSeries};
use crate::market::{below_running_median, tercile_level, StockHistory};
use crate::orderbook::{Order, Side, StockId};
use crate::policy::{
    ActionF, ActionT, Binary, Discrete, ForecastKind, Gesture, Intent, Level, Liquidity, StateF,
    StateT, TabularPolicy, Trend,
};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bias {
    #[default]
    None,
    DelayDiscounting,
    Fear,
    Greed,
}

impl From<BiasKind> for Bias {
    fn from(kind: BiasKind) -> Self {
        match kind {
            BiasKind::DelayDiscounting => Bias::DelayDiscounting,
            BiasKind::Fear => Bias::Fear,
            BiasKind::Greed => Bias::Greed,
        }
    }
}

impl Bias {
    pub fn as_str(self) -> &'static str {
        match self {
            Bias::None => "none",
            Bias::DelayDiscounting => "delay_discounting",
            Bias::Fear => "fear",
            Bias::Greed => "greed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    /// Investment horizon in steps.
    pub tau: usize,
    /// Memory window in steps.
    pub memory: usize,
    pub gesture: f64,
    pub reflexivity: f64,
    pub bias: Bias,
    pub order_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub cash: f64,
    pub holdings: Vec<u64>,
    initial_cash: f64,
    initial_holdings: Vec<u64>,
}

impl Portfolio {
    pub fn new(cash: f64, holdings: Vec<u64>) -> Self {
        Self {
            cash,
            initial_cash: cash,
            initial_holdings: holdings.clone(),
            holdings,
        }
    }

    pub fn initial_cash(&self) -> f64 {
        self.initial_cash
    }

    pub fn initial_holdings(&self) -> &[u64] {
        &self.initial_holdings
    }

    pub fn reset(&mut self) {
        self.cash = self.initial_cash;
        self.holdings.clone_from(&self.initial_holdings);
    }

    pub fn nav(&self, prices: &[f64]) -> f64 {
        self.cash
            + self
                .holdings
                .iter()
                .zip(prices)
                .map(|(&h, &p)| h as f64 * p)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingForecast {
    pub made_at: usize,
    pub horizon: usize,
    pub stock: StockId,
    pub predicted_price: f64,
    pub state: StateF,
    pub action: ActionF,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TradeSide {
    Buy,
    Sell,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingTrade {
    pub executed_at: usize,
    pub stock: StockId,
    pub side: TradeSide,
    /// Filled quantity, written after clearing.
    pub quantity: u64,
    /// Cash exchanged for the filled quantity.
    pub notional: f64,
    pub state: StateT,
    pub action: ActionT,
}

impl PendingTrade {
    pub fn exec_price(&self) -> Option<f64> {
        (self.quantity > 0).then(|| self.notional / self.quantity as f64)
    }
}

/// Output of the forecasting learner for one stock and step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forecast {
    pub stock: StockId,
    pub predicted_price: f64,
    pub fundamental_estimate: f64,
    pub state: StateF,
    pub action: ActionF,
}

/// Sums of rewards realized in one call.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct RealizedRewards {
    pub forecast_sum: f64,
    pub forecast_count: usize,
    pub trade_sum: f64,
    pub trade_count: usize,
}

impl std::ops::AddAssign for RealizedRewards {
    fn add_assign(&mut self, rhs: Self) {
        self.forecast_sum += rhs.forecast_sum;
        self.forecast_count += rhs.forecast_count;
        self.trade_sum += rhs.trade_sum;
        self.trade_count += rhs.trade_count;
    }
}

pub fn forecast_reward(predicted: f64, realized: f64) -> f64 {
    -(realized - predicted).abs() / realized
}

/// Relative cash-flow gain of a filled trade against not trading.
pub fn trade_reward(side: TradeSide, quantity: u64, exec_price: f64, price_now: f64) -> f64 {
    if quantity == 0 {
        return 0.0;
    }
    let q = quantity as f64;
    match side {
        TradeSide::Buy => q * (price_now - exec_price) / (q * exec_price),
        TradeSide::Sell => q * (exec_price - price_now) / (q * exec_price),
        TradeSide::Hold => 0.0,
    }
}

/// Bias override once the per-step trigger has fired.
pub fn override_when_armed(bias: Bias, state: &StateT, proposed: ActionT) -> ActionT {
    match bias {
        Bias::Fear
            if state.volatility == Level::High
                || state.cash == Binary::Low
                || state.liquidity == Liquidity::Zero =>
        {
            ActionT {
                intent: Intent::Sell,
                ..proposed
            }
        }
        Bias::Greed if state.trend == Trend::Increasing => ActionT {
            intent: Intent::Buy,
            ..proposed
        },
        _ => proposed,
    }
}

/// Fear and greed arm with probability `1 / period` (one draw); other
/// profiles pass through without drawing.
pub fn apply_bias_override<R: Rng + ?Sized>(
    bias: Bias,
    state: &StateT,
    proposed: ActionT,
    period: u32,
    rng: &mut R,
) -> ActionT {
    match bias {
        Bias::None | Bias::DelayDiscounting => proposed,
        Bias::Fear | Bias::Greed => {
            let armed = rng.random::<f64>() < 1.0 / f64::from(period);
            if armed {
                override_when_armed(bias, state, proposed)
            } else {
                proposed
            }
        }
    }
}

/// Chartist price estimate from a trailing window ending at the current price.
pub fn chartist_estimate(kind: ForecastKind, window: &[f64], tau: usize) -> f64 {
    let n = window.len();
    let current = window[n - 1];
    let mean = window.iter().sum::<f64>() / n as f64;
    match kind {
        ForecastKind::MeanReverting => 2.0 * mean - current,
        ForecastKind::Averaging => mean,
        ForecastKind::TrendFollowing => {
            if n < 2 {
                return current;
            }
            let x_mean = (n - 1) as f64 / 2.0;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (i, &y) in window.iter().enumerate() {
                let dx = i as f64 - x_mean;
                sxy += dx * (y - mean);
                sxx += dx * dx;
            }
            let slope = sxy / sxx;
            mean + slope * ((n - 1 + tau) as f64 - x_mean)
        }
    }
}

fn gap_level(estimate: f64, price: f64, thresholds: [f64; 2]) -> Level {
    let gap = (estimate - price).abs() / price;
    if gap < thresholds[0] {
        Level::Low
    } else if gap < thresholds[1] {
        Level::Mid
    } else {
        Level::High
    }
}

fn trend_level(predicted: f64, price: f64, dead_band: f64) -> Trend {
    let change = (predicted - price) / price;
    if change < -dead_band {
        Trend::Decreasing
    } else if change > dead_band {
        Trend::Increasing
    } else {
        Trend::Stable
    }
}

fn binary(at_least_initial: bool) -> Binary {
    if at_least_initial {
        Binary::High
    } else {
        Binary::Low
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub id: usize,
    pub params: AgentParams,
    pub portfolio: Portfolio,
    pub lens: AgentFundamentalLens,
    forecaster: TabularPolicy,
    trader: TabularPolicy,
    pending_forecasts: VecDeque<PendingForecast>,
    pending_trades: VecDeque<PendingTrade>,
    initial_nav: f64,
    bankrupt: bool,
    /// Overrides the order direction after every other rule; for controlled experiments.
    pub intent_lock: Option<Intent>,
    rng: SimRng,
}

impl Agent {
    /// Draws parameters, cash and valuation lens from the agent's own stream.
    pub fn new(id: usize, bias: Bias, config: &SimConfig, mut rng: SimRng) -> Self {
        let [cash_lo, cash_hi] = config.initial_cash_multiplier;
        let u = if cash_lo < cash_hi {
            rng.random_range(cash_lo..cash_hi)
        } else {
            cash_lo
        };
        let initial_cash = config.initial_shares as f64 * config.initial_price * u;
        let tau = match bias {
            Bias::DelayDiscounting => rng.random_range(config.week..2 * config.week),
            _ => rng.random_range(config.week..=6 * config.month),
        };
        let memory = rng.random_range(config.week..=config.steps);
        let [g_lo, g_hi] = config.gesture_range;
        let gesture = if g_lo < g_hi {
            rng.random_range(g_lo..g_hi)
        } else {
            g_lo
        };
        let reflexivity: f64 = rng.random();
        let lens = AgentFundamentalLens::draw(
            config.fundamental.valuation_bias_sd,
            config.fundamental.observation_noise,
            &mut rng,
        );
        let portfolio = Portfolio::new(initial_cash, vec![config.initial_shares; config.stocks]);
        let initial_nav = portfolio.nav(&vec![config.initial_price; config.stocks]);
        Self {
            id,
            params: AgentParams {
                tau,
                memory,
                gesture,
                reflexivity,
                bias,
                order_fraction: config.order_fraction,
            },
            portfolio,
            lens,
            forecaster: TabularPolicy::for_spaces::<StateF, ActionF>(
                config.learning_rate,
                config.temperature,
            )
            .expect("validated config"),
            trader: TabularPolicy::for_spaces::<StateT, ActionT>(
                config.learning_rate,
                config.temperature,
            )
            .expect("validated config"),
            pending_forecasts: VecDeque::new(),
            pending_trades: VecDeque::new(),
            initial_nav,
            bankrupt: false,
            intent_lock: None,
            rng,
        }
    }

    pub fn forecaster(&self) -> &TabularPolicy {
        &self.forecaster
    }

    pub fn trader(&self) -> &TabularPolicy {
        &self.trader
    }

    pub fn pending_forecasts(&self) -> &VecDeque<PendingForecast> {
        &self.pending_forecasts
    }

    pub fn pending_trades(&self) -> &VecDeque<PendingTrade> {
        &self.pending_trades
    }

    pub fn initial_nav(&self) -> f64 {
        self.initial_nav
    }

    pub fn is_bankrupt(&self) -> bool {
        self.bankrupt
    }

    pub fn mark_to_market(&self, prices: &[f64]) -> f64 {
        self.portfolio.nav(prices)
    }

    /// Flags the agent once its NAV drops below `fraction` of the initial NAV.
    pub fn check_bankruptcy(&mut self, prices: &[f64], fraction: f64) -> bool {
        if !self.bankrupt && self.mark_to_market(prices) < fraction * self.initial_nav {
            self.bankrupt = true;
        }
        self.bankrupt
    }

    /// Restores the opening portfolio and clears the bankruptcy flag. Learned
    /// tables and pending rewards are kept.
    pub fn reset_portfolio(&mut self) {
        self.portfolio.reset();
        self.bankrupt = false;
    }

    pub fn encode_forecast_state(
        &self,
        history: &StockHistory,
        fundamental_estimate: f64,
        config: &SimConfig,
    ) -> StateF {
        let memory = self.params.memory;
        let q = config.tercile_quantiles;
        StateF {
            long_volatility: Level::from_index(tercile_level(history.long_volatility(), memory, q)),
            short_volatility: Level::from_index(tercile_level(
                history.short_volatility(),
                memory,
                q,
            )),
            valuation_gap: gap_level(
                fundamental_estimate,
                history.last_price(),
                config.gap_thresholds,
            ),
        }
    }

    /// Price predicted for `action` at `t + tau`, before any RL bookkeeping.
    pub fn predict(
        &self,
        action: ActionF,
        history: &StockHistory,
        fundamental_estimate: f64,
        config: &SimConfig,
    ) -> f64 {
        let price = history.last_price();
        let lag = config.forecast_lags()[action.lag.index()].min(self.params.memory);
        let chartist = chartist_estimate(action.kind, history.recent_prices(lag), self.params.tau);
        let weight =
            self.params.reflexivity * config.reflexivity_weights[action.reflexivity.index()];
        let blended = weight * fundamental_estimate + (1.0 - weight) * chartist;
        blended.max(config.price_floor_fraction * price)
    }

    /// Runs the forecasting learner and queues the forecast for scoring.
    pub fn forecast(
        &mut self,
        stock: StockId,
        history: &StockHistory,
        fundamentals: &FundamentalSeries,
        config: &SimConfig,
    ) -> Forecast {
        let t = history.now();
        let estimate = self.lens.estimate(fundamentals, t, &mut self.rng);
        let state = self.encode_forecast_state(history, estimate, config);
        let action =
            ActionF::from_index(self.forecaster.select_action(state.index(), &mut self.rng));
        let predicted_price = self.predict(action, history, estimate, config);
        self.pending_forecasts.push_back(PendingForecast {
            made_at: t,
            horizon: self.params.tau,
            stock,
            predicted_price,
            state,
            action,
        });
        Forecast {
            stock,
            predicted_price,
            fundamental_estimate: estimate,
            state,
            action,
        }
    }

    pub fn encode_trade_state(
        &self,
        forecast: &Forecast,
        history: &StockHistory,
        config: &SimConfig,
    ) -> StateT {
        let price = history.last_price();
        let liquidity_now = *history.liquidity().last().expect("non-empty");
        let liquidity = if liquidity_now == 0.0 {
            Liquidity::Zero
        } else if below_running_median(history.liquidity(), self.params.memory) {
            Liquidity::Low
        } else {
            Liquidity::High
        };
        StateT {
            trend: trend_level(forecast.predicted_price, price, config.trend_dead_band),
            volatility: forecast.state.short_volatility,
            cash: binary(self.portfolio.cash >= self.portfolio.initial_cash),
            holdings: binary(
                self.portfolio.holdings[forecast.stock]
                    >= self.portfolio.initial_holdings[forecast.stock],
            ),
            liquidity,
        }
    }

    /// Builds the limit order for a chosen action, if it is feasible.
    ///
    /// `available_cash` is what remains after earlier buy orders of the same
    /// step; a buy reserves `limit * quantity` from it.
    pub fn order_for(
        &self,
        action: ActionT,
        forecast: &Forecast,
        history: &StockHistory,
        config: &SimConfig,
        available_cash: &mut f64,
    ) -> Option<Order> {
        let price = history.last_price();
        let floor = config.price_floor_fraction * price;
        let offset = self.params.gesture * history.last_spread();
        let stock = forecast.stock;
        match action.intent {
            Intent::Hold => None,
            Intent::Buy => {
                let d = match action.gesture {
                    Gesture::Gain => -offset,
                    Gesture::Neutral => 0.0,
                    Gesture::Lose => offset,
                };
                let limit = (forecast.predicted_price + d).max(floor);
                let budget = self.params.order_fraction * available_cash.max(0.0);
                let quantity = (budget / limit).floor() as u64;
                if quantity == 0 {
                    return None;
                }
                *available_cash -= limit * quantity as f64;
                Order::new(self.id, stock, Side::Bid, quantity, limit).ok()
            }
            Intent::Sell => {
                let d = match action.gesture {
                    Gesture::Gain => offset,
                    Gesture::Neutral => 0.0,
                    Gesture::Lose => -offset,
                };
                let limit = (forecast.predicted_price + d).max(floor);
                let quantity = self.portfolio.holdings[stock];
                if quantity == 0 {
                    return None;
                }
                Order::new(self.id, stock, Side::Ask, quantity, limit).ok()
            }
        }
    }

    /// Runs the trading learner, applies the bias profile and queues the
    /// decision for scoring. Returns the order to submit, if any.
    pub fn decide_trade(
        &mut self,
        forecast: &Forecast,
        history: &StockHistory,
        config: &SimConfig,
        available_cash: &mut f64,
    ) -> Option<Order> {
        let state = self.encode_trade_state(forecast, history, config);
        let proposed = ActionT::from_index(self.trader.select_action(state.index(), &mut self.rng));
        let mut action = apply_bias_override(
            self.params.bias,
            &state,
            proposed,
            config.override_period,
            &mut self.rng,
        );
        if let Some(intent) = self.intent_lock {
            action.intent = intent;
        }
        let order = self.order_for(action, forecast, history, config, available_cash);
        let side = match action.intent {
            Intent::Buy => TradeSide::Buy,
            Intent::Sell => TradeSide::Sell,
            Intent::Hold => TradeSide::Hold,
        };
        self.pending_trades.push_back(PendingTrade {
            executed_at: history.now(),
            stock: forecast.stock,
            side,
            quantity: 0,
            notional: 0.0,
            state,
            action,
        });
        order
    }

    /// Attaches a fill to the trade decided at step `t` for `stock`.
    pub fn record_fill(&mut self, t: usize, stock: StockId, quantity: u64, notional: f64) {
        let pending = self
            .pending_trades
            .iter_mut()
            .rev()
            .find(|p| p.executed_at == t && p.stock == stock)
            .expect("fill without a pending trade");
        pending.quantity += quantity;
        pending.notional += notional;
    }

    /// Scores every forecast and trade maturing at step `t` against the
    /// current prices and updates both tables.
    pub fn realize_matured(&mut self, t: usize, prices: &[f64]) -> RealizedRewards {
        let mut out = RealizedRewards::default();
        while let Some(front) = self.pending_forecasts.front() {
            let due = front.made_at + front.horizon;
            debug_assert!(due >= t, "forecast overdue");
            if due != t {
                break;
            }
            let p = self.pending_forecasts.pop_front().expect("front exists");
            let r = forecast_reward(p.predicted_price, prices[p.stock]);
            self.forecaster
                .update(p.state.index(), p.action.index(), r)
                .expect("prices are positive");
            out.forecast_sum += r;
            out.forecast_count += 1;
        }
        while let Some(front) = self.pending_trades.front() {
            let due = front.executed_at + self.params.tau;
            debug_assert!(due >= t, "trade overdue");
            if due != t {
                break;
            }
            let p = self.pending_trades.pop_front().expect("front exists");
            let r = match p.exec_price() {
                Some(exec) => trade_reward(p.side, p.quantity, exec, prices[p.stock]),
                None => 0.0,
            };
            self.trader
                .update(p.state.index(), p.action.index(), r)
                .expect("prices are positive");
            out.trade_sum += r;
            out.trade_count += 1;
        }
        out
    }
}
