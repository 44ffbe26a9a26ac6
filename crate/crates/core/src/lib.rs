//! Agent-based stock market with learning investors and behavioural biases.
//!
//! Agents learn a forecasting policy and a trading policy with tabular
//! reinforcement learning and trade through a per-step batch double auction.
//! A share of the population can carry one of three biases (delay
//! discounting, fear, greed); [`engine::run_sweep`] measures how market
//! statistics move with that share.

pub mod agents;
pub mod config;
pub mod engine;
pub mod fundamentals;
pub mod io;
pub mod market;
pub mod orderbook;
pub mod policy;
pub mod rng;
pub mod stats;

pub use config::{BiasKind, SimConfig};
pub use engine::{run_simulation, run_sweep, RunOutput, Simulation, SweepOutput};
pub use orderbook::{clear_auction, ClearingResult, Order, Side, Trade};
pub use policy::TabularPolicy;
pub use stats::MetricsReport;
