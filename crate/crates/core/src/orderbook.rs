//! Batch double-auction clearing.
//!
//! Every step each stock gets a fresh book. Bids are ranked by descending
//! limit, asks by ascending limit, and the two heads are matched at the mid
//! of their limits until the best bid no longer reaches the best ask. A
//! partially filled order stays at the head and meets the next counterparty.
//! Orders at the same limit keep their submission order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type AgentId = usize;
pub type StockId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

#[derive(Debug, Error, PartialEq)]
pub enum OrderError {
    #[error("order quantity must be at least 1")]
    ZeroQuantity,
    #[error("limit price must be positive and finite, got {0}")]
    BadPrice(f64),
}

/// A limit order for one stock at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub agent_id: AgentId,
    pub stock_id: StockId,
    pub side: Side,
    pub quantity: u64,
    pub limit_price: f64,
}

impl Order {
    pub fn new(
        agent_id: AgentId,
        stock_id: StockId,
        side: Side,
        quantity: u64,
        limit_price: f64,
    ) -> Result<Self, OrderError> {
        if quantity == 0 {
            return Err(OrderError::ZeroQuantity);
        }
        if !(limit_price.is_finite() && limit_price > 0.0) {
            return Err(OrderError::BadPrice(limit_price));
        }
        Ok(Self {
            agent_id,
            stock_id,
            side,
            quantity,
            limit_price,
        })
    }

    pub fn bid(agent_id: AgentId, quantity: u64, limit_price: f64) -> Result<Self, OrderError> {
        Self::new(agent_id, 0, Side::Bid, quantity, limit_price)
    }

    pub fn ask(agent_id: AgentId, quantity: u64, limit_price: f64) -> Result<Self, OrderError> {
        Self::new(agent_id, 0, Side::Ask, quantity, limit_price)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub buyer_id: AgentId,
    pub seller_id: AgentId,
    pub quantity: u64,
    pub price: f64,
}

/// Outcome of one auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingResult {
    pub trades: Vec<Trade>,
    /// Price of the last executed trade, or the previous price when nothing traded.
    pub market_price: f64,
    pub volume: u64,
    /// `|mean bid limit - mean ask limit|` over every submitted order.
    pub spread: f64,
    /// Set when one side was empty and `spread` is the previous value.
    pub spread_carried: bool,
}

fn mean_limit(orders: &[Order]) -> Option<f64> {
    if orders.is_empty() {
        None
    } else {
        Some(orders.iter().map(|o| o.limit_price).sum::<f64>() / orders.len() as f64)
    }
}

/// Clears one batch.
///
/// `prev_price` and `prev_spread` are carried forward when no trade happens or
/// one side of the book is empty.
pub fn clear_auction(
    bids: &[Order],
    asks: &[Order],
    prev_price: f64,
    prev_spread: f64,
) -> ClearingResult {
    debug_assert!(prev_price > 0.0);
    debug_assert!(bids.iter().all(|o| o.side == Side::Bid));
    debug_assert!(asks.iter().all(|o| o.side == Side::Ask));

    // Stable sorts keep submission order among equal limits.
    let mut bid_rank: Vec<usize> = (0..bids.len()).collect();
    bid_rank.sort_by(|&a, &b| bids[b].limit_price.total_cmp(&bids[a].limit_price));
    let mut ask_rank: Vec<usize> = (0..asks.len()).collect();
    ask_rank.sort_by(|&a, &b| asks[a].limit_price.total_cmp(&asks[b].limit_price));

    let mut trades = Vec::new();
    let (mut bi, mut ai) = (0usize, 0usize);
    let mut bid_left = bid_rank.first().map_or(0, |&k| bids[k].quantity);
    let mut ask_left = ask_rank.first().map_or(0, |&k| asks[k].quantity);

    while bi < bid_rank.len() && ai < ask_rank.len() {
        let bid = &bids[bid_rank[bi]];
        let ask = &asks[ask_rank[ai]];
        if bid.limit_price < ask.limit_price {
            break;
        }
        let quantity = bid_left.min(ask_left);
        trades.push(Trade {
            buyer_id: bid.agent_id,
            seller_id: ask.agent_id,
            quantity,
            price: 0.5 * (bid.limit_price + ask.limit_price),
        });
        bid_left -= quantity;
        ask_left -= quantity;
        if bid_left == 0 {
            bi += 1;
            bid_left = bid_rank.get(bi).map_or(0, |&k| bids[k].quantity);
        }
        if ask_left == 0 {
            ai += 1;
            ask_left = ask_rank.get(ai).map_or(0, |&k| asks[k].quantity);
        }
    }

    let volume = trades.iter().map(|t| t.quantity).sum();
    let market_price = trades.last().map_or(prev_price, |t| t.price);
    let (spread, spread_carried) = match (mean_limit(bids), mean_limit(asks)) {
        (Some(b), Some(a)) => ((b - a).abs(), false),
        _ => (prev_spread, true),
    };

    ClearingResult {
        trades,
        market_price,
        volume,
        spread,
        spread_carried,
    }
}
