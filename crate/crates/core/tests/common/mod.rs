#![allow(dead_code)]

use mesomarket::orderbook::{Order, Side};
use rand::Rng;

/// Reference clearing: every order becomes a queue of single shares, bids
/// ranked high-to-low and asks low-to-high (submission order on ties), and the
/// k-th bid share meets the k-th ask share while the limits cross. Adjacent
/// share pairs between the same two orders merge into one trade.
pub struct Reference {
    /// (buyer, seller, quantity, price), in execution order.
    pub trades: Vec<(usize, usize, u64, f64)>,
    pub price: f64,
    pub volume: u64,
    pub spread: f64,
}

fn unit_queue(orders: &[Order], descending: bool) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..orders.len()).collect();
    // Insertion sort: stable and obviously so.
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (orders[idx[j - 1]].limit_price, orders[idx[j]].limit_price);
            let out_of_order = if descending { a < b } else { a > b };
            if !out_of_order {
                break;
            }
            idx.swap(j - 1, j);
            j -= 1;
        }
    }
    idx.iter()
        .flat_map(|&k| std::iter::repeat_n((k, orders[k].limit_price), orders[k].quantity as usize))
        .collect()
}

pub fn reference_clear(
    bids: &[Order],
    asks: &[Order],
    prev_price: f64,
    prev_spread: f64,
) -> Reference {
    let b = unit_queue(bids, true);
    let a = unit_queue(asks, false);
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (&(bk, bp), &(ak, ap)) in b.iter().zip(&a) {
        if bp < ap {
            break;
        }
        pairs.push((bk, ak, (bp + ap) / 2.0));
    }
    let mut trades: Vec<(usize, usize, u64, f64)> = Vec::new();
    let mut last: Option<(usize, usize)> = None;
    for &(bk, ak, price) in &pairs {
        if last == Some((bk, ak)) {
            trades.last_mut().unwrap().2 += 1;
        } else {
            trades.push((bids[bk].agent_id, asks[ak].agent_id, 1, price));
            last = Some((bk, ak));
        }
    }
    let price = pairs.last().map_or(prev_price, |p| p.2);
    let spread = if bids.is_empty() || asks.is_empty() {
        prev_spread
    } else {
        let mb: f64 = bids.iter().map(|o| o.limit_price).sum::<f64>() / bids.len() as f64;
        let ma: f64 = asks.iter().map(|o| o.limit_price).sum::<f64>() / asks.len() as f64;
        (mb - ma).abs()
    };
    Reference {
        trades,
        price,
        volume: pairs.len() as u64,
        spread,
    }
}

/// Up to 8 orders per side, integer limits 90..=110, quantities 1..=5.
/// Agent ids are unique across the book.
pub fn random_book<R: Rng>(rng: &mut R) -> (Vec<Order>, Vec<Order>) {
    let nb = rng.random_range(0..=8);
    let na = rng.random_range(0..=8);
    let mut id = 0;
    let mut side = |n: usize, s: Side, rng: &mut R| -> Vec<Order> {
        (0..n)
            .map(|_| {
                id += 1;
                let q = rng.random_range(1..=5);
                let p = rng.random_range(90..=110) as f64;
                Order::new(id, 0, s, q, p).unwrap()
            })
            .collect()
    };
    let bids = side(nb, Side::Bid, rng);
    let asks = side(na, Side::Ask, rng);
    (bids, asks)
}

/// Whether an engine result agrees with the reference on trade multiset,
/// price and volume.
pub fn matches_reference(result: &mesomarket::ClearingResult, reference: &Reference) -> bool {
    let key = |t: &(usize, usize, u64, f64)| (t.0, t.1, t.2, t.3.to_bits());
    let mut got: Vec<_> = result
        .trades
        .iter()
        .map(|t| key(&(t.buyer_id, t.seller_id, t.quantity, t.price)))
        .collect();
    let mut want: Vec<_> = reference.trades.iter().map(key).collect();
    got.sort_unstable();
    want.sort_unstable();
    got == want && result.market_price == reference.price && result.volume == reference.volume
}

/// CSV text without its trailing `#` metadata line.
pub fn body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
