mod common;

use common::{random_book, reference_clear};
use mesomarket::orderbook::{clear_auction, Order, Side};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn order_strategy() -> impl Strategy<Value = Vec<(u64, u32)>> {
    prop::collection::vec((1u64..=5, 90u32..=110), 0..=8)
}

fn build(raw: &[(u64, u32)], side: Side, first_id: usize) -> Vec<Order> {
    raw.iter()
        .enumerate()
        .map(|(i, &(q, p))| Order::new(first_id + i, 0, side, q, f64::from(p)).unwrap())
        .collect()
}

#[test]
fn seeded_books_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..2_000 {
        let (bids, asks) = random_book(&mut rng);
        let got = clear_auction(&bids, &asks, 100.0, 1.0);
        let want = reference_clear(&bids, &asks, 100.0, 1.0);
        assert!(
            common::matches_reference(&got, &want),
            "bids={bids:?} asks={asks:?}"
        );
        assert!((got.spread - want.spread).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn clearing_matches_reference(
        b in order_strategy(),
        a in order_strategy(),
        prev in 50.0f64..150.0,
    ) {
        let bids = build(&b, Side::Bid, 0);
        let asks = build(&a, Side::Ask, 100);
        let got = clear_auction(&bids, &asks, prev, 2.5);
        let want = reference_clear(&bids, &asks, prev, 2.5);
        prop_assert!(common::matches_reference(&got, &want));
        prop_assert!((got.spread - want.spread).abs() < 1e-12);
    }

    #[test]
    fn trades_respect_both_limits(
        b in order_strategy(),
        a in order_strategy(),
    ) {
        let bids = build(&b, Side::Bid, 0);
        let asks = build(&a, Side::Ask, 100);
        let got = clear_auction(&bids, &asks, 100.0, 1.0);
        let limit = |orders: &[Order], id: usize| orders.iter().find(|o| o.agent_id == id).unwrap().limit_price;
        for t in &got.trades {
            prop_assert!(t.price <= limit(&bids, t.buyer_id));
            prop_assert!(t.price >= limit(&asks, t.seller_id));
        }
        let bought: u64 = got.trades.iter().map(|t| t.quantity).sum();
        prop_assert_eq!(bought, got.volume);
        prop_assert!(got.volume <= b.iter().map(|x| x.0).sum::<u64>().min(a.iter().map(|x| x.0).sum()));
    }
}
