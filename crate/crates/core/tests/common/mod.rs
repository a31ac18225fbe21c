//! Exhaustive-search oracle for the equity clearing house.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use samdeploy::markets::{clearing_house, EquityOrder, Side};

pub fn random_book(rng: &mut ChaCha8Rng) -> Vec<EquityOrder> {
    let n = rng.gen_range(1..=6);
    (0..n)
        .map(|i| EquityOrder {
            side: if rng.gen_bool(0.5) {
                Side::Buy
            } else {
                Side::Sell
            },
            firm: rng.gen_range(0..2),
            // A coarse price grid makes ties common.
            limit_price: 0.9 + 0.05 * rng.gen_range(0..5) as f64,
            quantity: rng.gen_range(1..=10) as f64,
            agent: i,
            arrival: rng.gen_range(0..4),
        })
        .collect()
}

/// No order is left (partly) unfilled while a strictly worse-priced order
/// on the same side of the same firm has traded.
pub fn respects_priority(orders: &[EquityOrder], left: &[f64]) -> bool {
    orders.iter().enumerate().all(|(i, oi)| {
        left[i] <= 0.0
            || orders.iter().enumerate().all(|(j, oj)| {
                let traded = left[j] < oj.quantity;
                let worse = match oi.side {
                    Side::Buy => oj.limit_price < oi.limit_price,
                    Side::Sell => oj.limit_price > oi.limit_price,
                };
                !(oj.firm == oi.firm && oj.side == oi.side && worse && traded)
            })
    })
}

/// Largest volume over every sequence of crossing matches whose resulting
/// allocation respects price priority.
pub fn oracle_volume(orders: &[EquityOrder], left: &mut [f64]) -> f64 {
    let traded: f64 = orders
        .iter()
        .zip(left.iter())
        .filter(|(o, _)| o.side == Side::Buy)
        .map(|(o, l)| o.quantity - l)
        .sum();
    let mut best = if respects_priority(orders, left) {
        traded
    } else {
        0.0
    };
    for b in 0..orders.len() {
        if orders[b].side != Side::Buy || left[b] <= 0.0 {
            continue;
        }
        for s in 0..orders.len() {
            if orders[s].side != Side::Sell
                || left[s] <= 0.0
                || orders[s].firm != orders[b].firm
                || orders[b].limit_price < orders[s].limit_price
            {
                continue;
            }
            let q = left[b].min(left[s]);
            left[b] -= q;
            left[s] -= q;
            best = best.max(oracle_volume(orders, left));
            left[b] += q;
            left[s] += q;
        }
    }
    best
}

/// Checks the matcher on one seeded book. Returns the traded volume.
pub fn check_book(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders = random_book(&mut rng);
    let res = clearing_house(&orders, 0.01);

    let traded: f64 = res.trades.iter().map(|t| t.quantity).sum();
    let mut left: Vec<f64> = orders.iter().map(|o| o.quantity).collect();
    let best = oracle_volume(&orders, &mut left);
    assert_eq!(
        traded, best,
        "seed {seed}: volume {traded} vs oracle {best}\n{orders:#?}\n{:#?}",
        res.trades
    );

    for t in &res.trades {
        let (b, s) = (&orders[t.buy_order], &orders[t.sell_order]);
        assert!(
            b.limit_price >= s.limit_price,
            "seed {seed}: trade below limit"
        );
        assert_eq!(
            t.price, s.limit_price,
            "seed {seed}: price is the seller's limit"
        );
        assert!(b.firm == t.firm && s.firm == t.firm);
    }
    for firm in 0..2 {
        let side_total = |side: Side| -> f64 {
            (0..orders.len())
                .filter(|&i| orders[i].firm == firm && orders[i].side == side)
                .map(|i| res.filled[i])
                .sum()
        };
        assert_eq!(
            side_total(Side::Buy),
            side_total(Side::Sell),
            "seed {seed}: shares conserved"
        );
    }
    for (i, oi) in orders.iter().enumerate() {
        assert!(res.filled[i] <= oi.quantity);
        for (j, oj) in orders.iter().enumerate() {
            if oi.firm != oj.firm || oi.side != oj.side || res.filled[j] <= 0.0 {
                continue;
            }
            let better = match oi.side {
                Side::Buy => oi.limit_price > oj.limit_price,
                Side::Sell => oi.limit_price < oj.limit_price,
            };
            if better {
                assert_eq!(
                    res.filled[i], oi.quantity,
                    "seed {seed}: order {i} skipped for worse order {j}"
                );
            }
        }
    }
    traded
}
