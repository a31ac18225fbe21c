//! Matching and price formation: bilateral goods trades with logit seller
//! choice, labor matching, bank credit and the monthly equity clearing house.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::Bank;

/// Smallest money amount used as an equity floor when pricing credit risk.
pub const EQUITY_FLOOR: f64 = 1e-6;

/// Applies the bilateral price rule. A trade happens when the buyer's price
/// is at least the seller's; then the buyer's price falls and the seller's
/// rises by `epsilon`. Otherwise both move the opposite way.
pub fn attempt_transaction(buyer_price: f64, seller_price: f64, epsilon: f64) -> (bool, f64, f64) {
    if buyer_price >= seller_price {
        (
            true,
            buyer_price * (1.0 - epsilon),
            seller_price * (1.0 + epsilon),
        )
    } else {
        (
            false,
            buyer_price * (1.0 + epsilon),
            seller_price * (1.0 - epsilon),
        )
    }
}

/// Logit choice probabilities `exp(-gamma p_i) / sum_j exp(-gamma p_j)`.
pub fn logit_probabilities(prices: &[f64], gamma: f64) -> Vec<f64> {
    let min = prices.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = prices.iter().map(|p| (-gamma * (p - min)).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Draws a seller index by inverse CDF. `None` for an empty list.
pub fn select_seller_logit<R: Rng>(prices: &[f64], gamma: f64, rng: &mut R) -> Option<usize> {
    if prices.is_empty() {
        return None;
    }
    let probs = logit_probabilities(prices, gamma);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Some(i);
        }
    }
    Some(prices.len() - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TradeKind {
    Goods,
    Ic,
    Equity,
    Labor,
    Transfer,
}

/// One executed exchange, before it is booked in the ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub buyer: usize,
    pub seller: usize,
    /// Producer position for goods, firm id for equity.
    pub item: usize,
    pub price: f64,
    pub quantity: f64,
    pub day: u32,
    pub kind: TradeKind,
}

/// A seller visible to a shopper, with its current ask and stock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SellerQuote {
    pub id: usize,
    pub price: f64,
    pub stock: f64,
}

/// A fill `(index into the seller slice, quantity, price)`.
pub type Fill = (usize, f64, f64);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShoppingOutcome {
    pub fills: Vec<Fill>,
    pub spent: f64,
    /// Budget left unspent.
    pub unmet: f64,
    /// True when no seller with stock was available at all.
    pub no_seller: bool,
}

/// Spends up to `budget` among `sellers`. Each trial picks a seller by logit
/// on price, applies the price rule against `reservation`, and on success
/// buys `min(remaining / price, stock)`. Seller prices and stocks in the
/// slice are updated in place.
pub fn shopping_round<R: Rng>(
    reservation: &mut f64,
    budget: f64,
    sellers: &mut [SellerQuote],
    epsilon: f64,
    gamma: f64,
    max_trials: u32,
    rng: &mut R,
) -> ShoppingOutcome {
    let mut out = ShoppingOutcome {
        unmet: budget.max(0.0),
        ..Default::default()
    };
    if budget <= 0.0 {
        return out;
    }
    // Logit weights relative to the opening best ask; only the chosen
    // seller's weight changes after a trial.
    let base = sellers
        .iter()
        .filter(|s| s.stock > 0.0)
        .map(|s| s.price)
        .fold(f64::INFINITY, f64::min);
    let weight = |s: &SellerQuote| {
        if s.stock > 0.0 {
            (-gamma * (s.price - base)).exp()
        } else {
            0.0
        }
    };
    let mut weights: Vec<f64> = sellers.iter().map(weight).collect();
    for trial in 0..max_trials {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            if trial == 0 {
                out.no_seller = true;
            }
            break;
        }
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut k = usize::MAX;
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                k = i;
                acc += w;
                if target < acc {
                    break;
                }
            }
        }
        let seller = &mut sellers[k];
        let ask = seller.price;
        let (traded, buyer_new, seller_new) = attempt_transaction(*reservation, ask, epsilon);
        *reservation = buyer_new;
        seller.price = seller_new;
        if traded {
            let remaining = budget - out.spent;
            let qty = (remaining / ask).min(seller.stock);
            seller.stock -= qty;
            if seller.stock < 1e-12 {
                seller.stock = 0.0;
            }
            let cost = if qty * ask >= remaining { remaining } else { qty * ask };
            out.spent += cost;
            out.fills.push((k, qty, ask));
            if out.spent >= budget * (1.0 - 1e-12) {
                out.spent = budget;
                break;
            }
        }
        weights[k] = weight(&sellers[k]);
    }
    out.unmet = (budget - out.spent).max(0.0);
    out
}

/// Picks up to `vacancies` workers from `candidates` in random order.
pub fn labor_match<R: Rng>(vacancies: usize, candidates: &[usize], rng: &mut R) -> Vec<usize> {
    if vacancies == 0 || candidates.is_empty() {
        return Vec::new();
    }
    let mut pool = candidates.to_vec();
    pool.shuffle(rng);
    pool.truncate(vacancies);
    pool
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoanReason {
    Ok,
    Car,
    Rrr,
    NoBank,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoanDecision {
    pub granted: bool,
    pub amount: f64,
    pub monthly_rate: f64,
    pub reason: LoanReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CreditTerms {
    pub car: f64,
    pub rrr: f64,
    pub r0: f64,
    pub spread: f64,
}

/// Default probability from leverage: `D / (D + E)` with the new loan in `D`
/// and equity floored at [`EQUITY_FLOOR`].
pub fn default_probability(debt_after: f64, net_worth: f64) -> f64 {
    let d = debt_after.max(0.0);
    let e = net_worth.max(EQUITY_FLOOR);
    (d / (d + e)).clamp(0.0, 1.0)
}

pub fn loan_rate(debt_after: f64, net_worth: f64, terms: &CreditTerms) -> f64 {
    terms.r0 + terms.spread * default_probability(debt_after, net_worth)
}

/// Evaluates a loan application against a bank's capital and reserve
/// constraints. The new deposit is assumed to sit at the same bank.
pub fn credit_request(
    bank: Option<&Bank>,
    firm_debt: f64,
    firm_net_worth: f64,
    amount: f64,
    terms: &CreditTerms,
) -> LoanDecision {
    let rate = loan_rate(firm_debt + amount, firm_net_worth, terms);
    let deny = |reason| LoanDecision {
        granted: false,
        amount: 0.0,
        monthly_rate: rate,
        reason,
    };
    let Some(bank) = bank else {
        return deny(LoanReason::NoBank);
    };
    if amount <= 0.0 {
        return deny(LoanReason::Ok);
    }
    let loans_after = bank.loans + amount;
    if bank.equity() < terms.car * loans_after {
        return deny(LoanReason::Car);
    }
    if bank.reserves < terms.rrr * (bank.deposits + amount) {
        return deny(LoanReason::Rrr);
    }
    LoanDecision {
        granted: true,
        amount,
        monthly_rate: rate,
        reason: LoanReason::Ok,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityOrder {
    pub side: Side,
    pub firm: usize,
    pub limit_price: f64,
    pub quantity: f64,
    pub agent: usize,
    pub arrival: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityTrade {
    pub firm: usize,
    pub buy_order: usize,
    pub sell_order: usize,
    pub price: f64,
    pub quantity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClearingResult {
    pub trades: Vec<EquityTrade>,
    /// Filled quantity per input order.
    pub filled: Vec<f64>,
    /// Limit prices after the epsilon rule, per input order.
    pub updated_limits: Vec<f64>,
    /// Last execution price per firm that traded.
    pub quoted: BTreeMap<usize, f64>,
}

/// Batch matching of one month's orders. Per firm, buys are ranked by
/// descending limit and sells by ascending limit (ties by arrival). The
/// executed volume is the largest any crossing allocation can reach; it is
/// filled from the top of each ranking, and the selected buys are paired
/// from the lowest limit up with the cheapest selected sells. Trades execute
/// at the sell limit and are reported in sell-priority order.
pub fn clearing_house(orders: &[EquityOrder], epsilon: f64) -> ClearingResult {
    let mut result = ClearingResult {
        filled: vec![0.0; orders.len()],
        updated_limits: vec![0.0; orders.len()],
        ..Default::default()
    };
    let mut by_firm: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, o) in orders.iter().enumerate() {
        let entry = by_firm.entry(o.firm).or_default();
        match o.side {
            Side::Buy => entry.0.push(i),
            Side::Sell => entry.1.push(i),
        }
    }
    for (firm, (mut buys, mut sells)) in by_firm {
        buys.sort_by(|&a, &b| {
            orders[b]
                .limit_price
                .total_cmp(&orders[a].limit_price)
                .then(orders[a].arrival.cmp(&orders[b].arrival))
        });
        sells.sort_by(|&a, &b| {
            orders[a]
                .limit_price
                .total_cmp(&orders[b].limit_price)
                .then(orders[a].arrival.cmp(&orders[b].arrival))
        });
        let pairs = max_crossing_pairs(orders, &buys, &sells);
        let rank = |s: usize| sells.iter().position(|&x| x == s).unwrap_or(usize::MAX);
        let mut trades: Vec<(usize, EquityTrade)> = pairs
            .into_iter()
            .map(|(b, s, quantity)| {
                (rank(s), EquityTrade {
                    firm,
                    buy_order: b,
                    sell_order: s,
                    price: orders[s].limit_price,
                    quantity,
                })
            })
            .collect();
        trades.sort_by_key(|(r, _)| *r);
        for (_, t) in trades {
            result.filled[t.buy_order] += t.quantity;
            result.filled[t.sell_order] += t.quantity;
            result.quoted.insert(firm, t.price);
            result.trades.push(t);
        }
    }
    for (i, o) in orders.iter().enumerate() {
        let filled = result.filled[i] > 0.0;
        result.updated_limits[i] = match (o.side, filled) {
            (Side::Buy, true) | (Side::Sell, false) => o.limit_price * (1.0 - epsilon),
            (Side::Buy, false) | (Side::Sell, true) => o.limit_price * (1.0 + epsilon),
        };
    }
    result
}

/// Pairs the top `volume` of ranked buys, lowest limit first, with the
/// cheapest `volume` of ranked sells. Returns (buy, sell, quantity) or None
/// if some pair does not cross.
fn pair_volume(orders: &[EquityOrder], buys: &[usize], sells: &[usize], volume: f64) -> Option<Vec<(usize, usize, f64)>> {
    let take = |ranked: &[usize]| -> Vec<(usize, f64)> {
        let mut left = volume;
        let mut out = Vec::new();
        for &i in ranked {
            if left <= 0.0 {
                break;
            }
            let q = orders[i].quantity.min(left);
            out.push((i, q));
            left -= q;
        }
        out
    };
    let mut chosen_buys = take(buys);
    chosen_buys.reverse();
    let mut chosen_sells = take(sells);
    let mut pairs = Vec::new();
    let (mut bi, mut si) = (0, 0);
    while bi < chosen_buys.len() && si < chosen_sells.len() {
        let (b, s) = (chosen_buys[bi].0, chosen_sells[si].0);
        if orders[b].limit_price < orders[s].limit_price {
            return None;
        }
        let qty = chosen_buys[bi].1.min(chosen_sells[si].1);
        pairs.push((b, s, qty));
        chosen_buys[bi].1 -= qty;
        chosen_sells[si].1 -= qty;
        if chosen_buys[bi].1 <= 0.0 {
            bi += 1;
        }
        if chosen_sells[si].1 <= 0.0 {
            si += 1;
        }
    }
    Some(pairs)
}

/// Largest feasible volume. Feasibility is monotone in the volume and its
/// maximum lies on a sum of a cumulative buy and a cumulative sell quantity.
fn max_crossing_pairs(orders: &[EquityOrder], buys: &[usize], sells: &[usize]) -> Vec<(usize, usize, f64)> {
    let cumulative = |ranked: &[usize]| -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = vec![0.0];
        for &i in ranked {
            acc += orders[i].quantity;
            out.push(acc);
        }
        out
    };
    let (cb, cs) = (cumulative(buys), cumulative(sells));
    let cap = cb[cb.len() - 1].min(cs[cs.len() - 1]);
    let mut candidates: Vec<f64> = cb
        .iter()
        .flat_map(|b| cs.iter().map(move |s| b + s))
        .chain(cb.iter().copied())
        .chain(cs.iter().copied())
        .filter(|&v| v > 0.0 && v <= cap)
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let (mut lo, mut hi) = (0usize, candidates.len());
    let mut best = Vec::new();
    while lo < hi {
        let mid = (lo + hi) / 2;
        match pair_volume(orders, buys, sells, candidates[mid]) {
            Some(p) => {
                best = p;
                lo = mid + 1;
            }
            None => hi = mid,
        }
    }
    best
}
