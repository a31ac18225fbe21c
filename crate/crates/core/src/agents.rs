//! Agent records and the per-agent decision rules.
//!
//! The rules are pure functions of agent state; the engine applies their
//! results to the world.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::TechnicalCoefficients;

/// Location in the unit square; distances wrap around (torus).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        let dx = (self.x - other.x).abs();
        let dy = (self.y - other.y).abs();
        let dx = dx.min(1.0 - dx);
        let dy = dy.min(1.0 - dy);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn random<R: Rng>(rng: &mut R) -> Self {
        Point {
            x: rng.gen(),
            y: rng.gen(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub id: usize,
    pub location: Point,
    /// Day of month (1-based) on which the household shops.
    pub buy_day: u32,
    pub employer: Option<usize>,
    pub wage: f64,
    /// Currency held outside banks.
    pub cash: f64,
    pub deposits: f64,
    pub bank: Option<usize>,
    /// Firm id → shares held.
    pub shares: BTreeMap<usize, f64>,
    /// Net income of past months, newest last.
    pub income_history: VecDeque<f64>,
    pub income_month: f64,
    /// Accumulated GFCF purchases valued at cost (dwellings and other
    /// durable investment).
    pub housing: f64,
    /// Reservation (buyer) price per producer position.
    pub reservation: Vec<f64>,
    pub owns_firm: Option<usize>,
    pub owns_bank: Option<usize>,
    /// Income received this month by source, before direct taxes.
    pub wage_month: f64,
    pub capital_month: f64,
    pub transfer_month: f64,
    /// Direct taxes paid this month.
    pub tax_month: f64,
    /// Goods and GFCF budget for the current month, before purchase taxes.
    pub budget: f64,
    /// Spending this month including purchase taxes.
    pub spent_month: f64,
    /// Money set aside for share purchases at the next clearing.
    pub equity_budget: f64,
    /// Limit price per firm for share orders.
    pub equity_reservation: BTreeMap<usize, f64>,
}

impl Household {
    pub fn new(id: usize, location: Point, buy_day: u32, cash: f64, n_sectors: usize) -> Self {
        Household {
            id,
            location,
            buy_day,
            employer: None,
            wage: 0.0,
            cash,
            deposits: 0.0,
            bank: None,
            shares: BTreeMap::new(),
            income_history: VecDeque::new(),
            income_month: 0.0,
            housing: 0.0,
            reservation: vec![1.0; n_sectors],
            owns_firm: None,
            owns_bank: None,
            wage_month: 0.0,
            capital_month: 0.0,
            transfer_month: 0.0,
            tax_month: 0.0,
            budget: 0.0,
            spent_month: 0.0,
            equity_budget: 0.0,
            equity_reservation: BTreeMap::new(),
        }
    }

    /// Trailing mean of monthly net income.
    pub fn average_income(&self) -> f64 {
        if self.income_history.is_empty() {
            0.0
        } else {
            self.income_history.iter().sum::<f64>() / self.income_history.len() as f64
        }
    }

    pub fn liquid(&self) -> f64 {
        self.cash + self.deposits
    }

    /// Financial wealth: cash, deposits and shares at their last price.
    pub fn wealth(&self, share_price: impl Fn(usize) -> f64) -> f64 {
        self.cash
            + self.deposits
            + self
                .shares
                .iter()
                .map(|(&f, &q)| q * share_price(f))
                .sum::<f64>()
    }

    /// Financial wealth plus accumulated real assets.
    pub fn net_worth(&self, share_price: impl Fn(usize) -> f64) -> f64 {
        self.wealth(share_price) + self.housing
    }
}

/// Who granted a loan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lender {
    CentralBank,
    Bank(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loan {
    pub lender: Lender,
    pub principal: f64,
    pub monthly_rate: f64,
    /// Principal repaid each month.
    pub installment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Firm {
    pub id: usize,
    pub owner: usize,
    /// Producer position.
    pub sector: usize,
    pub location: Point,
    pub production_day: u32,
    pub ask_price: f64,
    pub goods: f64,
    /// Book value of `goods` at production cost.
    pub goods_value: f64,
    /// Input stocks per producer position.
    pub inputs: Vec<f64>,
    pub inputs_value: Vec<f64>,
    /// Reservation price per input sector.
    pub reservation: Vec<f64>,
    pub employees: Vec<usize>,
    /// Payment account balance.
    pub balance: f64,
    pub bank: Option<usize>,
    pub loans: Vec<Loan>,
    pub listed: bool,
    pub shares_outstanding: f64,
    pub share_price: f64,
    /// Units sold per month, newest last.
    pub demand_history: VecDeque<f64>,
    pub profit_history: VecDeque<f64>,
    pub sold_month: f64,
    pub revenue_month: f64,
    pub costs_month: f64,
    pub last_costs: f64,
    /// Output planned for the first production run.
    pub seed_output: f64,
    pub open: bool,
    /// Household id → shares held (owner included).
    pub holders: BTreeMap<usize, f64>,
    pub ic_cost_month: f64,
    pub import_cost_month: f64,
    pub wage_bill_month: f64,
    pub tax_month: f64,
    pub interest_month: f64,
}

impl Firm {
    pub fn new(
        id: usize,
        owner: usize,
        sector: usize,
        location: Point,
        production_day: u32,
        n_sectors: usize,
    ) -> Self {
        Firm {
            id,
            owner,
            sector,
            location,
            production_day,
            ask_price: 1.0,
            goods: 0.0,
            goods_value: 0.0,
            inputs: vec![0.0; n_sectors],
            inputs_value: vec![0.0; n_sectors],
            reservation: vec![1.0; n_sectors],
            employees: Vec::new(),
            balance: 0.0,
            bank: None,
            loans: Vec::new(),
            listed: false,
            shares_outstanding: 0.0,
            share_price: 0.0,
            demand_history: VecDeque::new(),
            profit_history: VecDeque::new(),
            sold_month: 0.0,
            revenue_month: 0.0,
            costs_month: 0.0,
            last_costs: 0.0,
            seed_output: 0.0,
            open: true,
            holders: BTreeMap::new(),
            ic_cost_month: 0.0,
            import_cost_month: 0.0,
            wage_bill_month: 0.0,
            tax_month: 0.0,
            interest_month: 0.0,
        }
    }

    pub fn debt(&self) -> f64 {
        self.loans.iter().map(|l| l.principal).sum()
    }

    pub fn inventory_value(&self) -> f64 {
        self.goods_value + self.inputs_value.iter().sum::<f64>()
    }

    pub fn net_worth(&self) -> f64 {
        self.balance + self.inventory_value() - self.debt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bank {
    pub id: usize,
    pub owner: usize,
    /// Book equity: paid-in capital plus retained profits.
    pub capital: f64,
    pub reserves: f64,
    /// Total deposit liabilities (household deposits plus firm accounts).
    pub deposits: f64,
    pub loans: f64,
    /// Overnight borrowing from the central bank covering reserve shortfalls.
    pub cb_borrowing: f64,
    pub profit_month: f64,
}

impl Bank {
    pub fn equity(&self) -> f64 {
        self.reserves + self.loans - self.deposits - self.cb_borrowing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Government {
    /// Balance at the central bank; negative when in deficit.
    pub balance: f64,
    /// Tax account index → receipts in the current month.
    pub receipts_month: BTreeMap<usize, f64>,
    /// Subsidy budget left undisbursed, accumulated.
    pub undisbursed_subsidies: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralBank {
    pub policy_rate: f64,
    pub min_net_worth: f64,
    pub max_banks: usize,
    /// Outstanding loans to firms granted before any commercial bank existed.
    pub firm_loans: f64,
    pub bank_advances: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSector {
    /// Buyer reservation price per producer position.
    pub reservation: Vec<f64>,
    /// Price at which imports are sold.
    pub import_price: f64,
    /// Cumulative money paid into the domestic economy minus received.
    pub cumulative_net: f64,
}

/// Buffer-stock consumption budget `factor * max(0, I + kappa (W - phi I))`.
pub fn consumption_budget(income: f64, wealth: f64, kappa: f64, phi: f64, factor: f64) -> f64 {
    factor * (income + kappa * (wealth - phi * income)).max(0.0)
}

/// Splits a monthly surplus into a deposit change and an equity budget.
/// Dissaving is drawn from deposits only.
pub fn portfolio_split(surplus: f64, deposit_fraction: f64) -> (f64, f64) {
    if surplus <= 0.0 {
        (surplus, 0.0)
    } else {
        let deposit = surplus * deposit_fraction;
        (deposit, surplus - deposit)
    }
}

/// Units to produce so that stock reaches `(1 + buffer)` times mean demand
/// over the window. An empty history falls back to `seed_output`.
pub fn plan_production(
    demand_history: &VecDeque<f64>,
    inventory: f64,
    window: usize,
    stock_buffer: f64,
    seed_output: f64,
) -> f64 {
    if demand_history.is_empty() {
        return seed_output.max(0.0);
    }
    let n = window.max(1).min(demand_history.len());
    let mean = demand_history.iter().rev().take(n).sum::<f64>() / n as f64;
    ((1.0 + stock_buffer) * mean - inventory).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProductionMode {
    Leontief,
    CobbDouglas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Requirements {
    /// Intermediate inputs per producer position, in goods units.
    pub ic_units: Vec<f64>,
    /// Value of imported inputs.
    pub imports: f64,
    /// Money budgeted for labor.
    pub labor_budget: f64,
    pub headcount: usize,
    /// Cobb-Douglas labor exponent (1 under Leontief).
    pub labor_exponent: f64,
    /// Taxes due on the output value (may be negative).
    pub tax_provision: f64,
}

impl Requirements {
    /// Cash needed at unit input prices and the given wage.
    pub fn cost(&self, wage: f64) -> f64 {
        self.ic_units.iter().sum::<f64>()
            + self.imports
            + self.headcount as f64 * wage
            + self.tax_provision
    }

    /// Shortfall of `cost` over the available payment account.
    pub fn funding_need(&self, wage: f64, available: f64) -> f64 {
        (self.cost(wage) - available.max(0.0)).max(0.0)
    }
}

/// Inputs needed to produce `output` units (valued at `price`) of a sector.
/// Returns `None` for an unknown sector.
pub fn input_requirements(
    sector: usize,
    output: f64,
    price: f64,
    coeffs: &TechnicalCoefficients,
    wage: f64,
    mode: ProductionMode,
) -> Option<Requirements> {
    if sector >= coeffs.n_sectors() {
        return None;
    }
    let value = output.max(0.0) * price;
    let ic_units = coeffs.ic_share.iter().map(|r| r[sector] * output.max(0.0)).collect();
    let ls = coeffs.labor_share[sector];
    let ss = coeffs.surplus_share[sector];
    let (labor_budget, labor_exponent) = match mode {
        ProductionMode::Leontief => (ls * value, 1.0),
        ProductionMode::CobbDouglas => {
            let alpha = if ls + ss > 0.0 { ls / (ls + ss) } else { 1.0 };
            (alpha * (ls + ss) * value, alpha)
        }
    };
    let headcount = if wage > 0.0 && labor_budget > 0.0 {
        (labor_budget / wage - 1e-9).ceil().max(0.0) as usize
    } else {
        0
    };
    let tax_provision = coeffs.tax_shares.iter().map(|r| r[sector] * value).sum();
    Some(Requirements {
        ic_units,
        imports: coeffs.import_share[sector] * value,
        labor_budget,
        headcount,
        labor_exponent,
        tax_provision,
    })
}

/// With probability `p_open`, the sector with the largest local unmet
/// demand (lowest index on ties). `None` when nothing is unmet.
pub fn firm_entry_decision<R: Rng>(local_unmet: &[f64], p_open: f64, rng: &mut R) -> Option<usize> {
    let draw: f64 = rng.gen();
    if draw >= p_open {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, &c) in local_unmet.iter().enumerate() {
        if c > 0.0 && best.map_or(true, |(_, b)| c > b) {
            best = Some((i, c));
        }
    }
    best.map(|(i, _)| i)
}

/// Closure rule: losses in each of the last `loss_months` months and net
/// worth below `min_net_worth`.
pub fn firm_exit_check(firm: &Firm, loss_months: usize, min_net_worth: f64) -> bool {
    let n = loss_months.max(1);
    firm.profit_history.len() >= n
        && firm.profit_history.iter().rev().take(n).all(|&p| p < 0.0)
        && firm.net_worth() < min_net_worth
}

pub fn bank_founding_check(wealth: f64, cb: &CentralBank, current_banks: usize) -> bool {
    wealth >= cb.min_net_worth && current_banks < cb.max_banks
}

/// Listing is latching: a listed firm stays listed.
pub fn stockmarket_entry_check(firm: &Firm, threshold: f64) -> bool {
    firm.listed || firm.net_worth() >= threshold
}

/// Splits `fraction` of a positive profit pro rata over `holdings`
/// (`(holder, quantity)`). Returns the payouts and the retained amount.
pub fn distribute_profits(
    profit: f64,
    fraction: f64,
    holdings: &[(usize, f64)],
) -> (Vec<(usize, f64)>, f64) {
    let total: f64 = holdings.iter().map(|(_, q)| q).sum();
    if profit <= 0.0 || total <= 0.0 {
        return (Vec::new(), profit);
    }
    let dividends = profit * fraction;
    let payouts: Vec<(usize, f64)> = holdings
        .iter()
        .filter(|(_, q)| *q > 0.0)
        .map(|&(h, q)| (h, dividends * q / total))
        .collect();
    let paid: f64 = payouts.iter().map(|(_, a)| a).sum();
    (payouts, profit - paid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn firm() -> Firm {
        let mut f = Firm::new(0, 0, 0, Point { x: 0.5, y: 0.5 }, 1, 2);
        f.employees = vec![];
        f
    }

    #[test]
    fn buffer_stock_rule() {
        assert_eq!(consumption_budget(1000.0, 3000.0, 0.1, 3.0, 1.0), 1000.0);
        assert!((consumption_budget(1000.0, 3000.0, 0.1, 3.0, 1.3) - 1300.0).abs() < 1e-9);
        assert!((consumption_budget(1000.0, 5000.0, 0.1, 3.0, 1.0) - 1200.0).abs() < 1e-9);
        assert!((consumption_budget(1000.0, 0.0, 0.1, 3.0, 1.0) - 700.0).abs() < 1e-9);
        assert_eq!(consumption_budget(100.0, 0.0, 1.0, 3.0, 1.0), 0.0);
    }

    #[test]
    fn portfolio() {
        assert_eq!(portfolio_split(0.0, 0.8), (0.0, 0.0));
        let (d, e) = portfolio_split(100.0, 0.8);
        assert!((d - 80.0).abs() < 1e-12 && (e - 20.0).abs() < 1e-12);
        assert_eq!(portfolio_split(-50.0, 0.8), (-50.0, 0.0));
    }

    #[test]
    fn production_plan() {
        let hist: VecDeque<f64> = [100.0, 100.0, 100.0].into_iter().collect();
        assert!((plan_production(&hist, 30.0, 3, 0.1, 0.0) - 80.0).abs() < 1e-9);
        assert_eq!(plan_production(&hist, 200.0, 3, 0.1, 0.0), 0.0);
        assert_eq!(plan_production(&VecDeque::new(), 0.0, 3, 0.1, 7.5), 7.5);
        let hist: VecDeque<f64> = [1000.0, 10.0, 20.0].into_iter().collect();
        assert!((plan_production(&hist, 0.0, 2, 0.0, 0.0) - 15.0).abs() < 1e-9);
    }

    #[test]
    fn entry_decision() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(firm_entry_decision(&[0.0; 6], 1.0, &mut rng), None);
        // Counts (5, 0, 12, 0, 3, 0): the third sector (position 2).
        assert_eq!(
            firm_entry_decision(&[5.0, 0.0, 12.0, 0.0, 3.0, 0.0], 1.0, &mut rng),
            Some(2)
        );
        assert_eq!(firm_entry_decision(&[4.0, 4.0], 1.0, &mut rng), Some(0));
        for _ in 0..100 {
            assert_eq!(firm_entry_decision(&[1.0, 2.0], 0.0, &mut rng), None);
        }
    }

    #[test]
    fn exit_rule() {
        let mut f = firm();
        f.profit_history = [1.0; 6].into_iter().collect();
        f.balance = -10.0;
        assert!(!firm_exit_check(&f, 6, 0.0));
        f.profit_history = [-1.0; 6].into_iter().collect();
        assert!(firm_exit_check(&f, 6, 0.0));
        f.balance = 5.0;
        assert!(!firm_exit_check(&f, 6, 0.0));
        f.balance = -10.0;
        f.profit_history = [-1.0; 5].into_iter().collect();
        assert!(!firm_exit_check(&f, 6, 0.0));
    }

    #[test]
    fn bank_and_listing_thresholds() {
        let cb = CentralBank {
            policy_rate: 0.0,
            min_net_worth: 100.0,
            max_banks: 2,
            firm_loans: 0.0,
            bank_advances: 0.0,
        };
        assert!(!bank_founding_check(1e9, &cb, 2));
        assert!(bank_founding_check(100.0, &cb, 1));
        assert!(!bank_founding_check(99.9, &cb, 0));

        let mut f = firm();
        f.balance = 50.0;
        assert!(stockmarket_entry_check(&f, 50.0));
        f.balance = 0.0;
        assert!(!stockmarket_entry_check(&f, 1.0));
        f.listed = true;
        assert!(stockmarket_entry_check(&f, 1.0));
    }

    #[test]
    fn profit_distribution() {
        let (d, r) = distribute_profits(-100.0, 0.5, &[(1, 1.0)]);
        assert!(d.is_empty());
        assert_eq!(r, -100.0);
        let (d, r) = distribute_profits(100.0, 0.5, &[(1, 1.0)]);
        assert_eq!(d, vec![(1, 50.0)]);
        assert_eq!(r, 50.0);
        let (d, r) = distribute_profits(100.0, 0.5, &[(1, 75.0), (2, 25.0)]);
        assert_eq!(d, vec![(1, 37.5), (2, 12.5)]);
        assert_eq!(r, 50.0);
    }

    #[test]
    fn torus_distance() {
        let a = Point { x: 0.05, y: 0.5 };
        let b = Point { x: 0.95, y: 0.5 };
        assert!((a.distance(&b) - 0.1).abs() < 1e-12);
    }
}
