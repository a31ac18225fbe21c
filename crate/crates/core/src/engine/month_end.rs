//! Month-end settlement: wages, credit, taxes, dividends, transfers, firm
//! entry and exit, banks, the equity market and the accounting rollup.

use rand::Rng;

use crate::accounting::{audit_money, EntryKind, Party, TimeSeriesRow};
use crate::agents::{
    bank_founding_check, distribute_profits, firm_entry_decision, firm_exit_check,
    portfolio_split, stockmarket_entry_check, Bank, Firm, Lender,
};
use crate::markets::{clearing_house, EquityOrder, Side};

use super::{World, GRID_SIZE};

/// Fraction of an owner's holding offered each month once a firm is listed.
const OWNER_SELL_FRACTION: f64 = 0.02;
/// Months of firm history kept.
const HISTORY_MONTHS: usize = 24;

impl World {
    pub(super) fn end_of_month(&mut self, money_before: f64) {
        let day = self.cfg.days_per_month;
        self.pay_wages(day);
        self.service_loans(day);
        self.firm_taxes(day);
        self.distribute_surplus(day);
        self.bank_dividends(day);
        self.settle_final_buyer(true, day);
        self.settle_final_buyer(false, day);
        self.pay_transfers(day);
        self.collect_household_taxes(day);
        self.tax_pass_through(day);
        self.update_household_income();

        self.close_failed_firms(day);
        self.open_new_firms(day);
        self.found_bank(day);
        self.list_firms();
        self.clear_equity(day);
        self.rebalance_portfolios();

        let realized = self.buyer_consumption(self.cal.keys.household);
        self.month += 1;
        self.deployment_adjust(realized);
        self.rebuild_index();
        let row = self.timeseries_row();
        self.series.push(row);
        let summary = self.ledger.close_month().clone();
        let report = audit_money(&summary, money_before, self.money_stock());
        self.audits.push(report);
        for c in &mut self.unmet {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Goods and GFCF bought by a final buyer column in the open month.
    pub fn buyer_consumption(&self, column: usize) -> f64 {
        let cells = self.ledger.open_cells();
        self.cal
            .coefficients
            .producers
            .iter()
            .map(|&i| cells[i][column])
            .sum::<f64>()
            + cells[self.cal.keys.gfcf][column]
    }

    pub(super) fn timeseries_row(&self) -> TimeSeriesRow {
        let s = self.cal.scale.agent_scale;
        let cells = self.ledger.open_cells();
        let producers = &self.cal.coefficients.producers;
        let ic_total: f64 = producers
            .iter()
            .flat_map(|&i| producers.iter().map(move |&j| cells[i][j]))
            .sum();
        let open = self.firms.iter().filter(|f| f.open);
        TimeSeriesRow {
            month: self.month,
            unemployment_pct: self.unemployment_pct(),
            employees: self.employees_by_sector(),
            hh_cons: s * self.buyer_consumption(self.cal.keys.household),
            gov_cons: s * self.buyer_consumption(self.cal.keys.government),
            ext_cons: s * self.buyer_consumption(self.cal.keys.external),
            ic_total: s * ic_total,
            inv_goods: s * open.clone().map(|f| f.goods_value).sum::<f64>(),
            inv_inputs: s * open.map(|f| f.inputs_value.iter().sum::<f64>()).sum::<f64>(),
            hh_wealth: s * self.household_net_worths().iter().sum::<f64>(),
        }
    }

    fn open_ids(&self) -> Vec<usize> {
        self.firms.iter().filter(|f| f.open).map(|f| f.id).collect()
    }

    fn pay_wages(&mut self, day: u32) {
        let w = self.wage();
        let (l, h) = (self.cal.keys.labor, self.cal.keys.household);
        let mut total = 0.0;
        for fid in self.open_ids() {
            let col = self.cal.coefficients.producers[self.firms[fid].sector];
            let staff = self.firms[fid].employees.clone();
            for e in staff {
                self.pay(day, Party::Firm(fid), Party::Household(e), w, EntryKind::Wage, Some((l, col)));
                self.households[e].wage_month += w;
                self.firms[fid].wage_bill_month += w;
                total += w;
            }
        }
        self.book(day, h, l, total, EntryKind::WagePass);
    }

    fn service_loans(&mut self, day: u32) {
        for fid in self.open_ids() {
            let loans = std::mem::take(&mut self.firms[fid].loans);
            let mut kept = Vec::with_capacity(loans.len());
            for mut loan in loans {
                let interest = loan.principal * loan.monthly_rate;
                let principal = loan.installment.min(loan.principal);
                match loan.lender {
                    Lender::CentralBank => {
                        // Central bank interest is remitted to the government.
                        self.pay(day, Party::Firm(fid), Party::Government, interest, EntryKind::Interest, None);
                    }
                    Lender::Bank(b) => {
                        self.pay(day, Party::Firm(fid), Party::Bank(b), interest, EntryKind::Interest, None);
                        self.banks[b].profit_month += interest;
                    }
                }
                let lender = Self::lender_party(loan.lender);
                self.pay(day, Party::Firm(fid), lender, principal, EntryKind::Repayment, None);
                loan.principal -= principal;
                self.firms[fid].interest_month += interest;
                if loan.principal > 1e-12 {
                    kept.push(loan);
                }
            }
            self.firms[fid].loans = kept;
        }
    }

    fn firm_taxes(&mut self, day: u32) {
        let taxes = self.cal.coefficients.tax_accounts.clone();
        for fid in self.open_ids() {
            let sector = self.firms[fid].sector;
            let col = self.cal.coefficients.producers[sector];
            let revenue = self.firms[fid].revenue_month;
            for (k, &t) in taxes.iter().enumerate() {
                let amount = self.cal.coefficients.tax_shares[k][sector] * revenue;
                self.pay(day, Party::Firm(fid), Party::Government, amount, EntryKind::Tax, Some((t, col)));
                self.firms[fid].tax_month += amount;
            }
        }
    }

    /// Books gross operating surplus and pays dividends: a fraction of
    /// positive profit plus any liquidity above the firm's reserve.
    fn distribute_surplus(&mut self, day: u32) {
        let (k, h) = (self.cal.keys.capital, self.cal.keys.household);
        for fid in self.open_ids() {
            let (col, gos, payout, holders) = {
                let f = &mut self.firms[fid];
                let gos = f.revenue_month
                    - f.ic_cost_month
                    - f.import_cost_month
                    - f.wage_bill_month
                    - f.tax_month;
                let profit = gos - f.interest_month;
                let costs = f.revenue_month - profit;
                f.costs_month = costs;
                f.last_costs = costs;
                push_capped(&mut f.profit_history, profit);
                push_capped(&mut f.demand_history, f.sold_month);
                let mut payout = if profit > 0.0 {
                    self.cfg.dividend_fraction * profit
                } else {
                    0.0
                };
                let excess = f.balance - f.debt() - payout - self.cfg.liquidity_months * costs;
                if excess > 0.0 {
                    payout += excess;
                }
                let payout = payout.min(f.net_worth()).min(f.balance).max(0.0);
                let holders: Vec<(usize, f64)> = f.holders.iter().map(|(&a, &b)| (a, b)).collect();
                (self.cal.coefficients.producers[f.sector], gos, payout, holders)
            };
            self.book(day, k, col, gos, EntryKind::Surplus);
            let (paid, _) = distribute_profits(payout, 1.0, &holders);
            self.pay_shareholders(day, fid, &paid, (h, k));
        }
    }

    fn bank_dividends(&mut self, day: u32) {
        let (k, h) = (self.cal.keys.capital, self.cal.keys.household);
        for b in 0..self.banks.len() {
            let profit = std::mem::take(&mut self.banks[b].profit_month);
            if profit <= 0.0 {
                continue;
            }
            let owner = self.banks[b].owner;
            let amount = self.cfg.dividend_fraction * profit;
            self.pay(day, Party::Bank(b), Party::Household(owner), amount, EntryKind::BankDividend, Some((h, k)));
            self.households[owner].capital_month += amount;
        }
    }

    /// Purchase taxes and GFCF bookings of the government or external sector
    /// for the month; unspent budgets become an economy-wide entry signal.
    fn settle_final_buyer(&mut self, government: bool, day: u32) {
        let b = if government { &self.gov_buyer } else { &self.ext_buyer };
        let (party, col) = (b.party, b.account);
        let mut direct = 0.0;
        let mut capital = 0.0;
        let mut unspent = vec![0.0; b.budget.len()];
        for i in 0..b.budget.len() {
            direct += b.spent[i] * (1.0 - b.gfcf_fraction[i]);
            capital += b.spent[i] * b.gfcf_fraction[i];
            unspent[i] = (b.budget[i] - b.spent[i]).max(0.0);
        }
        let total = self.gfcf_taxes(day, party, col, capital);
        let plan = if government { &self.cal.government } else { &self.cal.external };
        for t in plan.purchase_taxes.clone() {
            self.pay(day, party, Party::Government, t.rate * (direct + total), EntryKind::Tax, Some((t.account, col)));
        }
        let cells = self.unmet.len() as f64;
        for c in &mut self.unmet {
            for (v, u) in c.iter_mut().zip(&unspent) {
                *v += u / cells;
            }
        }
    }

    /// Government subsidies to the unemployed and external transfers to all
    /// households.
    fn pay_transfers(&mut self, day: u32) {
        let h = self.cal.keys.household;
        let budget = self.cal.subsidy_budget();
        let unemployed: Vec<usize> = (0..self.households.len()).filter(|&i| self.is_unemployed(i)).collect();
        if unemployed.is_empty() {
            self.government.undisbursed_subsidies += budget;
        } else {
            let each = budget / unemployed.len() as f64;
            for i in unemployed {
                self.pay(day, Party::Government, Party::Household(i), each, EntryKind::Subsidy, Some((h, self.cal.keys.government)));
                self.households[i].transfer_month += each;
            }
        }
        let transfer = self.cal.external.household_transfer;
        if transfer != 0.0 {
            let each = transfer / self.households.len() as f64;
            for i in 0..self.households.len() {
                self.pay(day, Party::External, Party::Household(i), each, EntryKind::Transfer, Some((h, self.cal.keys.external)));
                self.households[i].transfer_month += each;
            }
        }
    }

    fn collect_household_taxes(&mut self, day: u32) {
        let h = self.cal.keys.household;
        let taxes = self.cal.household_taxes.clone();
        for i in 0..self.households.len() {
            let (wages, capital) = (self.households[i].wage_month, self.households[i].capital_month);
            let mut paid = 0.0;
            for t in &taxes.payroll {
                let amount = t.rate * wages;
                self.pay(day, Party::Household(i), Party::Government, amount, EntryKind::Tax, Some((t.account, h)));
                paid += amount;
            }
            for t in &taxes.income {
                let amount = t.rate * (wages + capital);
                self.pay(day, Party::Household(i), Party::Government, amount, EntryKind::Tax, Some((t.account, h)));
                paid += amount;
            }
            self.households[i].tax_month += paid;
        }
    }

    /// Tax accounts hand their receipts to the government.
    fn tax_pass_through(&mut self, day: u32) {
        let g = self.cal.keys.government;
        let receipts: Vec<(usize, f64)> = self
            .cal
            .coefficients
            .tax_accounts
            .iter()
            .map(|&t| (t, self.ledger.open_cells()[t].iter().sum()))
            .collect();
        for (t, amount) in receipts {
            self.government.receipts_month.insert(t, amount);
            self.book(day, g, t, amount, EntryKind::TaxPass);
        }
    }

    fn update_household_income(&mut self) {
        let window = self.cfg.income_window.max(1);
        for hh in &mut self.households {
            hh.income_month = hh.wage_month + hh.capital_month + hh.transfer_month - hh.tax_month;
            hh.income_history.push_back(hh.income_month);
            while hh.income_history.len() > window {
                hh.income_history.pop_front();
            }
        }
    }

    fn close_failed_firms(&mut self, day: u32) {
        for fid in self.open_ids() {
            if firm_exit_check(&self.firms[fid], self.cfg.loss_months, 0.0) {
                self.close_firm(fid, day);
            }
        }
    }

    /// Closes a firm: staff are laid off, stocks written off, cash repays
    /// debt and the remainder goes to the owner. Unpaid debt and overdrafts
    /// are written off by the lenders, or covered by the government when
    /// there is no lender.
    pub(super) fn close_firm(&mut self, fid: usize, day: u32) {
        for e in std::mem::take(&mut self.firms[fid].employees) {
            self.households[e].employer = None;
            self.households[e].wage = 0.0;
        }
        let owner = self.firms[fid].owner;
        if self.households[owner].owns_firm == Some(fid) {
            self.households[owner].owns_firm = None;
        }
        {
            let f = &mut self.firms[fid];
            f.goods = 0.0;
            f.goods_value = 0.0;
            f.inputs.iter_mut().for_each(|v| *v = 0.0);
            f.inputs_value.iter_mut().for_each(|v| *v = 0.0);
        }
        for loan in std::mem::take(&mut self.firms[fid].loans) {
            let paid = loan.principal.min(self.firms[fid].balance.max(0.0));
            self.pay(day, Party::Firm(fid), Self::lender_party(loan.lender), paid, EntryKind::Repayment, None);
            let lost = loan.principal - paid;
            match loan.lender {
                Lender::Bank(b) => {
                    self.banks[b].loans -= lost;
                    self.banks[b].capital -= lost;
                }
                Lender::CentralBank => self.central_bank.firm_loans -= lost,
            }
        }
        let balance = self.firms[fid].balance;
        if balance < 0.0 {
            let lender = match self.firms[fid].bank {
                Some(b) => Party::Bank(b),
                None if self.cfg.cb_lending || !self.banks.is_empty() => Party::CentralBank,
                // Without any lender the government covers the overdraft.
                None => Party::Government,
            };
            self.pay(day, lender, Party::Firm(fid), -balance, EntryKind::WriteOff, None);
        } else if balance > 0.0 {
            self.pay(day, Party::Firm(fid), Party::Household(owner), balance, EntryKind::Liquidation, None);
        }
        for (holder, _) in std::mem::take(&mut self.firms[fid].holders) {
            self.households[holder].shares.remove(&fid);
            self.households[holder].equity_reservation.remove(&fid);
        }
        let f = &mut self.firms[fid];
        f.open = false;
        f.listed = false;
        f.share_price = 0.0;
    }

    /// Unemployed households facing unmet demand in their 3x3 block of grid
    /// cells may open a firm in the sector with the largest shortfall.
    fn open_new_firms(&mut self, _day: u32) {
        let n_sectors = self.n_sectors();
        let mut ask_sum = vec![0.0; n_sectors];
        let mut ask_n = vec![0usize; n_sectors];
        for f in self.firms.iter().filter(|f| f.open) {
            ask_sum[f.sector] += f.ask_price;
            ask_n[f.sector] += 1;
        }
        let asks: Vec<f64> = (0..n_sectors)
            .map(|i| if ask_n[i] > 0 { ask_sum[i] / ask_n[i] as f64 } else { 1.0 })
            .collect();
        let grid = super::Grid::new(GRID_SIZE);
        for h in 0..self.households.len() {
            if !self.is_unemployed(h) {
                continue;
            }
            let cell = self.grid_cell(&self.households[h].location);
            let block: Vec<usize> = grid.neighborhood(cell, 1).collect();
            let mut local = vec![0.0; n_sectors];
            for &c in &block {
                for (l, u) in local.iter_mut().zip(&self.unmet[c]) {
                    *l += u;
                }
            }
            let Some(sector) = firm_entry_decision(&local, self.cfg.p_open, &mut self.rng.entry) else {
                continue;
            };
            for &c in &block {
                self.unmet[c][sector] = 0.0;
            }
            self.create_firm(h, sector, local[sector] / asks[sector], &asks);
        }
    }

    fn create_firm(&mut self, owner: usize, sector: usize, seed_output: f64, asks: &[f64]) {
        let id = self.firms.len();
        let day = self.rng.schedule.gen_range(1..=self.cfg.days_per_month);
        let loc = self.households[owner].location;
        let mut f = Firm::new(id, owner, sector, loc, day, self.n_sectors());
        f.ask_price = asks[sector];
        f.reservation = asks.to_vec();
        f.seed_output = seed_output;
        f.employees.push(owner);
        f.shares_outstanding = self.cfg.listing_shares;
        f.holders.insert(owner, self.cfg.listing_shares);
        self.firms.push(f);
        let capital = (self.cfg.startup_cash * self.income_unit).min(self.households[owner].liquid().max(0.0));
        let day_end = self.cfg.days_per_month;
        self.pay(day_end, Party::Household(owner), Party::Firm(id), capital, EntryKind::StartupCapital, None);
        self.firms[id].share_price = capital / self.cfg.listing_shares;
        let w = self.wage();
        let hh = &mut self.households[owner];
        hh.employer = Some(id);
        hh.wage = w;
        hh.owns_firm = Some(id);
        hh.shares.insert(id, self.cfg.listing_shares);
    }

    /// At most one bank is founded per month, by the first household whose
    /// financial wealth reaches the threshold and who can pay it in as
    /// capital.
    fn found_bank(&mut self, day: u32) {
        let capital = self.central_bank.min_net_worth;
        for h in 0..self.households.len() {
            if self.households[h].owns_bank.is_some() {
                continue;
            }
            let wealth = self.households[h].wealth(|f| self.share_price(f));
            if !bank_founding_check(wealth, &self.central_bank, self.banks.len()) {
                if self.banks.len() >= self.central_bank.max_banks {
                    return;
                }
                continue;
            }
            if self.households[h].liquid() < capital {
                continue;
            }
            let b = self.banks.len();
            self.banks.push(Bank {
                id: b,
                owner: h,
                capital: 0.0,
                reserves: 0.0,
                deposits: 0.0,
                loans: 0.0,
                cb_borrowing: 0.0,
                profit_month: 0.0,
            });
            self.pay(day, Party::Household(h), Party::Bank(b), capital, EntryKind::BankCapital, None);
            self.households[h].owns_bank = Some(b);
            self.households[h].bank = Some(b);
            self.deposits_changed();
            self.refresh_banks();
            return;
        }
    }

    fn list_firms(&mut self) {
        let threshold = self.cfg.listing_threshold * self.income_unit;
        for f in self.firms.iter_mut().filter(|f| f.open) {
            if !f.listed && stockmarket_entry_check(f, threshold) {
                f.listed = true;
                f.share_price = f.net_worth().max(0.0) / f.shares_outstanding;
            } else if !f.listed {
                f.share_price = f.net_worth().max(0.0) / f.shares_outstanding;
            }
        }
    }

    /// Monthly batch auction: owners of listed firms offer part of their
    /// holding; households with an equity budget bid for one random listed
    /// firm each.
    fn clear_equity(&mut self, day: u32) {
        let listed: Vec<usize> = self.firms.iter().filter(|f| f.open && f.listed).map(|f| f.id).collect();
        if listed.is_empty() {
            return;
        }
        let mut orders = Vec::new();
        for &fid in &listed {
            let owner = self.firms[fid].owner;
            let held = self.firms[fid].holders.get(&owner).copied().unwrap_or(0.0);
            let qty = held * OWNER_SELL_FRACTION;
            let limit = self.limit_price(owner, fid);
            if qty > 0.0 && limit > 0.0 {
                orders.push(EquityOrder {
                    side: Side::Sell,
                    firm: fid,
                    limit_price: limit,
                    quantity: qty,
                    agent: owner,
                    arrival: orders.len() as u64,
                });
            }
        }
        for h in 0..self.households.len() {
            let budget = self.households[h].equity_budget;
            if budget <= 0.0 || self.households[h].liquid() < budget {
                continue;
            }
            let fid = listed[self.rng.equity.gen_range(0..listed.len())];
            if self.firms[fid].owner == h {
                continue;
            }
            let limit = self.limit_price(h, fid);
            if limit <= 0.0 {
                continue;
            }
            orders.push(EquityOrder {
                side: Side::Buy,
                firm: fid,
                limit_price: limit,
                quantity: budget / limit,
                agent: h,
                arrival: orders.len() as u64,
            });
        }
        let result = clearing_house(&orders, self.cfg.equity_epsilon);
        for t in &result.trades {
            let buyer = orders[t.buy_order].agent;
            let seller = orders[t.sell_order].agent;
            let fid = t.firm;
            self.pay(day, Party::Household(buyer), Party::Household(seller), t.price * t.quantity, EntryKind::EquityTrade, None);
            for (agent, delta) in [(seller, -t.quantity), (buyer, t.quantity)] {
                let held = self.households[agent].shares.entry(fid).or_insert(0.0);
                *held += delta;
                let now = *held;
                if now <= 1e-12 {
                    self.households[agent].shares.remove(&fid);
                    self.firms[fid].holders.remove(&agent);
                } else {
                    self.firms[fid].holders.insert(agent, now);
                }
            }
        }
        for (o, limit) in orders.iter().zip(&result.updated_limits) {
            self.households[o.agent].equity_reservation.insert(o.firm, *limit);
        }
        for (&fid, &p) in &result.quoted {
            self.firms[fid].share_price = p;
        }
    }

    fn limit_price(&self, h: usize, fid: usize) -> f64 {
        self.households[h]
            .equity_reservation
            .get(&fid)
            .copied()
            .unwrap_or(self.firms[fid].share_price)
    }

    /// Splits each household's monthly surplus between deposits and the
    /// equity budget; a deficit is drawn from deposits.
    fn rebalance_portfolios(&mut self) {
        let n_banks = self.banks.len();
        for hh in &mut self.households {
            let surplus = hh.income_month - hh.spent_month;
            let (deposit, equity) = portfolio_split(surplus, self.cfg.deposit_fraction);
            hh.equity_budget = equity;
            if n_banks == 0 {
                continue;
            }
            if hh.bank.is_none() {
                hh.bank = Some(hh.id % n_banks);
            }
            if deposit > 0.0 {
                let moved = deposit.min(hh.cash.max(0.0));
                hh.cash -= moved;
                hh.deposits += moved;
            } else {
                let moved = (-deposit).min(hh.deposits.max(0.0));
                hh.deposits -= moved;
                hh.cash += moved;
            }
        }
        self.deposits_changed();
    }
}

fn push_capped(v: &mut std::collections::VecDeque<f64>, x: f64) {
    v.push_back(x);
    while v.len() > HISTORY_MONTHS {
        v.pop_front();
    }
}
