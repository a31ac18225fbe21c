//! Activity within a month: production, household shopping and the spread
//! purchases of the government and the external sector.

use crate::accounting::{EntryKind, Party};
use crate::agents::{input_requirements, plan_production, Lender, Loan, Point, ProductionMode};
use crate::markets::{
    credit_request, labor_match, loan_rate, shopping_round, CreditTerms, Fill, SellerQuote,
};

use super::World;

/// Multiplier on the per-round trial limit for government and external buyers.
const FINAL_BUYER_TRIALS: u32 = 10;

impl World {
    pub(super) fn run_day(&mut self, day: u32) {
        let producing: Vec<usize> = self
            .firms
            .iter()
            .filter(|f| f.open && f.production_day == day)
            .map(|f| f.id)
            .collect();
        for f in producing {
            self.produce(f, day);
        }
        let shoppers: Vec<usize> = self
            .households
            .iter()
            .filter(|h| h.buy_day == day)
            .map(|h| h.id)
            .collect();
        for h in shoppers {
            self.household_shopping(h, day);
        }
        self.final_buyer_day(true, day);
        self.final_buyer_day(false, day);
    }

    fn credit_terms(&self) -> CreditTerms {
        CreditTerms {
            car: self.cfg.car,
            rrr: self.cfg.rrr,
            r0: self.cfg.r0,
            spread: self.cfg.spread,
        }
    }

    /// Firms of `sector` with stock near `at`. The radius doubles up to
    /// `radius_doublings` times while nobody is found.
    fn local_sellers(&self, sector: usize, at: &Point, exclude: Option<usize>) -> Vec<SellerQuote> {
        let grid = &self.index.as_ref().expect("index built").firms[sector];
        let mut radius = self.cfg.radius;
        let mut ids = Vec::new();
        for _ in 0..=self.cfg.radius_doublings {
            grid.within(at, radius, &mut ids);
            let out: Vec<SellerQuote> = ids
                .iter()
                .map(|&id| &self.firms[id])
                .filter(|f| f.goods > 0.0 && Some(f.id) != exclude)
                .map(|f| SellerQuote {
                    id: f.id,
                    price: f.ask_price,
                    stock: f.goods,
                })
                .collect();
            if !out.is_empty() {
                return out;
            }
            radius *= 2.0;
        }
        Vec::new()
    }

    fn all_sellers(&self, sector: usize) -> Vec<SellerQuote> {
        self.index.as_ref().expect("index built").sector_firms[sector]
            .iter()
            .map(|&id| &self.firms[id])
            .filter(|f| f.goods > 0.0)
            .map(|f| SellerQuote {
                id: f.id,
                price: f.ask_price,
                stock: f.goods,
            })
            .collect()
    }

    /// Delivers the fills of a shopping round and books the payments. A
    /// fraction `gfcf_fraction` of each purchase is booked in the GFCF column.
    /// Returns `(units, direct value, GFCF value)`.
    #[allow(clippy::too_many_arguments)]
    fn settle_fills(
        &mut self,
        day: u32,
        buyer: Party,
        column: usize,
        gfcf_fraction: f64,
        kind: EntryKind,
        quotes: &[SellerQuote],
        fills: &[Fill],
    ) -> (f64, f64, f64) {
        let gfcf = self.cal.keys.gfcf;
        let (mut units, mut direct, mut capital) = (0.0, 0.0, 0.0);
        for &(k, qty, price) in fills {
            let id = quotes[k].id;
            let value = qty * price;
            let row = {
                let f = &mut self.firms[id];
                let avg = if f.goods > 0.0 { f.goods_value / f.goods } else { 0.0 };
                f.goods -= qty;
                if f.goods <= 1e-12 {
                    f.goods = 0.0;
                    f.goods_value = 0.0;
                } else {
                    f.goods_value = (f.goods_value - avg * qty).max(0.0);
                }
                f.sold_month += qty;
                f.revenue_month += value;
                self.cal.coefficients.producers[f.sector]
            };
            let g = value * gfcf_fraction;
            self.pay(day, buyer, Party::Firm(id), value - g, kind, Some((row, column)));
            self.pay(day, buyer, Party::Firm(id), g, EntryKind::GfcfGoods, Some((row, gfcf)));
            units += qty;
            direct += value - g;
            capital += g;
        }
        for q in quotes {
            self.firms[q.id].ask_price = q.price;
        }
        (units, direct, capital)
    }

    fn household_shopping(&mut self, h: usize, day: u32) {
        let budget = self.households[h].budget;
        if budget <= 0.0 {
            return;
        }
        let (goods_share, gfcf_share) = self.cal.households.shares();
        let hcol = self.cal.keys.household;
        let loc = self.households[h].location;
        let cell = self.grid_cell(&loc);
        let (eps, gamma, trials) = (self.cfg.epsilon, self.cfg.gamma, self.cfg.max_trials);
        let (mut direct, mut capital) = (0.0, 0.0);
        for i in 0..self.n_sectors() {
            let g = budget * goods_share[i];
            let f = budget * gfcf_share * self.cal.gfcf.producer[i];
            let b = g + f;
            if b <= 0.0 {
                continue;
            }
            let mut quotes = self.local_sellers(i, &loc, None);
            if quotes.is_empty() {
                self.unmet[cell][i] += b;
                continue;
            }
            let mut res = self.households[h].reservation[i];
            let out = shopping_round(&mut res, b, &mut quotes, eps, gamma, trials, &mut self.rng.logit);
            self.households[h].reservation[i] = res;
            let (_, d, c) = self.settle_fills(
                day,
                Party::Household(h),
                hcol,
                f / b,
                EntryKind::Goods,
                &quotes,
                &out.fills,
            );
            direct += d;
            capital += c;
            self.unmet[cell][i] += out.unmet;
        }
        let total = self.gfcf_taxes(day, Party::Household(h), hcol, capital);
        let mut spent = direct + total;
        for t in self.cal.households.purchase_taxes.clone() {
            let tax = t.rate * (direct + total);
            self.pay(day, Party::Household(h), Party::Government, tax, EntryKind::Tax, Some((t.account, hcol)));
            spent += tax;
        }
        let hh = &mut self.households[h];
        hh.housing += total;
        hh.spent_month += spent;
    }

    /// Books the GFCF account for `goods` bought on its behalf by `column`:
    /// the tax share of GFCF spending and the pass-through from the buyer.
    /// Returns the total GFCF spending.
    pub(super) fn gfcf_taxes(&mut self, day: u32, buyer: Party, column: usize, goods: f64) -> f64 {
        let gw = &self.cal.gfcf;
        if goods <= 0.0 || gw.goods_total() <= 0.0 {
            return 0.0;
        }
        let total = goods / gw.goods_total() * (gw.goods_total() + gw.tax.iter().sum::<f64>());
        let per_unit = goods / gw.goods_total();
        let f = self.cal.keys.gfcf;
        let taxes: Vec<(usize, f64)> = self
            .cal
            .coefficients
            .tax_accounts
            .iter()
            .zip(&gw.tax)
            .map(|(&t, &w)| (t, w * per_unit))
            .collect();
        for (t, amount) in taxes {
            self.pay(day, buyer, Party::Government, amount, EntryKind::Tax, Some((t, f)));
        }
        self.book(day, f, column, total, EntryKind::Gfcf);
        total
    }

    pub(super) fn grid_cell(&self, p: &Point) -> usize {
        let n = super::GRID_SIZE;
        let cx = ((p.x * n as f64) as usize).min(n - 1);
        let cy = ((p.y * n as f64) as usize).min(n - 1);
        cy * n + cx
    }

    fn final_buyer_day(&mut self, government: bool, day: u32) {
        let days_left = (self.cfg.days_per_month - day + 1) as f64;
        // One aggregate buyer stands for many purchasers.
        let (eps, gamma, trials) = (self.cfg.epsilon, self.cfg.gamma, self.cfg.max_trials * FINAL_BUYER_TRIALS);
        for i in 0..self.n_sectors() {
            let b = if government { &self.gov_buyer } else { &self.ext_buyer };
            let remaining = b.budget[i] - b.spent[i];
            if remaining <= 0.0 {
                continue;
            }
            let (frac, mut res, party, col) = (b.gfcf_fraction[i], b.reservation[i], b.party, b.account);
            let mut quotes = self.all_sellers(i);
            if quotes.is_empty() {
                continue;
            }
            let chunk = remaining / days_left;
            let out = shopping_round(&mut res, chunk, &mut quotes, eps, gamma, trials, &mut self.rng.logit);
            let (_, d, c) = self.settle_fills(day, party, col, frac, EntryKind::Goods, &quotes, &out.fills);
            let b = if government { &mut self.gov_buyer } else { &mut self.ext_buyer };
            b.spent[i] += d + c;
            b.reservation[i] = res;
        }
    }

    fn produce(&mut self, fid: usize, day: u32) {
        let w = self.wage();
        let (sector, price, plan, loc) = {
            let f = &self.firms[fid];
            let plan = plan_production(
                &f.demand_history,
                f.goods,
                self.cfg.demand_window,
                self.cfg.stock_buffer,
                f.seed_output,
            );
            (f.sector, f.ask_price, plan, f.location)
        };
        let req = input_requirements(sector, plan, price, &self.cal.coefficients, w, ProductionMode::Leontief)
            .expect("firm sector is a producer position");
        let mut headcount = req.headcount.max(1);
        let need = self.production_cost(fid, headcount);
        let balance = self.firms[fid].balance;
        if need > balance && self.firms[fid].net_worth() >= 0.0 {
            self.request_credit(fid, need - balance.max(0.0), day);
        }
        let balance = self.firms[fid].balance.max(0.0);
        if need > balance && headcount > 1 {
            headcount = ((headcount as f64 * balance / need).floor() as usize).max(1);
        }
        self.adjust_workforce(fid, headcount);
        let n = self.firms[fid].employees.len();
        let q = self.capacity(sector, price, n, plan).min(plan);

        let col = self.cal.coefficients.producers[sector];
        let x = self.cal.keys.external;
        let cell = self.grid_cell(&loc);
        let (eps, gamma, trials) = (self.cfg.epsilon, self.cfg.gamma, self.cfg.max_trials);
        let open_economy = self.cal.coefficients.import_share.iter().any(|&v| v > 0.0);
        for i in 0..self.n_sectors() {
            let a = self.cal.coefficients.ic_share[i][sector];
            if a <= 0.0 {
                continue;
            }
            let need_units = a * q - self.firms[fid].inputs[i];
            if need_units <= 1e-15 {
                continue;
            }
            let mut res = self.firms[fid].reservation[i];
            let (mut units, mut value) = (0.0, 0.0);
            for global in [false, true] {
                let short = need_units - units;
                if short <= 1e-15 {
                    break;
                }
                let mut quotes = if global {
                    let mut q = self.all_sellers(i);
                    q.retain(|s| s.id != fid);
                    q
                } else {
                    self.local_sellers(i, &loc, Some(fid))
                };
                if quotes.is_empty() {
                    continue;
                }
                let budget = short * res;
                let out = shopping_round(&mut res, budget, &mut quotes, eps, gamma, trials, &mut self.rng.logit);
                let (u, d, _) = self.settle_fills(
                    day,
                    Party::Firm(fid),
                    col,
                    0.0,
                    EntryKind::Intermediate,
                    &quotes,
                    &out.fills,
                );
                units += u;
                value += d;
            }
            let short = need_units - units;
            if short > 1e-15 && !open_economy {
                // A closed economy has nowhere to import from; the gap is waived.
                self.unmet[cell][i] += short * res;
                self.firms[fid].inputs[i] += short;
            } else if short > 1e-15 {
                // Inputs nobody nearby can supply are imported.
                self.unmet[cell][i] += short * res;
                let cost = short * self.external.import_price;
                self.pay(day, Party::Firm(fid), Party::External, cost, EntryKind::Import, Some((x, col)));
                let f = &mut self.firms[fid];
                f.import_cost_month += cost;
                f.inputs[i] += short;
                f.inputs_value[i] += cost;
            }
            let f = &mut self.firms[fid];
            f.reservation[i] = res;
            f.inputs[i] += units;
            f.inputs_value[i] += value;
            f.ic_cost_month += value;
        }
        let imports = self.cal.coefficients.import_share[sector] * q * price;
        self.pay(day, Party::Firm(fid), Party::External, imports, EntryKind::Import, Some((x, col)));

        let coeffs = &self.cal.coefficients;
        let f = &mut self.firms[fid];
        f.import_cost_month += imports;
        let mut output = q;
        for i in 0..coeffs.n_sectors() {
            let a = coeffs.ic_share[i][sector];
            if a > 0.0 {
                output = output.min(f.inputs[i] / a);
            }
        }
        let mut cost = imports + n as f64 * w;
        for i in 0..coeffs.n_sectors() {
            let a = coeffs.ic_share[i][sector];
            if a <= 0.0 || f.inputs[i] <= 0.0 {
                continue;
            }
            let used = (a * output).min(f.inputs[i]);
            let value = f.inputs_value[i] * used / f.inputs[i];
            f.inputs[i] -= used;
            f.inputs_value[i] -= value;
            if f.inputs[i] <= 1e-12 {
                f.inputs[i] = 0.0;
                f.inputs_value[i] = 0.0;
            }
            cost += value;
        }
        f.goods += output;
        f.goods_value += cost;
        f.seed_output = 0.0;
    }

    /// Units `n` workers produce at `price`: labor cost equals the sector's
    /// labor share of the output value.
    fn capacity(&self, sector: usize, price: f64, n: usize, plan: f64) -> f64 {
        let ls = self.cal.coefficients.labor_share[sector];
        if ls > 0.0 && price > 0.0 {
            n as f64 * self.wage() / (ls * price)
        } else {
            plan
        }
    }

    /// Cash needed to run `headcount` workers at full capacity this month.
    fn production_cost(&self, fid: usize, headcount: usize) -> f64 {
        let f = &self.firms[fid];
        let coeffs = &self.cal.coefficients;
        let q = self.capacity(f.sector, f.ask_price, headcount, 0.0);
        let value = q * f.ask_price;
        let mut cost = headcount as f64 * self.wage() + coeffs.import_share[f.sector] * value;
        for i in 0..coeffs.n_sectors() {
            let need = coeffs.ic_share[i][f.sector] * q - f.inputs[i];
            if need > 0.0 {
                cost += need * f.reservation[i];
            }
        }
        let taxes: f64 = coeffs.tax_shares.iter().map(|r| r[f.sector]).sum();
        cost + taxes.max(0.0) * value
    }

    /// Recomputes deposits and reserves of every bank from customer balances.
    pub(super) fn refresh_banks(&mut self) {
        let n = self.banks.len();
        if n == 0 {
            return;
        }
        if self.hh_deposits.as_ref().map(Vec::len) != Some(n) {
            let mut d = vec![0.0; n];
            for h in &self.households {
                if let Some(b) = h.bank {
                    d[b] += h.deposits.max(0.0);
                }
            }
            self.hh_deposits = Some(d);
        }
        let mut deposits = self.hh_deposits.clone().expect("just filled");
        for f in self.firms.iter().filter(|f| f.open) {
            if let Some(b) = f.bank {
                deposits[b] += f.balance.max(0.0);
            }
        }
        for (bank, d) in self.banks.iter_mut().zip(deposits) {
            bank.deposits = d;
            let reserves = d + bank.capital - bank.loans;
            bank.reserves = reserves.max(0.0);
            bank.cb_borrowing = (-reserves).max(0.0);
        }
    }

    fn request_credit(&mut self, fid: usize, amount: f64, day: u32) {
        if amount <= 0.0 {
            return;
        }
        let terms = self.credit_terms();
        let (debt, nw) = (self.firms[fid].debt(), self.firms[fid].net_worth());
        if self.banks.is_empty() {
            if self.cfg.cb_lending {
                let rate = loan_rate(debt + amount, nw, &terms);
                self.grant_loan(fid, Lender::CentralBank, amount, rate, day);
            }
            return;
        }
        self.refresh_banks();
        let mut order: Vec<usize> = (0..self.banks.len()).collect();
        if let Some(b) = self.firms[fid].bank {
            order.retain(|&x| x != b);
            order.insert(0, b);
        }
        for b in order {
            let d = credit_request(Some(&self.banks[b]), debt, nw, amount, &terms);
            if d.granted {
                self.firms[fid].bank = Some(b);
                self.grant_loan(fid, Lender::Bank(b), d.amount, d.monthly_rate, day);
                return;
            }
        }
    }

    fn grant_loan(&mut self, fid: usize, lender: Lender, amount: f64, rate: f64, day: u32) {
        let term = self.cfg.loan_term_months.max(1) as f64;
        self.pay(day, Self::lender_party(lender), Party::Firm(fid), amount, crate::accounting::EntryKind::LoanGrant, None);
        self.firms[fid].loans.push(Loan {
            lender,
            principal: amount,
            monthly_rate: rate,
            installment: amount / term,
        });
    }

    fn adjust_workforce(&mut self, fid: usize, target: usize) {
        let current = self.firms[fid].employees.len();
        if current > target {
            let owner = self.firms[fid].owner;
            while self.firms[fid].employees.len() > target.max(1) {
                let e = *self.firms[fid].employees.last().expect("non-empty");
                if e == owner {
                    break;
                }
                self.firms[fid].employees.pop();
                self.households[e].employer = None;
                self.households[e].wage = 0.0;
            }
            return;
        }
        if current == target {
            return;
        }
        let vacancies = target - current;
        let loc = self.firms[fid].location;
        let mut radius = self.cfg.radius;
        let mut pool = Vec::new();
        for _ in 0..=self.cfg.radius_doublings {
            let grid = &self.index.as_ref().expect("index built").households;
            grid.within(&loc, radius, &mut pool);
            pool.retain(|&h| self.is_unemployed(h));
            if pool.len() >= vacancies {
                break;
            }
            radius *= 2.0;
        }
        let w = self.wage();
        for h in labor_match(vacancies, &pool, &mut self.rng.labor) {
            self.households[h].employer = Some(fid);
            self.households[h].wage = w;
            self.firms[fid].employees.push(h);
        }
    }
}
