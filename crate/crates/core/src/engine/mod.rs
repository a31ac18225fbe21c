//! Calendar-driven simulation loop, world initialization, the deployment
//! controller and snapshot persistence.
//!
//! A month has `days_per_month` days. Every firm produces on its production
//! day and every household shops on its buy day; the government and the
//! external sector spread their purchases over the month. Wages, taxes,
//! dividends, entry and exit, banking and the equity market are settled at
//! month end.

mod daily;
mod month_end;
mod snapshot;
mod spatial;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::accounting::{AuditReport, EntryKind, Ledger, LedgerEntry, Party, TimeSeriesRow};
use crate::agents::{
    consumption_budget, Bank, CentralBank, ExternalSector, Firm, Government, Household, Lender,
    Point,
};
use crate::calibration::{Calibration, FinalBuyerPlan};
use crate::config::SimConfig;
use crate::error::SimError;
use crate::rng::RngStreams;
use crate::sam::SamTable;

pub use snapshot::{load_snapshot, save_snapshot, snapshot_from_str, snapshot_to_string, SNAPSHOT_VERSION};
pub use spatial::Grid;

/// Side length of the grid used for neighborhood queries and the entry signal.
pub const GRID_SIZE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Deploying,
    Free,
}

/// Monthly purchasing state of the government or the external sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalBuyer {
    pub account: usize,
    pub party: Party,
    /// Monthly budget per producer position (direct goods plus GFCF goods).
    pub budget: Vec<f64>,
    /// Fraction of each sector budget bought on behalf of GFCF.
    pub gfcf_fraction: Vec<f64>,
    pub spent: Vec<f64>,
    pub reservation: Vec<f64>,
}

impl FinalBuyer {
    fn new(plan: &FinalBuyerPlan, party: Party, cal: &Calibration) -> Self {
        let n = plan.goods.len();
        let gw = &cal.gfcf;
        let mut budget = vec![0.0; n];
        let mut gfcf_fraction = vec![0.0; n];
        for i in 0..n {
            let g = plan.gfcf * gw.producer[i];
            budget[i] = plan.goods[i] + g;
            if budget[i] > 0.0 {
                gfcf_fraction[i] = g / budget[i];
            }
        }
        FinalBuyer {
            account: plan.account,
            party,
            budget,
            gfcf_fraction,
            spent: vec![0.0; n],
            reservation: vec![1.0; n],
        }
    }
}

/// Spatial lookups rebuilt from the world on demand.
#[derive(Debug, Clone, Default)]
pub(crate) struct Index {
    households: Grid,
    /// Open firms per producer position.
    firms: Vec<Grid>,
    /// Open firm ids per producer position.
    sector_firms: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct World {
    pub sam: SamTable,
    pub cal: Calibration,
    pub cfg: SimConfig,
    /// Months completed.
    pub month: u32,
    pub households: Vec<Household>,
    /// All firms ever opened; closed ones keep their slot with `open == false`.
    pub firms: Vec<Firm>,
    pub banks: Vec<Bank>,
    pub government: Government,
    pub central_bank: CentralBank,
    pub external: ExternalSector,
    pub gov_buyer: FinalBuyer,
    pub ext_buyer: FinalBuyer,
    pub rng: RngStreams,
    pub phase: Phase,
    /// Household budget factor.
    pub beta: f64,
    /// Household goods and GFCF budgets this month before the liquidity cap.
    pub planned: f64,
    pub ledger: Ledger,
    pub series: Vec<TimeSeriesRow>,
    pub audits: Vec<AuditReport>,
    /// Mean monthly net household income at SAM activity; the unit of the
    /// monetary thresholds in the configuration.
    pub income_unit: f64,
    /// Unmet demand this month per grid cell and producer position.
    pub unmet: Vec<Vec<f64>>,
    #[serde(skip)]
    index: Option<Index>,
    /// Household deposits per bank; `None` after any household deposit or
    /// bank choice changes.
    #[serde(skip)]
    hh_deposits: Option<Vec<f64>>,
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        serde_json::to_string(self).ok() == serde_json::to_string(other).ok()
    }
}

impl World {
    /// Builds the initial world: households only, no firms or banks.
    pub fn new(sam: SamTable, cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let cal = Calibration::new(&sam, cfg.n_sim_agents)?;
        let n_sectors = cal.n_sectors();
        if n_sectors == 0 {
            return Err(SimError::Config("SAM has no producing sectors".into()));
        }
        let mut rng = RngStreams::new(cfg.seed);
        let income_unit = cal.mean_household_income();
        let days = cfg.days_per_month;
        let households = (0..cfg.n_sim_agents)
            .map(|id| {
                let loc = Point::random(&mut rng.placement);
                let day = rng.schedule.gen_range(1..=days);
                Household::new(id, loc, day, cfg.initial_cash_months * income_unit, n_sectors)
            })
            .collect();
        let gov_buyer = FinalBuyer::new(&cal.government, Party::Government, &cal);
        let ext_buyer = FinalBuyer::new(&cal.external, Party::External, &cal);
        let n_accounts = sam.n_accounts;
        let phase = if cfg.deployment_months == 0 { Phase::Free } else { Phase::Deploying };
        let mut w = World {
            central_bank: CentralBank {
                policy_rate: cfg.r0,
                min_net_worth: cfg.bank_min_net_worth * income_unit,
                max_banks: cfg.max_banks,
                firm_loans: 0.0,
                bank_advances: 0.0,
            },
            external: ExternalSector {
                reservation: vec![1.0; n_sectors],
                import_price: 1.0,
                cumulative_net: 0.0,
            },
            government: Government {
                balance: 0.0,
                receipts_month: Default::default(),
                undisbursed_subsidies: 0.0,
            },
            sam,
            cal,
            cfg,
            month: 0,
            households,
            firms: Vec::new(),
            banks: Vec::new(),
            gov_buyer,
            ext_buyer,
            rng,
            phase,
            beta: 1.0,
            planned: 0.0,
            ledger: Ledger::new(n_accounts),
            series: Vec::new(),
            audits: Vec::new(),
            income_unit,
            unmet: vec![vec![0.0; n_sectors]; GRID_SIZE * GRID_SIZE],
            index: None,
            hh_deposits: None,
        };
        let row = w.timeseries_row();
        w.series.push(row);
        Ok(w)
    }

    pub fn n_sectors(&self) -> usize {
        self.cal.n_sectors()
    }

    pub fn wage(&self) -> f64 {
        self.cal.scale.monthly_wage
    }

    /// Money held by households, firms and the government.
    pub fn money_stock(&self) -> f64 {
        self.households.iter().map(|h| h.cash + h.deposits).sum::<f64>()
            + self.firms.iter().map(|f| f.balance).sum::<f64>()
            + self.government.balance
    }

    pub fn share_price(&self, firm: usize) -> f64 {
        self.firms.get(firm).map_or(0.0, |f| f.share_price)
    }

    /// Households without a job, a firm or a bank.
    pub fn is_unemployed(&self, h: usize) -> bool {
        let hh = &self.households[h];
        hh.employer.is_none() && hh.owns_firm.is_none() && hh.owns_bank.is_none()
    }

    pub fn unemployment_pct(&self) -> f64 {
        let n = self.households.len();
        let u = (0..n).filter(|&h| self.is_unemployed(h)).count();
        100.0 * u as f64 / n as f64
    }

    pub fn employees_by_sector(&self) -> Vec<usize> {
        let mut e = vec![0; self.n_sectors()];
        for f in self.firms.iter().filter(|f| f.open) {
            e[f.sector] += f.employees.len();
        }
        e
    }

    /// Household net worth (financial wealth plus accumulated GFCF).
    pub fn household_net_worths(&self) -> Vec<f64> {
        self.households
            .iter()
            .map(|h| h.net_worth(|f| self.share_price(f)))
            .collect()
    }

    pub fn open_firms(&self) -> usize {
        self.firms.iter().filter(|f| f.open).count()
    }

    pub(crate) fn rebuild_index(&mut self) {
        let n_sectors = self.n_sectors();
        let mut households = self
            .index
            .take()
            .map(|i| i.households)
            .filter(|g| g.size() == GRID_SIZE)
            .unwrap_or_default();
        if households.size() != GRID_SIZE {
            households = Grid::new(GRID_SIZE);
            for h in &self.households {
                households.insert(h.id, &h.location);
            }
        }
        let mut firms = vec![Grid::new(GRID_SIZE); n_sectors];
        let mut sector_firms = vec![Vec::new(); n_sectors];
        for f in self.firms.iter().filter(|f| f.open) {
            firms[f.sector].insert(f.id, &f.location);
            sector_firms[f.sector].push(f.id);
        }
        self.index = Some(Index {
            households,
            firms,
            sector_firms,
        });
    }

    /// Moves money between two parties and books the entry.
    pub(crate) fn pay(
        &mut self,
        day: u32,
        from: Party,
        to: Party,
        amount: f64,
        kind: EntryKind,
        cell: Option<(usize, usize)>,
    ) {
        if amount == 0.0 || !amount.is_finite() {
            return;
        }
        self.debit(from, amount, kind);
        self.credit(to, amount, kind);
        self.ledger
            .record(LedgerEntry {
                month: 0,
                day,
                seller: cell.map(|c| c.0),
                buyer: cell.map(|c| c.1),
                amount,
                kind,
                from,
                to,
            })
            .expect("calibrated accounts are valid");
    }

    /// Books a flow between SAM accounts that moves no money.
    pub(crate) fn book(&mut self, day: u32, row: usize, col: usize, amount: f64, kind: EntryKind) {
        if amount == 0.0 {
            return;
        }
        self.ledger
            .record(LedgerEntry {
                month: 0,
                day,
                seller: Some(row),
                buyer: Some(col),
                amount,
                kind,
                from: Party::Internal,
                to: Party::Internal,
            })
            .expect("calibrated accounts are valid");
    }

    fn debit(&mut self, p: Party, a: f64, kind: EntryKind) {
        if a < 0.0 {
            return self.credit(p, -a, kind);
        }
        match p {
            Party::Household(h) => {
                let hh = &mut self.households[h];
                let from_cash = a.min(hh.cash.max(0.0));
                hh.cash -= from_cash;
                let rest = a - from_cash;
                let from_dep = rest.min(hh.deposits.max(0.0));
                if from_dep != 0.0 {
                    hh.deposits -= from_dep;
                    self.hh_deposits = None;
                }
                hh.cash -= rest - from_dep;
            }
            Party::Firm(f) => self.firms[f].balance -= a,
            Party::Bank(b) => match kind {
                EntryKind::LoanGrant => self.banks[b].loans += a,
                _ => self.banks[b].capital -= a,
            },
            Party::Government => self.government.balance -= a,
            Party::CentralBank => {
                if kind == EntryKind::LoanGrant {
                    self.central_bank.firm_loans += a;
                }
            }
            Party::External => self.external.cumulative_net += a,
            Party::Internal => {}
            Party::Shareholders(_) => unreachable!("holders are credited one by one"),
        }
    }

    fn credit(&mut self, p: Party, a: f64, kind: EntryKind) {
        if a < 0.0 {
            return self.debit(p, -a, kind);
        }
        match p {
            Party::Household(h) => self.households[h].cash += a,
            Party::Firm(f) => self.firms[f].balance += a,
            Party::Bank(b) => match kind {
                EntryKind::Repayment => self.banks[b].loans -= a,
                _ => self.banks[b].capital += a,
            },
            Party::Government => self.government.balance += a,
            Party::CentralBank => {
                if kind == EntryKind::Repayment {
                    self.central_bank.firm_loans -= a;
                }
            }
            Party::External => self.external.cumulative_net -= a,
            Party::Internal => {}
            Party::Shareholders(_) => unreachable!("holders are credited one by one"),
        }
    }

    /// Pays `payouts` from firm `fid` to its holders and books the total as
    /// a single entry.
    pub(crate) fn deposits_changed(&mut self) {
        self.hh_deposits = None;
    }

    pub(crate) fn pay_shareholders(&mut self, day: u32, fid: usize, payouts: &[(usize, f64)], cell: (usize, usize)) {
        let total: f64 = payouts.iter().map(|p| p.1).sum();
        if total == 0.0 || !total.is_finite() {
            return;
        }
        self.debit(Party::Firm(fid), total, EntryKind::Dividend);
        for &(holder, amount) in payouts {
            let hh = &mut self.households[holder];
            hh.cash += amount;
            hh.capital_month += amount;
        }
        self.ledger
            .record(LedgerEntry {
                month: 0,
                day,
                seller: Some(cell.0),
                buyer: Some(cell.1),
                amount: total,
                kind: EntryKind::Dividend,
                from: Party::Firm(fid),
                to: Party::Shareholders(fid),
            })
            .expect("calibrated accounts are valid");
    }

    pub(crate) fn lender_party(lender: Lender) -> Party {
        match lender {
            Lender::CentralBank => Party::CentralBank,
            Lender::Bank(b) => Party::Bank(b),
        }
    }

    /// Sets each household's goods and GFCF budget for the month.
    fn set_household_budgets(&mut self) {
        let (kappa, phi, beta) = (self.cfg.kappa, self.cfg.phi, self.beta);
        let tax_factor = 1.0 + self.household_tax_markup();
        let prices: Vec<f64> = self.firms.iter().map(|f| f.share_price).collect();
        let mut planned = 0.0;
        for hh in &mut self.households {
            let wealth = hh.wealth(|f| prices.get(f).copied().unwrap_or(0.0));
            let c = consumption_budget(hh.average_income(), wealth, kappa, phi, beta);
            planned += c.max(0.0);
            hh.budget = c.min(hh.liquid().max(0.0) / tax_factor);
            hh.spent_month = 0.0;
        }
        self.planned = planned;
    }

    /// Purchase taxes paid on top of each unit of household goods and GFCF
    /// spending.
    pub(crate) fn household_tax_markup(&self) -> f64 {
        self.cal.households.purchase_tax_rate()
    }

    /// Advances one month.
    pub fn step_month(&mut self) {
        if self.index.is_none() {
            self.rebuild_index();
        }
        let money_before = self.money_stock();
        self.set_household_budgets();
        for b in [&mut self.gov_buyer, &mut self.ext_buyer] {
            b.spent.iter_mut().for_each(|s| *s = 0.0);
        }
        for f in &mut self.firms {
            f.sold_month = 0.0;
            f.revenue_month = 0.0;
            f.ic_cost_month = 0.0;
            f.import_cost_month = 0.0;
            f.wage_bill_month = 0.0;
            f.tax_month = 0.0;
            f.interest_month = 0.0;
        }
        for hh in &mut self.households {
            hh.wage_month = 0.0;
            hh.capital_month = 0.0;
            hh.transfer_month = 0.0;
            hh.tax_month = 0.0;
        }
        for day in 1..=self.cfg.days_per_month {
            self.run_day(day);
        }
        self.end_of_month(money_before);
    }

    /// Runs `months` further months.
    pub fn run_months(&mut self, months: u32) {
        for _ in 0..months {
            self.step_month();
        }
    }

    /// Budget factor update during deployment. Returns the new factor. A
    /// shortfall is not corrected while planned budgets already cover the
    /// target: households are then short of cash, not of willingness.
    pub fn deployment_adjust(&mut self, realized: f64) -> f64 {
        if self.phase != Phase::Deploying {
            return self.beta;
        }
        let target = self.cal.households.consumption();
        let effective = if realized < target && self.planned >= target {
            target
        } else {
            realized
        };
        self.beta = adjusted_beta(self.beta, target, effective, self.cfg.deploy_damping);
        if self.month >= self.cfg.deployment_months {
            self.phase = Phase::Free;
        }
        self.beta
    }
}

/// `beta * clamp(target / realized, 1 - damping, 1 + damping)`; unchanged
/// when nothing was realized.
pub fn adjusted_beta(beta: f64, target: f64, realized: f64, damping: f64) -> f64 {
    if realized <= 0.0 {
        return beta;
    }
    beta * (target / realized).clamp(1.0 - damping, 1.0 + damping)
}

/// Final world and run metadata.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub world: World,
    pub manifest: crate::manifest::Manifest,
}

/// Runs `cfg.total_months` months from a fresh world.
pub fn run(sam: &SamTable, cfg: &SimConfig) -> Result<RunResult, SimError> {
    let mut world = World::new(sam.clone(), cfg.clone())?;
    world.run_months(cfg.total_months);
    let manifest = crate::manifest::Manifest::new(sam, cfg, world.ledger.hash());
    Ok(RunResult { world, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_rule() {
        assert_eq!(adjusted_beta(1.3, 100.0, 100.0, 0.1), 1.3);
        assert!((adjusted_beta(1.0, 100.0, 90.0, 0.1) - 1.1).abs() < 1e-12);
        assert!((adjusted_beta(1.0, 100.0, 95.0, 0.1) - 100.0 / 95.0).abs() < 1e-12);
        assert!((adjusted_beta(1.0, 100.0, 200.0, 0.1) - 0.9).abs() < 1e-12);
        assert_eq!(adjusted_beta(2.0, 100.0, 0.0, 0.1), 2.0);
    }
}
