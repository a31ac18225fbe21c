//! Calibration targets derived from a balanced SAM: monthly flows, technical
//! coefficients, GFCF composition, agent scaling and flat tax rates.

use serde::{Deserialize, Serialize};

use crate::error::SamError;
use crate::sam::{AccountRole, KeyAccounts, SamTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyTargets {
    /// `flows / 12`, same shape as the SAM.
    pub monthly: Vec<Vec<f64>>,
    /// Per buyer column, the share of each row among the producer and GFCF
    /// rows of that column. All-zero when the column buys none of them.
    pub consumption_shares: Vec<Vec<f64>>,
}

pub fn monthly_targets(sam: &SamTable) -> MonthlyTargets {
    let n = sam.n_accounts;
    let monthly = sam
        .flows
        .iter()
        .map(|row| row.iter().map(|v| v / 12.0).collect())
        .collect();
    let goods_rows: Vec<usize> = (0..n)
        .filter(|&i| matches!(sam.roles[i], AccountRole::Producer | AccountRole::Gfcf))
        .collect();
    let consumption_shares = (0..n)
        .map(|col| {
            let total: f64 = goods_rows.iter().map(|&i| sam.flows[i][col]).sum();
            let mut shares = vec![0.0; n];
            if total > 0.0 {
                for &i in &goods_rows {
                    shares[i] = sam.flows[i][col] / total;
                }
            }
            shares
        })
        .collect();
    MonthlyTargets {
        monthly,
        consumption_shares,
    }
}

/// Input structure of each producing sector per unit of output value.
///
/// Vectors are indexed by producer position (`0..producers.len()`), not by
/// SAM account index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnicalCoefficients {
    pub producers: Vec<usize>,
    /// `ic_share[i][j]`: input from sector `i` per unit of sector `j` output.
    pub ic_share: Vec<Vec<f64>>,
    pub import_share: Vec<f64>,
    pub labor_share: Vec<f64>,
    pub surplus_share: Vec<f64>,
    pub tax_accounts: Vec<usize>,
    /// `tax_shares[t][j]`, one row per tax account. May be negative.
    pub tax_shares: Vec<Vec<f64>>,
    /// Rows of a producer column that fit none of the categories above.
    pub other_share: Vec<f64>,
}

impl TechnicalCoefficients {
    pub fn n_sectors(&self) -> usize {
        self.producers.len()
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        let ic: f64 = self.ic_share.iter().map(|r| r[j]).sum();
        let tax: f64 = self.tax_shares.iter().map(|r| r[j]).sum();
        ic + self.import_share[j]
            + self.labor_share[j]
            + self.surplus_share[j]
            + tax
            + self.other_share[j]
    }

    /// Unit cost of output at unit input prices, excluding operating surplus.
    pub fn unit_cost(&self, j: usize) -> f64 {
        1.0 - self.surplus_share[j] - self.other_share[j]
    }

    pub fn position_of(&self, account: usize) -> Option<usize> {
        self.producers.iter().position(|&p| p == account)
    }
}

pub fn technical_coefficients(sam: &SamTable) -> Result<TechnicalCoefficients, SamError> {
    let keys = sam.key_accounts()?;
    let producers = sam.producers();
    let taxes = sam.taxes();
    let np = producers.len();
    let mut ic_share = vec![vec![0.0; np]; np];
    let mut import_share = vec![0.0; np];
    let mut labor_share = vec![0.0; np];
    let mut surplus_share = vec![0.0; np];
    let mut tax_shares = vec![vec![0.0; np]; taxes.len()];
    let mut other_share = vec![0.0; np];
    for (jp, &j) in producers.iter().enumerate() {
        let total = sam.col_sums[j];
        if total <= 0.0 {
            return Err(SamError::ZeroColumn(sam.accounts[j].clone()));
        }
        for i in 0..sam.n_accounts {
            let share = sam.flows[i][j] / total;
            if share == 0.0 {
                continue;
            }
            if let Some(ip) = producers.iter().position(|&p| p == i) {
                ic_share[ip][jp] = share;
            } else if let Some(tp) = taxes.iter().position(|&t| t == i) {
                tax_shares[tp][jp] = share;
            } else if i == keys.external {
                import_share[jp] = share;
            } else if i == keys.labor {
                labor_share[jp] = share;
            } else if i == keys.capital {
                surplus_share[jp] = share;
            } else {
                other_share[jp] += share;
            }
        }
    }
    Ok(TechnicalCoefficients {
        producers,
        ic_share,
        import_share,
        labor_share,
        surplus_share,
        tax_accounts: taxes,
        tax_shares,
        other_share,
    })
}

/// Composition of one unit of GFCF spending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfcfWeights {
    /// Indexed by producer position.
    pub producer: Vec<f64>,
    /// Indexed like `TechnicalCoefficients::tax_accounts`.
    pub tax: Vec<f64>,
    pub other: f64,
}

impl GfcfWeights {
    pub fn total(&self) -> f64 {
        self.producer.iter().sum::<f64>() + self.tax.iter().sum::<f64>() + self.other
    }

    pub fn goods_total(&self) -> f64 {
        self.producer.iter().sum()
    }
}

pub fn gfcf_weights(sam: &SamTable) -> Result<GfcfWeights, SamError> {
    let keys = sam.key_accounts()?;
    let f = keys.gfcf;
    let total = sam.col_sums[f];
    if total <= 0.0 {
        return Err(SamError::ZeroGfcf);
    }
    let producers = sam.producers();
    let taxes = sam.taxes();
    let producer = producers.iter().map(|&i| sam.flows[i][f] / total).collect();
    let tax = taxes.iter().map(|&i| sam.flows[i][f] / total).collect();
    let other = (0..sam.n_accounts)
        .filter(|i| !producers.contains(i) && !taxes.contains(i))
        .map(|i| sam.flows[i][f] / total)
        .sum();
    Ok(GfcfWeights {
        producer,
        tax,
        other,
    })
}

/// Mapping between the simulated population and the real economy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalePlan {
    pub n_sim_agents: usize,
    /// Real active persons represented by one simulated household.
    pub agent_scale: f64,
    /// Simulated employees at the SAM's unemployment rate.
    pub employed: f64,
    /// Economy-wide monthly wage per simulated employee, in simulation money.
    pub monthly_wage: f64,
}

impl ScalePlan {
    /// Converts an annual SAM flow into a monthly simulation amount.
    pub fn monthly(&self, annual: f64) -> f64 {
        annual / 12.0 / self.agent_scale
    }

    /// Converts a simulated monthly amount back to SAM units per month.
    pub fn to_real(&self, simulated: f64) -> f64 {
        simulated * self.agent_scale
    }
}

pub fn scale_factors(sam: &SamTable, n_sim_agents: i64) -> Result<ScalePlan, SamError> {
    if n_sim_agents <= 0 {
        return Err(SamError::AgentCount(n_sim_agents));
    }
    let keys = sam.key_accounts()?;
    let n = n_sim_agents as usize;
    let agent_scale = sam.active_count as f64 / n as f64;
    let employed = n as f64 * (1.0 - sam.init_unemp_pct / 100.0);
    let wage_bill = sam.row_sums[keys.labor] / 12.0 / agent_scale;
    let monthly_wage = if employed > 0.0 {
        wage_bill / employed
    } else {
        0.0
    };
    Ok(ScalePlan {
        n_sim_agents: n,
        agent_scale,
        employed,
        monthly_wage,
    })
}

/// A flat rate levied by one tax account.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaxRate {
    pub account: usize,
    pub rate: f64,
}

/// Monthly purchasing plan of a final buyer (households, government or the
/// external sector), in simulation money at unit prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalBuyerPlan {
    pub account: usize,
    /// Direct purchases per producer position.
    pub goods: Vec<f64>,
    /// Purchases of the GFCF account.
    pub gfcf: f64,
    /// Purchase taxes as a fraction of goods + GFCF spending.
    pub purchase_taxes: Vec<TaxRate>,
    /// Transfer paid to households.
    pub household_transfer: f64,
}

impl FinalBuyerPlan {
    pub fn consumption(&self) -> f64 {
        self.goods.iter().sum::<f64>() + self.gfcf
    }

    pub fn purchase_tax_rate(&self) -> f64 {
        self.purchase_taxes.iter().map(|t| t.rate).sum()
    }

    /// Share of each producer position and of GFCF in total consumption.
    pub fn shares(&self) -> (Vec<f64>, f64) {
        let total = self.consumption();
        if total <= 0.0 {
            return (vec![0.0; self.goods.len()], 0.0);
        }
        (
            self.goods.iter().map(|g| g / total).collect(),
            self.gfcf / total,
        )
    }
}

/// Household direct taxes, calibrated as flat rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdTaxes {
    /// Levied on gross wages (employee social contributions).
    pub payroll: Vec<TaxRate>,
    /// Levied on wages plus distributed operating surplus.
    pub income: Vec<TaxRate>,
}

impl HouseholdTaxes {
    pub fn payroll_rate(&self) -> f64 {
        self.payroll.iter().map(|t| t.rate).sum()
    }
    pub fn income_rate(&self) -> f64 {
        self.income.iter().map(|t| t.rate).sum()
    }
}

/// Classifies the tax cells of the household column. A tax row that also
/// taxes final purchases elsewhere (GFCF, exports, government) is a purchase
/// tax; one that taxes producer columns is a payroll tax; the rest are
/// income taxes.
fn household_tax_kinds(sam: &SamTable, keys: &KeyAccounts) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let h = keys.household;
    let producers = sam.producers();
    let (mut purchase, mut payroll, mut income) = (Vec::new(), Vec::new(), Vec::new());
    for t in sam.taxes() {
        if sam.flows[t][h] == 0.0 {
            continue;
        }
        let on_final = [keys.gfcf, keys.external, keys.government]
            .iter()
            .any(|&c| sam.flows[t][c] != 0.0);
        let on_producers = producers.iter().any(|&j| sam.flows[t][j] != 0.0);
        if on_final {
            purchase.push(t);
        } else if on_producers {
            payroll.push(t);
        } else {
            income.push(t);
        }
    }
    (purchase, payroll, income)
}

/// Everything the engine needs from the SAM, in simulation units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub keys: KeyAccounts,
    pub targets: MonthlyTargets,
    pub coefficients: TechnicalCoefficients,
    pub gfcf: GfcfWeights,
    pub scale: ScalePlan,
    pub households: FinalBuyerPlan,
    pub government: FinalBuyerPlan,
    pub external: FinalBuyerPlan,
    pub household_taxes: HouseholdTaxes,
    /// Monthly SAM values divided by the agent scale.
    pub scaled_monthly: Vec<Vec<f64>>,
}

impl Calibration {
    pub fn new(sam: &SamTable, n_sim_agents: usize) -> Result<Self, SamError> {
        let keys = sam.key_accounts()?;
        let targets = monthly_targets(sam);
        let coefficients = technical_coefficients(sam)?;
        let gfcf = gfcf_weights(sam)?;
        let scale = scale_factors(sam, n_sim_agents as i64)?;
        let scaled_monthly: Vec<Vec<f64>> = targets
            .monthly
            .iter()
            .map(|r| r.iter().map(|v| v / scale.agent_scale).collect())
            .collect();

        let (purchase_taxes, payroll, income) = household_tax_kinds(sam, &keys);
        let plan = |col: usize, taxes: &[usize]| -> FinalBuyerPlan {
            let goods: Vec<f64> = coefficients
                .producers
                .iter()
                .map(|&i| scaled_monthly[i][col])
                .collect();
            let gfcf_spend = if col == keys.gfcf {
                0.0
            } else {
                scaled_monthly[keys.gfcf][col]
            };
            let base = goods.iter().sum::<f64>() + gfcf_spend;
            let purchase_taxes = taxes
                .iter()
                .filter(|&&t| scaled_monthly[t][col] != 0.0 && base > 0.0)
                .map(|&t| TaxRate {
                    account: t,
                    rate: scaled_monthly[t][col] / base,
                })
                .collect();
            let household_transfer = if col == keys.household {
                0.0
            } else {
                scaled_monthly[keys.household][col]
            };
            FinalBuyerPlan {
                account: col,
                goods,
                gfcf: gfcf_spend,
                purchase_taxes,
                household_transfer,
            }
        };
        let all_taxes = sam.taxes();
        let households = plan(keys.household, &purchase_taxes);
        let government = plan(keys.government, &all_taxes);
        let external = plan(keys.external, &all_taxes);

        let h = keys.household;
        let wages = sam.flows[h][keys.labor];
        let capital = sam.flows[h][keys.capital];
        let rate = |t: usize, base: f64| TaxRate {
            account: t,
            rate: if base > 0.0 { sam.flows[t][h] / base } else { 0.0 },
        };
        let household_taxes = HouseholdTaxes {
            payroll: payroll.iter().map(|&t| rate(t, wages)).collect(),
            income: income.iter().map(|&t| rate(t, wages + capital)).collect(),
        };

        Ok(Calibration {
            keys,
            targets,
            coefficients,
            gfcf,
            scale,
            households,
            government,
            external,
            household_taxes,
            scaled_monthly,
        })
    }

    pub fn n_sectors(&self) -> usize {
        self.coefficients.n_sectors()
    }

    /// Labor productivity of a sector: output units per employee-month.
    pub fn productivity(&self, sector: usize) -> f64 {
        let ls = self.coefficients.labor_share[sector];
        if ls > 0.0 {
            self.scale.monthly_wage / ls
        } else {
            f64::INFINITY
        }
    }

    /// Monthly subsidy budget paid by the government to households.
    pub fn subsidy_budget(&self) -> f64 {
        self.government.household_transfer
    }

    /// Mean net monthly household income at SAM activity.
    pub fn mean_household_income(&self) -> f64 {
        let h = self.keys.household;
        let gross: f64 = (0..self.scaled_monthly.len())
            .map(|i| self.scaled_monthly[h][i])
            .sum();
        let direct: f64 = self
            .household_taxes
            .payroll
            .iter()
            .chain(&self.household_taxes.income)
            .map(|t| self.scaled_monthly[t.account][h])
            .sum();
        (gross - direct) / self.scale.n_sim_agents as f64
    }
}
