//! Simulation parameters.
//!
//! Monetary thresholds are given in multiples of the mean monthly net
//! household income implied by the SAM, so one configuration works for any
//! table without rescaling.

use serde::{Deserialize, Serialize};

use crate::error::SimError;

macro_rules! sim_config {
    ($( $(#[doc = $doc:literal])* $name:ident : $ty:ty = $default:expr ),* $(,)?) => {
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct SimConfig {
            $( $(#[doc = $doc])* pub $name: $ty, )*
        }

        impl Default for SimConfig {
            fn default() -> Self {
                SimConfig { $( $name: $default, )* }
            }
        }

        impl SimConfig {
            /// Sets one parameter from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), SimError> {
                match key {
                    $( stringify!($name) => {
                        self.$name = value.trim().parse::<$ty>().map_err(|_| {
                            SimError::Config(format!("{key}: cannot parse {value:?}"))
                        })?;
                    } )*
                    _ => return Err(SimError::Config(format!("unknown parameter {key:?}"))),
                }
                Ok(())
            }

            /// `(name, current value, description)` for every parameter.
            pub fn entries(&self) -> Vec<(&'static str, String, &'static str)> {
                vec![ $( (stringify!($name), self.$name.to_string(), concat!($($doc),*).trim()), )* ]
            }
        }
    };
}

sim_config! {
    /// Number of simulated households (active individuals).
    n_sim_agents: usize = 2000,
    /// Days per month; households and firms act on one fixed day each.
    days_per_month: u32 = 30,
    /// Months of forced SAM consumption before the budget factor is locked.
    deployment_months: u32 = 360,
    /// Total months simulated by a full run.
    total_months: u32 = 480,
    /// Buffer-stock sensitivity of consumption to excess wealth.
    kappa: f64 = 0.05,
    /// Target wealth buffer in months of income.
    phi: f64 = 3.0,
    /// Trailing months averaged into household income.
    income_window: usize = 12,
    /// Relative price step after each goods-market attempt.
    epsilon: f64 = 0.01,
    /// Relative price step for equity reservation prices.
    equity_epsilon: f64 = 0.01,
    /// Logit price sensitivity for seller choice.
    gamma: f64 = 10.0,
    /// Monthly probability that a household facing local shortages opens a firm.
    p_open: f64 = 0.003,
    /// Consecutive loss months before a firm with negative net worth closes.
    loss_months: usize = 6,
    /// Fraction of positive monthly profit paid as dividends.
    dividend_fraction: f64 = 0.8,
    /// Months of costs a firm keeps as liquidity; the excess is paid out.
    liquidity_months: f64 = 2.0,
    /// Capital adequacy requirement: bank equity over loans.
    car: f64 = 0.08,
    /// Reserve requirement ratio: reserves over deposits.
    rrr: f64 = 0.02,
    /// Central bank policy rate, per month.
    r0: f64 = 0.002,
    /// Risk spread per unit of default probability, per month.
    spread: f64 = 0.01,
    /// Loan term in months (equal principal amortization).
    loan_term_months: u32 = 12,
    /// Minimum founder net worth for a bank, in months of mean household income.
    bank_min_net_worth: f64 = 60.0,
    /// Maximum number of commercial banks.
    max_banks: usize = 4,
    /// Central bank lends to firms while no commercial bank exists.
    cb_lending: bool = true,
    /// Firm net worth needed to list shares, in months of mean household income.
    listing_threshold: f64 = 100.0,
    /// Shares issued to the owner at listing.
    listing_shares: f64 = 1000.0,
    /// Fraction of household surplus kept as bank deposits.
    deposit_fraction: f64 = 0.8,
    /// Months of sales averaged for production planning.
    demand_window: usize = 12,
    /// Inventory held above expected monthly demand, as a fraction.
    stock_buffer: f64 = 0.5,
    /// Neighborhood radius in the unit square (torus metric).
    radius: f64 = 0.1,
    /// Radius doublings when no seller or worker is found.
    radius_doublings: u32 = 2,
    /// Seller attempts per shopping round.
    max_trials: u32 = 5,
    /// Cash a founder moves into a new firm, in months of mean household income.
    startup_cash: f64 = 6.0,
    /// Initial household cash, in months of mean household income.
    initial_cash_months: f64 = 3.0,
    /// Per-month clamp on budget factor adjustments during deployment.
    deploy_damping: f64 = 0.1,
    /// Master seed for all random streams.
    seed: u64 = 7,
}

impl SimConfig {
    /// Parses a flat `key = value` document; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), SimError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SimError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v, _)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::Config(msg.to_string()));
        if self.n_sim_agents == 0 {
            return bad("n_sim_agents must be positive");
        }
        if self.days_per_month == 0 {
            return bad("days_per_month must be positive");
        }
        if self.deployment_months > self.total_months {
            return bad("deployment_months exceeds total_months");
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return bad("kappa must lie in (0, 1]");
        }
        if self.phi <= 0.0 {
            return bad("phi must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.1)
            || !(self.equity_epsilon > 0.0 && self.equity_epsilon < 0.1)
        {
            return bad("price steps must lie in (0, 0.1)");
        }
        if self.gamma < 0.0 {
            return bad("gamma must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.p_open)
            || !(0.0..=1.0).contains(&self.dividend_fraction)
            || !(0.0..=1.0).contains(&self.deposit_fraction)
        {
            return bad("probabilities and fractions must lie in [0, 1]");
        }
        if self.income_window == 0 || self.demand_window == 0 || self.loan_term_months == 0 {
            return bad("windows and loan term must be at least 1");
        }
        if self.radius <= 0.0 || self.max_trials == 0 {
            return bad("radius and max_trials must be positive");
        }
        Ok(())
    }
}
