//! Social Accounting Matrix files: parsing, serialization and balance checks.
//!
//! Columns are buyers (expenditures), rows are sellers (receipts). Account
//! roles are read from the first letter of each account name.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::SamError;

/// Relative tolerance used for every row/column total comparison.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

/// Economic role of a SAM account, encoded by the name prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AccountRole {
    /// `P` (market) or `N` (non-market) producing sector.
    Producer,
    /// `F`: gross fixed capital formation.
    Gfcf,
    /// `X`: rest of the world.
    External,
    /// `L`: compensation of employees.
    Labor,
    /// `K`: gross operating surplus.
    Capital,
    /// `T`: a tax account.
    Tax,
    /// `G`: government.
    Government,
    /// `H`: households.
    Household,
}

impl AccountRole {
    pub fn from_name(name: &str) -> Option<Self> {
        match name.chars().next()? {
            'P' | 'N' => Some(Self::Producer),
            'F' => Some(Self::Gfcf),
            'X' => Some(Self::External),
            'L' => Some(Self::Labor),
            'K' => Some(Self::Capital),
            'T' => Some(Self::Tax),
            'G' => Some(Self::Government),
            'H' => Some(Self::Household),
            _ => None,
        }
    }
}

/// Monetary unit of the table, e.g. `1000000 euros`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub scale: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamTable {
    pub name: String,
    /// Free-text label preceding the `key: value` pairs (e.g. `SPAIN`).
    pub region: String,
    pub year: i64,
    pub population: u64,
    pub active_count: u64,
    pub init_unemp_pct: f64,
    /// Size of the leading producer block declared in the header.
    pub n_producers: usize,
    pub n_accounts: usize,
    pub units: Units,
    pub accounts: Vec<String>,
    pub roles: Vec<AccountRole>,
    /// Row-major `n_accounts × n_accounts` annual flows.
    pub flows: Vec<Vec<f64>>,
    pub row_sums: Vec<f64>,
    pub col_sums: Vec<f64>,
}

/// Indices of the single-instance accounts every simulated economy needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyAccounts {
    pub gfcf: usize,
    pub external: usize,
    pub labor: usize,
    pub capital: usize,
    pub government: usize,
    pub household: usize,
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn split_cells(line: &str) -> Vec<&str> {
    line.split(['\t', ','])
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .collect()
}

fn parse_number(cell: &str, line: usize) -> Result<f64, SamError> {
    let v: f64 = cell.parse().map_err(|_| SamError::NonNumeric {
        line,
        cell: cell.to_string(),
    })?;
    if !v.is_finite() {
        return Err(SamError::NonNumeric {
            line,
            cell: cell.to_string(),
        });
    }
    Ok(v)
}

struct Header {
    region: String,
    year: i64,
    population: u64,
    active: u64,
    init_unemp: f64,
    n_producers: usize,
    n_accounts: usize,
    units: Units,
}

fn parse_metadata(line: &str, lineno: usize) -> Result<Header, SamError> {
    let err = |msg: String| SamError::Header { line: lineno, msg };
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let mut region = Vec::new();
    let mut i = 0;
    while i < tokens.len() && !tokens[i].ends_with(':') {
        region.push(tokens[i]);
        i += 1;
    }
    let mut year = None;
    let mut population = None;
    let mut active = None;
    let mut init_unemp = None;
    let mut n_producers = None;
    let mut n_accounts = None;
    let mut units = None;
    while i < tokens.len() {
        let key = tokens[i]
            .strip_suffix(':')
            .ok_or_else(|| err(format!("expected `key:` but found {:?}", tokens[i])))?;
        let value = tokens
            .get(i + 1)
            .ok_or_else(|| err(format!("missing value for {key}")))?;
        i += 2;
        let int = |v: &str| -> Result<u64, SamError> {
            v.parse::<u64>()
                .map_err(|_| err(format!("{key}: expected a non-negative integer, found {v:?}")))
        };
        match key {
            "Year" => {
                year = Some(
                    value
                        .parse::<i64>()
                        .map_err(|_| err(format!("Year: bad value {value:?}")))?,
                )
            }
            "Population" => population = Some(int(value)?),
            "Active" => active = Some(int(value)?),
            "InitUnemp" => {
                init_unemp = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| err(format!("InitUnemp: bad value {value:?}")))?,
                )
            }
            "Nproducers" => n_producers = Some(int(value)? as usize),
            "Naccounts" => n_accounts = Some(int(value)? as usize),
            "Units" => {
                let scale = value
                    .parse::<f64>()
                    .map_err(|_| err(format!("Units: bad scale {value:?}")))?;
                let label = tokens
                    .get(i)
                    .filter(|t| !t.ends_with(':'))
                    .ok_or_else(|| err("Units: missing currency label".into()))?;
                i += 1;
                units = Some(Units {
                    scale,
                    label: label.to_string(),
                });
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    let missing = |k: &str| err(format!("missing key {k}"));
    let init_unemp = init_unemp.ok_or_else(|| missing("InitUnemp"))?;
    if !(0.0..100.0).contains(&init_unemp) {
        return Err(err(format!("InitUnemp {init_unemp} outside [0, 100)")));
    }
    Ok(Header {
        region: region.join(" "),
        year: year.ok_or_else(|| missing("Year"))?,
        population: population.ok_or_else(|| missing("Population"))?,
        active: active.ok_or_else(|| missing("Active"))?,
        init_unemp,
        n_producers: n_producers.ok_or_else(|| missing("Nproducers"))?,
        n_accounts: n_accounts.ok_or_else(|| missing("Naccounts"))?,
        units: units.ok_or_else(|| missing("Units"))?,
    })
}

impl SamTable {
    /// Parses the text format: a `SAM_table {` title line, a metadata line,
    /// the account header, one line per account with its `rowSUM`, and a
    /// closing `colSUM` line.
    pub fn parse(text: &str) -> Result<Self, SamError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty());

        let (ln, title) = lines.next().ok_or(SamError::Header {
            line: 1,
            msg: "empty file".into(),
        })?;
        let name = title
            .trim()
            .strip_prefix("SAM_table {")
            .ok_or_else(|| SamError::Header {
                line: ln,
                msg: "expected `SAM_table {` title".into(),
            })?
            .trim()
            .to_string();

        let (ln, meta) = lines.next().ok_or(SamError::Header {
            line: 2,
            msg: "missing metadata line".into(),
        })?;
        let header = parse_metadata(meta, ln)?;
        let n = header.n_accounts;
        if n == 0 {
            return Err(SamError::Header {
                line: ln,
                msg: "Naccounts must be positive".into(),
            });
        }
        if header.n_producers > n {
            return Err(SamError::Header {
                line: ln,
                msg: format!("Nproducers {} exceeds Naccounts {n}", header.n_producers),
            });
        }

        let (ln, names_line) = lines.next().ok_or(SamError::Header {
            line: 3,
            msg: "missing account header row".into(),
        })?;
        let accounts: Vec<String> = split_cells(names_line)
            .into_iter()
            .map(str::to_string)
            .collect();
        if accounts.len() != n {
            return Err(SamError::Dimension {
                line: ln,
                expected: n,
                found: accounts.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for a in &accounts {
            if !seen.insert(a.as_str()) {
                return Err(SamError::DuplicateAccount(a.clone()));
            }
        }
        let roles = accounts
            .iter()
            .map(|a| {
                AccountRole::from_name(a).ok_or_else(|| SamError::Role {
                    account: a.clone(),
                    msg: "unknown role prefix (expected one of P N F X L K T G H)".into(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut flows = Vec::with_capacity(n);
        let mut row_sums = Vec::with_capacity(n);
        for (i, account) in accounts.iter().enumerate() {
            let (ln, line) = lines.next().ok_or(SamError::Dimension {
                line: 0,
                expected: n,
                found: i,
            })?;
            let cells = split_cells(line);
            if cells.len() != n + 2 {
                return Err(SamError::Dimension {
                    line: ln,
                    expected: n + 2,
                    found: cells.len(),
                });
            }
            if cells[0] != account {
                return Err(SamError::Header {
                    line: ln,
                    msg: format!("row label {:?} does not match account {account:?}", cells[0]),
                });
            }
            let row = cells[1..=n]
                .iter()
                .map(|c| parse_number(c, ln))
                .collect::<Result<Vec<_>, _>>()?;
            let declared = parse_number(cells[n + 1], ln)?;
            if roles[i] != AccountRole::Tax {
                if let Some(&v) = row.iter().find(|v| **v < 0.0) {
                    return Err(SamError::NegativeCell {
                        account: account.clone(),
                        value: v,
                    });
                }
            }
            let computed: f64 = row.iter().sum();
            if rel_diff(computed, declared) > BALANCE_TOLERANCE {
                return Err(SamError::RowSum {
                    account: account.clone(),
                    declared,
                    computed,
                });
            }
            flows.push(row);
            row_sums.push(declared);
        }

        let (ln, line) = lines.next().ok_or(SamError::Header {
            line: 0,
            msg: "missing colSUM line".into(),
        })?;
        let cells = split_cells(line);
        if cells.first() != Some(&"colSUM") {
            return Err(SamError::Header {
                line: ln,
                msg: "expected `colSUM` line".into(),
            });
        }
        if cells.len() != n + 1 {
            return Err(SamError::Dimension {
                line: ln,
                expected: n + 1,
                found: cells.len(),
            });
        }
        let col_sums = cells[1..]
            .iter()
            .map(|c| parse_number(c, ln))
            .collect::<Result<Vec<_>, _>>()?;
        for j in 0..n {
            let computed: f64 = flows.iter().map(|r| r[j]).sum();
            if rel_diff(computed, col_sums[j]) > BALANCE_TOLERANCE {
                return Err(SamError::ColSum {
                    account: accounts[j].clone(),
                    declared: col_sums[j],
                    computed,
                });
            }
        }
        if let Some((ln, _)) = lines.next() {
            return Err(SamError::Header {
                line: ln,
                msg: "unexpected content after colSUM line".into(),
            });
        }

        let sam = SamTable {
            name,
            region: header.region,
            year: header.year,
            population: header.population,
            active_count: header.active,
            init_unemp_pct: header.init_unemp,
            n_producers: header.n_producers,
            n_accounts: n,
            units: header.units,
            accounts,
            roles,
            flows,
            row_sums,
            col_sums,
        };
        sam.check_roles()?;
        Ok(sam)
    }

    fn check_roles(&self) -> Result<(), SamError> {
        for (i, role) in self.roles.iter().enumerate() {
            if *role == AccountRole::Producer && i >= self.n_producers {
                return Err(SamError::Role {
                    account: self.accounts[i].clone(),
                    msg: format!(
                        "producing sector outside the leading producer block of {}",
                        self.n_producers
                    ),
                });
            }
        }
        Ok(())
    }

    /// Serializes back into the text format. Numbers use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "SAM_table {{ {}", self.name);
        let mut meta = Vec::new();
        if !self.region.is_empty() {
            meta.push(self.region.clone());
        }
        meta.push(format!("Year: {}", self.year));
        meta.push(format!("Population: {}", self.population));
        meta.push(format!("Active: {}", self.active_count));
        meta.push(format!("InitUnemp: {}", self.init_unemp_pct));
        meta.push(format!("Nproducers: {}", self.n_producers));
        meta.push(format!("Naccounts: {}", self.n_accounts));
        meta.push(format!("Units: {} {}", self.units.scale, self.units.label));
        let _ = writeln!(out, "{}", meta.join("\t"));
        let _ = writeln!(out, "\t{}", self.accounts.join("\t"));
        for (i, account) in self.accounts.iter().enumerate() {
            out.push_str(account);
            for v in &self.flows[i] {
                let _ = write!(out, "\t{v}");
            }
            let _ = writeln!(out, "\t{}", self.row_sums[i]);
        }
        out.push_str("colSUM");
        for v in &self.col_sums {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
        out
    }

    pub fn index_of(&self, account: &str) -> Option<usize> {
        self.accounts.iter().position(|a| a == account)
    }

    pub fn cell(&self, row: &str, col: &str) -> Option<f64> {
        Some(self.flows[self.index_of(row)?][self.index_of(col)?])
    }

    /// Indices of the producing sectors, in account order.
    pub fn producers(&self) -> Vec<usize> {
        self.indices_with(AccountRole::Producer)
    }

    pub fn taxes(&self) -> Vec<usize> {
        self.indices_with(AccountRole::Tax)
    }

    pub fn indices_with(&self, role: AccountRole) -> Vec<usize> {
        (0..self.n_accounts)
            .filter(|&i| self.roles[i] == role)
            .collect()
    }

    /// Locates the single GFCF, external, labor, capital, government and
    /// household accounts. Each must appear exactly once.
    pub fn key_accounts(&self) -> Result<KeyAccounts, SamError> {
        let one = |role: AccountRole, what: &str| -> Result<usize, SamError> {
            match self.indices_with(role).as_slice() {
                [i] => Ok(*i),
                [] => Err(SamError::Role {
                    account: what.into(),
                    msg: "account missing".into(),
                }),
                many => Err(SamError::Role {
                    account: self.accounts[many[1]].clone(),
                    msg: format!("more than one {what} account"),
                }),
            }
        };
        Ok(KeyAccounts {
            gfcf: one(AccountRole::Gfcf, "GFCF")?,
            external: one(AccountRole::External, "external")?,
            labor: one(AccountRole::Labor, "labor")?,
            capital: one(AccountRole::Capital, "capital")?,
            government: one(AccountRole::Government, "government")?,
            household: one(AccountRole::Household, "household")?,
        })
    }

    /// Sum of the producing sectors' column totals.
    pub fn total_output(&self) -> f64 {
        self.producers().iter().map(|&j| self.col_sums[j]).sum()
    }

    /// Per-account comparison of declared row and column totals.
    pub fn validate_balance(&self) -> BalanceReport {
        let accounts: Vec<AccountBalance> = (0..self.n_accounts)
            .map(|i| AccountBalance {
                account: self.accounts[i].clone(),
                row_total: self.row_sums[i],
                col_total: self.col_sums[i],
                rel_imbalance: rel_diff(self.row_sums[i], self.col_sums[i]),
            })
            .collect();
        let max_rel_imbalance = accounts
            .iter()
            .map(|a| a.rel_imbalance)
            .fold(0.0, f64::max);
        BalanceReport {
            passed: max_rel_imbalance <= BALANCE_TOLERANCE,
            max_rel_imbalance,
            accounts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccountBalance {
    pub account: String,
    pub row_total: f64,
    pub col_total: f64,
    pub rel_imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub accounts: Vec<AccountBalance>,
    pub max_rel_imbalance: f64,
    pub passed: bool,
}

impl std::fmt::Display for BalanceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<24}{:>16}{:>16}{:>14}", "account", "row", "column", "rel.diff")?;
        for a in &self.accounts {
            writeln!(
                f,
                "{:<24}{:>16}{:>16}{:>14.3e}",
                a.account, a.row_total, a.col_total, a.rel_imbalance
            )?;
        }
        write!(
            f,
            "max relative imbalance {:.3e}: {}",
            self.max_rel_imbalance,
            if self.passed { "BALANCED" } else { "UNBALANCED" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPAIN: &str = include_str!("../fixtures/spain6.sam");

    #[test]
    fn parses_reference_table() {
        let sam = SamTable::parse(SPAIN).unwrap();
        assert_eq!(sam.name, "MCAESP08");
        assert_eq!(sam.region, "SPAIN");
        assert_eq!(sam.n_accounts, 16);
        assert_eq!(sam.n_producers, 8);
        assert_eq!(sam.active_count, 2_000_000);
        assert_eq!(sam.population, 4_000_000);
        assert_eq!(sam.init_unemp_pct, 12.0);
        assert_eq!(sam.units.scale, 1_000_000.0);
        assert_eq!(sam.units.label, "euros");
        assert_eq!(sam.cell("P03_Indust", "H16_Households"), Some(114842.0));
        assert_eq!(sam.col_sums[0], 48021.0);
        assert_eq!(sam.producers(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(sam.taxes(), vec![10, 11, 12, 13]);
    }

    #[test]
    fn zero_table_is_valid() {
        let text = "SAM_table { Z\nYear: 1 Population: 10 Active: 10 InitUnemp: 0 Nproducers: 1 Naccounts: 2 Units: 1 eur\n\tP01_A\tH02_H\nP01_A\t0\t0\t0\nH02_H\t0\t0\t0\ncolSUM\t0\t0\n";
        let sam = SamTable::parse(text).unwrap();
        assert_eq!(sam.n_accounts, 2);
        let report = sam.validate_balance();
        assert!(report.passed);
        assert_eq!(report.max_rel_imbalance, 0.0);
    }

    #[test]
    fn comma_separated_cells_accepted() {
        let text = "SAM_table { Z\nYear: 1 Population: 10 Active: 10 InitUnemp: 0 Nproducers: 1 Naccounts: 2 Units: 1 eur\n,P01_A,,H02_H\nP01_A,0,5,5\nH02_H,5,0,5\ncolSUM,5,5\n";
        let sam = SamTable::parse(text).unwrap();
        assert_eq!(sam.flows[0][1], 5.0);
    }

    #[test]
    fn perturbed_cell_names_row() {
        let bad = SPAIN.replacen("P01_AgroPesc\t1701", "P01_AgroPesc\t1702", 1);
        match SamTable::parse(&bad) {
            Err(SamError::RowSum { account, .. }) => assert_eq!(account, "P01_AgroPesc"),
            other => panic!("expected row sum error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors() {
        let no_title = SPAIN.replacen("SAM_table {", "SAM {", 1);
        assert!(matches!(
            SamTable::parse(&no_title),
            Err(SamError::Header { line: 1, .. })
        ));
        let non_num = SPAIN.replacen("\t1701\t", "\t17x1\t", 1);
        assert!(matches!(
            SamTable::parse(&non_num),
            Err(SamError::NonNumeric { .. })
        ));
        let short = SPAIN.replacen("\t1701\t", "\t", 1);
        assert!(matches!(
            SamTable::parse(&short),
            Err(SamError::Dimension { .. })
        ));
        let dup = SPAIN.replacen("\tP02_EnerPetro\t", "\tP01_AgroPesc\t", 1);
        assert!(matches!(
            SamTable::parse(&dup),
            Err(SamError::DuplicateAccount(_))
        ));
        let bad_key = SPAIN.replacen("Year:", "Yr:", 1);
        assert!(matches!(
            SamTable::parse(&bad_key),
            Err(SamError::Header { line: 2, .. })
        ));
    }

    #[test]
    fn negative_cells_only_in_tax_rows() {
        let text = "SAM_table { Z\nYear: 1 Population: 10 Active: 10 InitUnemp: 0 Nproducers: 1 Naccounts: 2 Units: 1 eur\n\tP01_A\tH02_H\nP01_A\t-1\t1\t0\nH02_H\t1\t-1\t0\ncolSUM\t0\t0\n";
        assert!(matches!(
            SamTable::parse(text),
            Err(SamError::NegativeCell { .. })
        ));
        let sam = SamTable::parse(SPAIN).unwrap();
        assert_eq!(sam.cell("T12_TaxProduction", "P01_AgroPesc"), Some(-244.0));
    }

    #[test]
    fn balance_report() {
        let mut sam = SamTable::parse(SPAIN).unwrap();
        let report = sam.validate_balance();
        assert!(report.passed);
        let h = sam.index_of("H16_Households").unwrap();
        assert_eq!(report.accounts[h].row_total, 983902.0);
        assert_eq!(report.accounts[h].col_total, 983902.0);
        sam.col_sums[h] = 983903.0;
        let report = sam.validate_balance();
        assert!(!report.passed);
        assert!((report.max_rel_imbalance - 1.0 / 983903.0).abs() < 1e-15);
        assert!((report.max_rel_imbalance - 1.0e-6).abs() < 2e-8);
    }

    #[test]
    fn text_round_trip() {
        let sam = SamTable::parse(SPAIN).unwrap();
        let again = SamTable::parse(&sam.to_text()).unwrap();
        assert_eq!(sam, again);
    }
}
