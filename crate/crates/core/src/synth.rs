//! Random balanced SAMs with the same account layout as the reference table:
//! producers, GFCF, external sector, labor, capital, four taxes, government
//! and households. The last producer is non-market and sells to government.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::sam::{AccountRole, SamTable, Units};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub n_producers: usize,
    pub seed: u64,
    /// When false the external account has no flows at all.
    pub external: bool,
    /// Approximate total producer output, in table units.
    pub total_output: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            n_producers: 12,
            seed: 1,
            external: true,
            total_output: 2_400_000.0,
        }
    }
}

const ATTEMPTS: usize = 200;

/// Builds a balanced table. Cells are whole units so every total is exact.
pub fn synthetic_sam(opts: &SynthOptions) -> SamTable {
    assert!(opts.n_producers >= 2, "need at least one market and one non-market producer");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..ATTEMPTS {
        if let Some(sam) = attempt(opts, &mut rng) {
            return sam;
        }
    }
    panic!("no balanced table found after {ATTEMPTS} attempts");
}

fn attempt(opts: &SynthOptions, rng: &mut ChaCha8Rng) -> Option<SamTable> {
    let n = opts.n_producers;
    let nm = n - 1;
    let mut names: Vec<String> = (0..nm).map(|i| format!("P{:02}_Sector{:02}", i + 1, i + 1)).collect();
    names.push(format!("N{n:02}_NonMarket"));
    for tail in [
        "GFCF",
        "External",
        "Labor",
        "Surplus",
        "SocialSecurity",
        "TaxProduction",
        "TaxProducts",
        "IncomeTax",
        "Government",
        "Households",
    ] {
        let prefix = match tail {
            "GFCF" => 'F',
            "External" => 'X',
            "Labor" => 'L',
            "Surplus" => 'K',
            "Government" => 'G',
            "Households" => 'H',
            _ => 'T',
        };
        names.push(format!("{prefix}{:02}_{tail}", names.len() + 1));
    }
    let (f, x, l, k, t11, t12, t13, t14, g, h) =
        (n, n + 1, n + 2, n + 3, n + 4, n + 5, n + 6, n + 7, n + 8, n + 9);
    let na = n + 10;
    let mut m = vec![vec![0.0f64; na]; na];

    // Input structure: share of output spent on intermediates and its
    // composition by supplying sector (non-market sells no intermediates).
    let ic_share: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..0.5)).collect();
    let mut comp = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut w: Vec<f64> = (0..nm)
            .map(|i| {
                let r: f64 = rng.gen();
                r * r + if i == j { 1.0 } else { 0.0 }
            })
            .collect();
        w.push(0.0);
        let s: f64 = w.iter().sum();
        for i in 0..n {
            comp[i][j] = w[i] / s;
        }
    }
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let base = opts.total_output / n as f64;
            if i == nm {
                0.07 * opts.total_output
            } else {
                base * rng.gen_range(0.3f64..2.0)
            }
        })
        .collect();
    // Raise small sectors until intermediate sales leave room for final demand.
    for _ in 0..100 {
        for i in 0..nm {
            let ic: f64 = (0..n).map(|j| comp[i][j] * ic_share[j] * out[j]).sum();
            out[i] = out[i].max(ic / 0.6);
        }
    }

    let round = |v: f64| v.round();
    for j in 0..n {
        let xj = round(out[j]);
        let mut used = 0.0;
        for i in 0..n {
            let v = round(comp[i][j] * ic_share[j] * xj);
            m[i][j] = v;
            used += v;
        }
        let imports = if opts.external { rng.gen_range(0.03..0.2) } else { 0.0 };
        // Wages plus payroll tax must leave at least 5% surplus.
        let ic = used / xj;
        let wage_cap = ((0.95 - ic - imports - 0.015) / 1.3).min(0.4);
        let wages = rng.gen_range(0.15..wage_cap);
        for (row, share) in [
            (x, imports),
            (l, wages),
            (t11, 0.3 * wages),
            (t12, 0.005),
            (t13, 0.01),
        ] {
            let v = round(share * xj);
            m[row][j] = v;
            used += v;
        }
        let surplus = xj - used;
        if surplus < 0.03 * xj {
            return None;
        }
        m[k][j] = surplus;
    }

    // Final demand per producer: row total minus intermediate sales.
    for i in 0..n {
        let total: f64 = (0..na).map(|r| m[r][i]).sum();
        let fd = total - (0..n).map(|j| m[i][j]).sum::<f64>();
        if fd < 0.2 * total {
            return None;
        }
        if i == nm {
            m[i][h] = round(0.02 * fd);
            m[i][g] = fd - m[i][h];
            continue;
        }
        let gf = round(rng.gen_range(0.05..0.2) * fd);
        let gg = if rng.gen_bool(0.5) { round(rng.gen_range(0.0..0.08) * fd) } else { 0.0 };
        let gx = if opts.external { round(rng.gen_range(0.0..0.12) * fd) } else { 0.0 };
        m[i][f] = gf;
        m[i][g] = gg;
        m[i][x] = gx;
        m[i][h] = fd - gf - gg - gx;
    }

    let col_purchases = |m: &Vec<Vec<f64>>, c: usize| (0..n).map(|i| m[i][c]).sum::<f64>();
    m[t13][f] = round(0.07 * col_purchases(&m, f));
    m[t13][g] = round(0.02 * col_purchases(&m, g));
    m[t13][h] = round(0.08 * col_purchases(&m, h));
    let labor: f64 = (0..n).map(|j| m[l][j]).sum();
    let surplus: f64 = (0..n).map(|j| m[k][j]).sum();
    m[t11][h] = round(0.05 * labor);
    m[t14][h] = round(0.12 * (labor + surplus));
    m[h][l] = labor;
    m[h][k] = surplus;
    for t in [t11, t12, t13, t14] {
        m[g][t] = (0..na).map(|c| m[t][c]).sum();
    }

    if opts.external {
        let imports: f64 = (0..n).map(|j| m[x][j]).sum();
        let exports = col_purchases(&m, x);
        let gap = imports - exports;
        if gap <= 0.0 {
            return None;
        }
        m[h][x] = round(0.1 * gap);
        m[f][x] = gap - m[h][x];
    }

    let g_income: f64 = (0..na).map(|c| m[g][c]).sum();
    m[f][g] = round(0.04 * g_income);
    let g_spent: f64 = (0..na).map(|r| m[r][g]).sum();
    if g_income - g_spent < 0.0 {
        return None;
    }
    m[h][g] = g_income - g_spent;

    let h_income: f64 = (0..na).map(|c| m[h][c]).sum();
    let h_spent: f64 = (0..na).map(|r| m[r][h]).sum();
    if h_income - h_spent < 0.02 * h_income {
        return None;
    }
    m[f][h] = h_income - h_spent;

    let row_sums: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..na).map(|c| (0..na).map(|r| m[r][c]).sum()).collect();
    if row_sums.iter().zip(&col_sums).any(|(a, b)| a != b) {
        return None;
    }
    let roles = names
        .iter()
        .map(|a| AccountRole::from_name(a).expect("known prefix"))
        .collect();
    Some(SamTable {
        name: format!("SYNTH{n}_{}", opts.seed),
        region: "SYNTHETIC".into(),
        year: 2008,
        population: 4_000_000,
        active_count: 2_000_000,
        init_unemp_pct: 12.0,
        n_producers: n,
        n_accounts: na,
        units: Units {
            scale: 1_000_000.0,
            label: "euros".into(),
        },
        accounts: names,
        roles,
        flows: m,
        row_sums,
        col_sums,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Calibration;
    use proptest::prelude::*;

    #[test]
    fn twelve_producers_parse_and_validate() {
        let sam = synthetic_sam(&SynthOptions::default());
        assert_eq!(sam.producers().len(), 12);
        let back = SamTable::parse(&sam.to_text()).unwrap();
        assert_eq!(back, sam);
        assert!(back.validate_balance().passed);
    }

    #[test]
    fn closed_economy_has_empty_external_account() {
        let sam = synthetic_sam(&SynthOptions {
            external: false,
            ..SynthOptions::default()
        });
        let x = sam.key_accounts().unwrap().external;
        assert!(sam.flows[x].iter().all(|&v| v == 0.0));
        assert!(sam.flows.iter().all(|r| r[x] == 0.0));
        assert!(sam.validate_balance().passed);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn random_tables_balance(seed in 0u64..10_000, n in 2usize..16, external in any::<bool>()) {
            let sam = synthetic_sam(&SynthOptions { n_producers: n, seed, external, ..SynthOptions::default() });
            prop_assert!(sam.validate_balance().passed);
            let back = SamTable::parse(&sam.to_text()).unwrap();
            prop_assert_eq!(&back, &sam);
            let cal = Calibration::new(&sam, 2000).unwrap();
            for j in 0..cal.coefficients.n_sectors() {
                prop_assert!((cal.coefficients.column_sum(j) - 1.0).abs() < 1e-9);
            }
        }
    }
}
