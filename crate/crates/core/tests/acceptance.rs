//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails. Outputs of the main run are written under the cargo
//! target tmp directory for inspection.

mod common;

use std::panic::catch_unwind;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use samdeploy::accounting::{
    compare_sam, computed_sam, gini, sam_computed_csv, sam_pct_csv, skewness, timeseries_csv,
    wealth_hist_csv, wealth_histogram, Binning,
};
use samdeploy::agents::{consumption_budget, distribute_profits, Bank};
use samdeploy::calibration::{gfcf_weights, technical_coefficients};
use samdeploy::engine::{snapshot_from_str, snapshot_to_string};
use samdeploy::markets::{
    attempt_transaction, credit_request, logit_probabilities, select_seller_logit, CreditTerms,
    LoanReason,
};
use samdeploy::synth::{synthetic_sam, SynthOptions};
use samdeploy::{SamTable, SimConfig, World};

const SPAIN: &str = include_str!("../fixtures/spain6.sam");
const DEPLOY: u32 = 360;
const TOTAL: u32 = 480;
const SCALING_MONTHS: u32 = 120;
const TOY_MONTHS: u32 = 120;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

/// Monthly SAM-unit targets of final buyer `col`: goods plus GFCF spending.
fn final_target(sam: &SamTable, col: usize, gfcf: usize) -> f64 {
    let goods: f64 = sam.producers().iter().map(|&i| sam.flows[i][col]).sum();
    (goods + sam.flows[gfcf][col]) / 12.0
}

struct DeployCheck {
    major: usize,
    off: Vec<String>,
    labor_total: f64,
    labor_major: Vec<(String, f64)>,
    labor_minor: Vec<(String, f64)>,
}

fn check_deployment(w: &World, sam: &SamTable) -> DeployCheck {
    let c = computed_sam(&w.ledger, DEPLOY, 12, w.cal.scale.agent_scale).expect("history");
    let pct = compare_sam(&c, sam);
    let thr = 0.005 * sam.total_output();
    let mut out = DeployCheck {
        major: 0,
        off: Vec::new(),
        labor_total: 0.0,
        labor_major: Vec::new(),
        labor_minor: Vec::new(),
    };
    for (i, row) in pct.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            if sam.flows[i][j] >= thr {
                out.major += 1;
                let p = p.unwrap_or(0.0);
                if !(75.0..=125.0).contains(&p) {
                    out.off.push(format!("{}/{} {p:.1}%", sam.accounts[i], sam.accounts[j]));
                }
            }
        }
    }
    let l = w.cal.keys.labor;
    out.labor_total = 100.0 * c.flows[l].iter().sum::<f64>() / sam.row_sums[l];
    for (j, p) in pct[l].iter().enumerate() {
        if let Some(p) = p {
            let cell = (sam.accounts[j].clone(), *p);
            if sam.flows[l][j] >= thr {
                out.labor_major.push(cell);
            } else {
                out.labor_minor.push(cell);
            }
        }
    }
    out
}

fn worst_audit(w: &World) -> f64 {
    w.audits.iter().map(|a| a.relative_residual).fold(0.0, f64::max)
}

fn cells(v: &[(String, f64)]) -> String {
    v.iter()
        .map(|(a, p)| format!("{} {p:.1}", a.split('_').next().unwrap_or(a)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6
}

fn rule_suites() -> Result<(), String> {
    let terms = CreditTerms { car: 0.08, rrr: 0.02, r0: 0.002, spread: 0.01 };
    let bank = Bank {
        id: 0,
        owner: 0,
        capital: 100.0,
        reserves: 100.0,
        deposits: 1000.0,
        loans: 1000.0,
        cb_borrowing: 0.0,
        profit_month: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 1_000_000;
    let first = (0..draws)
        .filter(|_| select_seller_logit(&[1.0, 1.1], 10.0, &mut rng) == Some(0))
        .count() as f64
        / draws as f64;
    let checks: Vec<(&str, bool)> = vec![
        ("budget at target buffer", close(consumption_budget(1000.0, 3000.0, 0.1, 3.0, 1.3), 1300.0)),
        ("budget above buffer", close(consumption_budget(1000.0, 5000.0, 0.1, 3.0, 1.0), 1200.0)),
        ("budget without wealth", close(consumption_budget(1000.0, 0.0, 0.1, 3.0, 1.0), 700.0)),
        ("price rule trade", {
            let (t, b, s) = attempt_transaction(1.05, 1.00, 0.01);
            t && close(b, 1.0395) && close(s, 1.01)
        }),
        ("price rule equal prices", attempt_transaction(1.0, 1.0, 0.01).0),
        ("price rule no trade", {
            let (t, b, s) = attempt_transaction(0.95, 1.00, 0.01);
            !t && close(b, 0.9595) && close(s, 0.99)
        }),
        ("logit probability", close(logit_probabilities(&[1.0, 1.1], 10.0)[0], 0.731059)),
        ("logit draws", (first - 0.731059).abs() <= 0.01),
        ("logit uniform at gamma 0", logit_probabilities(&[1.0, 2.0], 0.0).iter().all(|p| close(*p, 0.5))),
        ("zero debt rate", {
            let d = credit_request(Some(&bank), 0.0, 1e6, 1e-6, &terms);
            d.granted && close(d.monthly_rate, terms.r0)
        }),
        ("equal debt and equity rate", {
            let d = credit_request(Some(&bank), 20.0, 50.0, 30.0, &terms);
            close(d.monthly_rate, terms.r0 + 0.5 * terms.spread)
        }),
        ("capital requirement", credit_request(Some(&bank), 0.0, 100.0, 500.0, &terms).reason == LoanReason::Car),
        ("loss absorbed", {
            let (paid, retained) = distribute_profits(-100.0, 0.5, &[(0, 1.0)]);
            paid.is_empty() && close(retained, -100.0)
        }),
        ("sole owner", {
            let (paid, retained) = distribute_profits(100.0, 0.5, &[(0, 1.0)]);
            paid.len() == 1 && close(paid[0].1, 50.0) && close(retained, 50.0)
        }),
        ("two holders", {
            let (paid, retained) = distribute_profits(100.0, 0.5, &[(0, 75.0), (1, 25.0)]);
            paid.len() == 2 && close(paid[0].1, 37.5) && close(paid[1].1, 12.5) && close(retained, 50.0)
        }),
    ];
    let bad: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad.join(", "))
    }
}

fn timed_run(sam: &SamTable, cfg: &SimConfig, months: u32) -> (World, Duration) {
    let t = Instant::now();
    let mut w = World::new(sam.clone(), cfg.clone()).expect("world");
    w.run_months(months);
    (w, t.elapsed())
}

fn write_outputs(w: &World) -> Option<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_run");
    std::fs::create_dir_all(&dir).ok()?;
    let c = computed_sam(&w.ledger, DEPLOY, 12, w.cal.scale.agent_scale).ok()?;
    let pct = compare_sam(&c, &w.sam);
    let hist = wealth_histogram(&w.household_net_worths(), 40, Binning::Linear);
    let files = [
        ("timeseries.csv", timeseries_csv(w.n_sectors(), &w.series)),
        ("sam_pct.csv", sam_pct_csv(&w.sam.accounts, &pct)),
        ("sam_computed.csv", sam_computed_csv(&w.sam.accounts, &c)),
        ("wealth_hist.csv", wealth_hist_csv(&hist)),
    ];
    for (name, text) in files {
        std::fs::write(dir.join(name), text).ok()?;
    }
    Some(dir)
}

fn main() {
    let mut r = Report { failed: 0 };

    // SAM ingestion.
    let t = Instant::now();
    let parsed = SamTable::parse(SPAIN);
    let ingest = parsed.as_ref().map_err(|e| e.to_string()).and_then(|sam| {
        let tc = technical_coefficients(sam).map_err(|e| e.to_string())?;
        let gw = gfcf_weights(sam).map_err(|e| e.to_string())?;
        let p01 = sam.index_of("P01_AgroPesc").unwrap();
        let h16 = sam.index_of("H16_Households").unwrap();
        let p05 = tc.position_of(sam.index_of("P05_ServVenta").unwrap()).unwrap();
        let p04 = tc.position_of(sam.index_of("P04_Construc").unwrap()).unwrap();
        Ok(sam.validate_balance().passed
            && sam.row_sums[p01] == 48021.0
            && sam.col_sums[p01] == 48021.0
            && sam.row_sums[h16] == 983902.0
            && sam.col_sums[h16] == 983902.0
            && close(tc.labor_share[p05], 0.196122)
            && close(gw.producer[p04], 0.552788))
    });
    let elapsed = t.elapsed();
    r.line(
        "SAM ingestion",
        matches!(ingest, Ok(true)) && elapsed < Duration::from_secs(1),
        format!("{ingest:?} in {elapsed:.2?}"),
    );
    let sam = parsed.expect("reference SAM parses");

    // Scaling first, with nothing else running.
    let scale_cfg = |n: usize| SimConfig {
        n_sim_agents: n,
        ..SimConfig::default()
    };
    let (_, t2) = timed_run(&sam, &scale_cfg(2000), SCALING_MONTHS);
    let (_, t4) = timed_run(&sam, &scale_cfg(4000), SCALING_MONTHS);
    let ratio = t4.as_secs_f64() / t2.as_secs_f64();
    r.line(
        "Scaling",
        ratio <= 2.5,
        format!("{SCALING_MONTHS} months: 2000 agents {t2:.2?}, 4000 agents {t4:.2?}, ratio {ratio:.2}"),
    );

    // Main run: deploy, snapshot, continue.
    let cfg = SimConfig::default();
    let (mut main, t_deploy) = timed_run(&sam, &cfg, DEPLOY);
    let snap = snapshot_to_string(&main).expect("snapshot");
    let dc = check_deployment(&main, &sam);
    let labor_ok = (80.0..=105.0).contains(&dc.labor_total)
        && dc.labor_major.iter().all(|(_, p)| (80.0..=105.0).contains(p));
    r.line(
        "Deployment",
        dc.off.is_empty() && labor_ok && t_deploy <= Duration::from_secs(300),
        format!(
            "{} major cells, {} outside 75-125% {:?}; L09 row {:.1}%, major L09 cells [{}], minor L09 cells [{}]; {DEPLOY} months in {t_deploy:.1?}",
            dc.major,
            dc.off.len(),
            dc.off,
            dc.labor_total,
            cells(&dc.labor_major),
            cells(&dc.labor_minor)
        ),
    );
    main.run_months(TOTAL - DEPLOY);

    let keys = main.cal.keys;
    let (tg, tx) = (
        final_target(&sam, keys.government, keys.gfcf),
        final_target(&sam, keys.external, keys.gfcf),
    );
    let band = |from: u32, to: u32| -> (f64, f64, f64, f64) {
        let rows = main.series.iter().filter(|s| s.month >= from && s.month <= to);
        let (mut g0, mut g1, mut x0, mut x1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for s in rows {
            let (g, x) = (100.0 * s.gov_cons / tg, 100.0 * s.ext_cons / tx);
            (g0, g1, x0, x1) = (g0.min(g), g1.max(g), x0.min(x), x1.max(x));
        }
        (g0, g1, x0, x1)
    };
    let in_band = |b: (f64, f64, f64, f64)| b.0 >= 95.0 && b.1 <= 105.0 && b.2 >= 95.0 && b.3 <= 105.0;

    let u: Vec<f64> = main
        .series
        .iter()
        .filter(|s| (240..=DEPLOY).contains(&s.month))
        .map(|s| s.unemployment_pct)
        .collect();
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    let sd = (u.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / u.len() as f64).sqrt();
    let start = main.series[0].unemployment_pct;
    let steady = band(240, TOTAL);
    r.line(
        "Steady state",
        start == 100.0 && sd < 3.0 && (6.0..=18.0).contains(&mean) && in_band(steady),
        format!(
            "start {start}%, months 240-{DEPLOY} mean {mean:.2}% sd {sd:.2}pp; months 240-{TOTAL} gov {:.1}-{:.1}% ext {:.1}-{:.1}%",
            steady.0, steady.1, steady.2, steady.3
        ),
    );

    let wealth: Vec<f64> = main.series.iter().map(|s| s.hh_wealth).collect();
    let trail = |m: usize| wealth[m - 11..=m].iter().sum::<f64>() / 12.0;
    let rising = (DEPLOY as usize + 1..=TOTAL as usize).filter(|&m| trail(m) > trail(m - 1)).count();
    let months = (TOTAL - DEPLOY) as usize;
    let post = band(DEPLOY + 1, TOTAL);
    r.line(
        "Post-lock",
        rising as f64 >= 0.9 * months as f64 && in_band(post),
        format!(
            "trailing-12 wealth rising in {rising}/{months} months; gov {:.1}-{:.1}% ext {:.1}-{:.1}%",
            post.0, post.1, post.2, post.3
        ),
    );

    // Determinism and snapshot continuation.
    let (fresh, _) = timed_run(&sam, &cfg, TOTAL);
    let mut restored = snapshot_from_str(&snap).expect("restore");
    restored.run_months(TOTAL - DEPLOY);
    let (h_main, h_fresh, h_rest) = (main.ledger.hash(), fresh.ledger.hash(), restored.ledger.hash());
    r.line(
        "Determinism & snapshots",
        h_main == h_fresh && h_main == h_rest,
        format!(
            "uninterrupted {}, rerun {}, snapshot@{DEPLOY}+{} {}",
            &h_main[..16],
            &h_fresh[..16],
            TOTAL - DEPLOY,
            &h_rest[..16]
        ),
    );

    // Generality.
    let synth = synthetic_sam(&SynthOptions::default());
    let (sw, _) = timed_run(&synth, &SimConfig::default(), DEPLOY);
    let sc = check_deployment(&sw, &synth);
    r.line(
        "Generality",
        synth.producers().len() == 12 && sc.off.is_empty(),
        format!(
            "{} producers, {} major cells, {} outside 75-125% {:?}; labor row {:.1}%",
            synth.producers().len(),
            sc.major,
            sc.off.len(),
            sc.off,
            sc.labor_total
        ),
    );

    // Stock-flow consistency, including a closed toy world.
    let toy_sam = synthetic_sam(&SynthOptions {
        external: false,
        ..SynthOptions::default()
    });
    let toy_cfg = SimConfig {
        max_banks: 0,
        cb_lending: false,
        deployment_months: 60,
        ..SimConfig::default()
    };
    let mut toy = World::new(toy_sam, toy_cfg).expect("toy world");
    let m0 = toy.money_stock();
    let mut drift = 0.0f64;
    let mut boundary = 0.0f64;
    for _ in 0..TOY_MONTHS {
        toy.step_month();
        drift = drift.max((toy.money_stock() - m0).abs() / m0.abs());
        let a = toy.audits.last().unwrap();
        boundary += a.explained.values().map(|v| v.abs()).sum::<f64>();
    }
    let worst = [&main, &fresh, &restored, &sw, &toy].iter().map(|w| worst_audit(w)).fold(0.0, f64::max);
    let toy_firms = toy.open_firms();
    r.line(
        "Stock-flow consistency",
        worst <= 1e-9 && boundary == 0.0 && drift <= 1e-9 && toy_firms > 0,
        format!(
            "worst monthly audit residual {worst:.2e}; toy world ({TOY_MONTHS} months, {toy_firms} firms): boundary flows {boundary}, max money drift {drift:.2e}"
        ),
    );

    let rules = rule_suites();
    r.line("Rule unit suites", rules.is_ok(), format!("{:?}", rules.err().unwrap_or_else(|| "all examples match".into())));

    let oracle = catch_unwind(|| (0..1000u64).filter(|&s| common::check_book(s) > 0.0).count());
    r.line(
        "Clearing-house oracle",
        oracle.is_ok(),
        match &oracle {
            Ok(n) => format!("1000 books agree with exhaustive search ({n} with trades)"),
            Err(_) => "mismatch (see panic message above)".into(),
        },
    );

    let nw = main.household_net_worths();
    let (g, sk) = (gini(&nw), skewness(&nw));
    r.line("Wealth distribution", sk > 0.0 && g > 0.2, format!("month {TOTAL}: gini {g:.3}, skewness {sk:.2}"));

    if let Some(dir) = write_outputs(&main) {
        println!("outputs of the main run: {}", dir.display());
    }
    if r.failed > 0 {
        println!("{} criteria failed", r.failed);
        std::process::exit(1);
    }
}
