//! Batch front end: validate a SAM, deploy an economy, continue a snapshot,
//! and write or compare run outputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use samdeploy::accounting::{
    compare_sam, computed_sam, sam_computed_csv, sam_pct_csv, timeseries_csv, wealth_hist_csv,
    wealth_histogram, Binning,
};
use samdeploy::engine::{load_snapshot, save_snapshot};
use samdeploy::{Manifest, SamTable, SimConfig, World};

const SNAPSHOT_FILE: &str = "final.snap";
const WEALTH_BINS: usize = 40;
/// Cells at or above this share of total output count as major flows.
const MAJOR_SHARE: f64 = 0.005;

#[derive(Parser, Debug)]
#[command(name = "samdeploy", version, about = "Deploy an agent-based economy from a Social Accounting Matrix")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a SAM file and print its balance report.
    Validate {
        #[arg(long, value_name = "PATH")]
        sam: PathBuf,
    },
    /// Build a fresh economy and run the deployment phase.
    Deploy(FreshArgs),
    /// Run a fresh economy, or continue from a snapshot with --snapshot.
    Run(RunArgs),
    /// Check that two runs (directories or snapshot files) have identical
    /// ledger hashes and CSV outputs.
    Compare {
        #[arg(value_name = "RUN_A")]
        a: PathBuf,
        #[arg(value_name = "RUN_B")]
        b: PathBuf,
    },
    /// Rewrite the CSV outputs of a snapshot and print the SAM comparison.
    Report {
        #[arg(long, value_name = "PATH")]
        snapshot: PathBuf,
        /// Target SAM; defaults to the one stored in the snapshot.
        #[arg(long, value_name = "PATH")]
        sam: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Months aggregated into the computed SAM.
        #[arg(long, value_name = "N", default_value_t = 12)]
        window: u32,
    },
}

#[derive(Args, Debug)]
struct FreshArgs {
    #[arg(long, value_name = "PATH")]
    sam: PathBuf,
    /// Flat `key = value` parameter file; flags take precedence.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Simulated households (n_sim_agents).
    #[arg(long, value_name = "N")]
    agents: Option<usize>,
    /// Months to simulate [deploy: deployment_months, run: total_months].
    #[arg(long, value_name = "N")]
    months: Option<u32>,
    /// Months before the budget factor is locked [deploy: same as --months].
    #[arg(long = "deploy-months", value_name = "N")]
    deploy_months: Option<u32>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Months aggregated into the computed SAM.
    #[arg(long, value_name = "N", default_value_t = 12)]
    window: u32,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Continue this snapshot instead of building a fresh economy.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["sam", "agents", "seed", "deploy_months"])]
    snapshot: Option<PathBuf>,
    #[arg(long, value_name = "PATH", required_unless_present = "snapshot")]
    sam: Option<PathBuf>,
    /// Flat `key = value` parameter file; flags take precedence. With
    /// --snapshot, overrides behavioral parameters of the restored world.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    agents: Option<usize>,
    /// Months to simulate [fresh: total_months; snapshot: required].
    #[arg(long, value_name = "N")]
    months: Option<u32>,
    #[arg(long = "deploy-months", value_name = "N")]
    deploy_months: Option<u32>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, value_name = "N", default_value_t = 12)]
    window: u32,
}

/// Parameters that define the world's structure or random streams and so
/// cannot change on a restored snapshot.
const FIXED_ON_RESTORE: [&str; 3] = ["n_sim_agents", "seed", "days_per_month"];

fn defaults_help() -> String {
    let mut s = String::from("Parameters (config file keys, with defaults):\n");
    for (k, v, doc) in SimConfig::default().entries() {
        s.push_str(&format!("  {k:<22} {v:<10} {doc}\n"));
    }
    s
}

fn read_sam(path: &Path) -> Result<SamTable> {
    let text = std::fs::read_to_string(path).with_context(|| format!("{}: cannot read", path.display()))?;
    SamTable::parse(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn read_config(base: SimConfig, path: Option<&Path>) -> Result<SimConfig> {
    let mut cfg = base;
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).with_context(|| format!("{}: cannot read", p.display()))?;
        cfg.apply_text(&text).map_err(|e| anyhow!("{}: {e}", p.display()))?;
    }
    Ok(cfg)
}

fn fresh_world(
    sam: &Path,
    config: Option<&Path>,
    agents: Option<usize>,
    months: u32,
    deploy_months: u32,
    seed: Option<u64>,
) -> Result<World> {
    let sam = read_sam(sam)?;
    let mut cfg = read_config(SimConfig::default(), config)?;
    if let Some(a) = agents {
        cfg.n_sim_agents = a;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.total_months = months;
    cfg.deployment_months = deploy_months;
    World::new(sam, cfg).map_err(|e| anyhow!("{e}"))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).with_context(|| format!("{}: cannot write", p.display()))
}

fn manifest(world: &World, hash: &str) -> Manifest {
    Manifest::new(&world.sam, &world.cfg, hash)
}

/// Runs `months` months, writing the manifest first and the outputs after.
fn execute(mut world: World, months: u32, out: &Path, window: u32) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("{}: cannot create", out.display()))?;
    write(out, "manifest.txt", &manifest(&world, "pending").to_text())?;
    world.run_months(months);
    save_snapshot(&world, &out.join(SNAPSHOT_FILE)).map_err(|e| anyhow!("{}: {e}", out.display()))?;
    write_outputs(&world, &world.sam, out, window)?;
    let m = manifest(&world, world.ledger.hash());
    write(out, "manifest.txt", &m.to_text())?;
    println!("run {} month {} ledger {}", m.run_id, world.month, m.ledger_hash);
    print_summary(&world, &world.sam, window)?;
    Ok(())
}

fn write_outputs(world: &World, target: &SamTable, out: &Path, window: u32) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("{}: cannot create", out.display()))?;
    write(out, "timeseries.csv", &timeseries_csv(world.n_sectors(), &world.series))?;
    let hist = wealth_histogram(&world.household_net_worths(), WEALTH_BINS, Binning::Linear);
    write(out, "wealth_hist.csv", &wealth_hist_csv(&hist))?;
    let mut ledger = String::from("month,entries,net_inflow,hash\n");
    for s in world.ledger.history() {
        ledger.push_str(&format!("{},{},{},{}\n", s.month, s.entries, s.net_inflow(), s.hash));
    }
    write(out, "ledger.csv", &ledger)?;
    if world.month > 0 {
        let w = window.min(world.month);
        let computed = computed_sam(&world.ledger, world.month, w, world.cal.scale.agent_scale)
            .map_err(|e| anyhow!("{e}"))?;
        let pct = compare_sam(&computed, target);
        write(out, "sam_pct.csv", &sam_pct_csv(&target.accounts, &pct))?;
        write(out, "sam_computed.csv", &sam_computed_csv(&target.accounts, &computed))?;
    }
    Ok(())
}

/// Prints unemployment and the major-cell comparison. Returns the number
/// of major cells outside [75, 125] percent.
fn print_summary(world: &World, target: &SamTable, window: u32) -> Result<usize> {
    println!("unemployment {:.2}%  firms {}  banks {}", world.unemployment_pct(), world.open_firms(), world.banks.len());
    if world.month == 0 {
        return Ok(0);
    }
    let w = window.min(world.month);
    let computed = computed_sam(&world.ledger, world.month, w, world.cal.scale.agent_scale)
        .map_err(|e| anyhow!("{e}"))?;
    let pct = compare_sam(&computed, target);
    let thr = MAJOR_SHARE * target.total_output();
    let (mut major, mut off) = (0, 0);
    for (i, row) in pct.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            if target.flows[i][j] < thr {
                continue;
            }
            major += 1;
            let p = p.unwrap_or(0.0);
            if !(75.0..=125.0).contains(&p) {
                off += 1;
                println!("  {:>24} -> {:<24} {:7.1}%", target.accounts[i], target.accounts[j], p);
            }
        }
    }
    println!("major cells {major}, outside 75-125%: {off} (window {w} months)");
    Ok(off)
}

fn run_paths(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(SNAPSHOT_FILE)
    } else {
        p.to_path_buf()
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Validate { sam } => {
            let table = read_sam(&sam)?;
            let report = table.validate_balance();
            println!("{}: {} accounts, {} producers", sam.display(), table.n_accounts, table.producers().len());
            println!("{report}");
            if !report.passed {
                eprintln!("error: {}: table is not balanced", sam.display());
                return Ok(ExitCode::from(1));
            }
            table.key_accounts().map_err(|e| anyhow!("{}: {e}", sam.display()))?;
        }
        Command::Deploy(a) => {
            let cfg = read_config(SimConfig::default(), a.config.as_deref())?;
            let months = a.months.unwrap_or(cfg.deployment_months);
            let deploy = a.deploy_months.unwrap_or(months);
            let world = fresh_world(&a.sam, a.config.as_deref(), a.agents, months, deploy, a.seed)?;
            execute(world, months, &a.out, a.window)?;
        }
        Command::Run(a) => {
            if let Some(snap) = &a.snapshot {
                let mut world = load_snapshot(snap).map_err(|e| anyhow!("{}: {e}", snap.display()))?;
                let before = world.cfg.clone();
                let cfg = read_config(world.cfg.clone(), a.config.as_deref())?;
                let fixed = before.entries().into_iter().zip(cfg.entries());
                for ((k, v0, _), (_, v1, _)) in fixed {
                    if FIXED_ON_RESTORE.contains(&k) && v0 != v1 {
                        bail!("{}: {k} cannot change on a restored snapshot", a.config.as_ref().unwrap().display());
                    }
                }
                cfg.validate().map_err(|e| anyhow!("{e}"))?;
                world.cfg = cfg;
                let months = a.months.ok_or_else(|| anyhow!("--months is required with --snapshot"))?;
                execute(world, months, &a.out, a.window)?;
            } else {
                let sam = a.sam.as_deref().expect("required by clap");
                let cfg = read_config(SimConfig::default(), a.config.as_deref())?;
                let months = a.months.unwrap_or(cfg.total_months);
                let deploy = a.deploy_months.unwrap_or(cfg.deployment_months);
                let world = fresh_world(sam, a.config.as_deref(), a.agents, months, deploy, a.seed)?;
                execute(world, months, &a.out, a.window)?;
            }
        }
        Command::Compare { a, b } => {
            let (pa, pb) = (run_paths(&a), run_paths(&b));
            let wa = load_snapshot(&pa).map_err(|e| anyhow!("{}: {e}", pa.display()))?;
            let wb = load_snapshot(&pb).map_err(|e| anyhow!("{}: {e}", pb.display()))?;
            let (ha, hb) = (wa.ledger.hash(), wb.ledger.hash());
            println!("{}: month {} ledger {ha}", pa.display(), wa.month);
            println!("{}: month {} ledger {hb}", pb.display(), wb.month);
            let mut same = ha == hb && wa.month == wb.month;
            if a.is_dir() && b.is_dir() {
                for f in ["timeseries.csv", "sam_pct.csv", "sam_computed.csv", "wealth_hist.csv", "ledger.csv"] {
                    let (fa, fb) = (std::fs::read(a.join(f)).ok(), std::fs::read(b.join(f)).ok());
                    if fa != fb {
                        println!("{f} differs");
                        same = false;
                    }
                }
            }
            println!("{}", if same { "identical" } else { "different" });
            if !same {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Report { snapshot, sam, out, window } => {
            let world = load_snapshot(&snapshot).map_err(|e| anyhow!("{}: {e}", snapshot.display()))?;
            let target = match &sam {
                Some(p) => read_sam(p)?,
                None => world.sam.clone(),
            };
            if target.accounts != world.sam.accounts {
                bail!("{}: accounts differ from the snapshot's SAM", sam.unwrap().display());
            }
            if let Some(dir) = &out {
                write_outputs(&world, &target, dir, window)?;
                write(dir, "manifest.txt", &manifest(&world, world.ledger.hash()).to_text())?;
            }
            println!("month {} ledger {}", world.month, world.ledger.hash());
            print_summary(&world, &target, window)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let help = defaults_help();
    let mut cmd = Cli::command();
    for name in ["validate", "deploy", "run", "compare", "report"] {
        cmd = cmd.mut_subcommand(name, |c| c.after_help(help.clone()));
    }
    let matches = match cmd.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
