use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use samdeploy::SimConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_samdeploy"))
}

fn spain() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/spain6.sam")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn validate_reference_table() {
    let o = run(&["validate", "--sam", spain().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert!(out.contains("BALANCED"));
    assert!(out.contains("H16_Households"));
}

#[test]
fn validate_failures_name_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.sam");
    let o = run(&["validate", "--sam", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(text(&o.stderr).contains("nope.sam"));

    let broken = dir.path().join("broken.sam");
    let src = std::fs::read_to_string(spain()).unwrap();
    std::fs::write(&broken, src.replacen("\t1701\t", "\t1702\t", 1)).unwrap();
    let o = run(&["validate", "--sam", broken.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = text(&o.stderr);
    assert!(err.contains("broken.sam") && err.contains("P01_AgroPesc"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["deploy", "--sam", "x.sam"])), 2);
    assert_eq!(code(&run(&["deploy", "--sam", "x.sam", "--out", "d", "--agents", "many"])), 2);
}

#[test]
fn help_lists_every_default() {
    for sub in ["validate", "deploy", "run", "compare", "report"] {
        let o = run(&[sub, "--help"]);
        assert_eq!(code(&o), 0);
        let out = text(&o.stdout);
        for (k, v, _) in SimConfig::default().entries() {
            let line = out.lines().find(|l| l.split_whitespace().next() == Some(k));
            let line = line.unwrap_or_else(|| panic!("{sub}: {k} missing"));
            assert_eq!(line.split_whitespace().nth(1), Some(v.as_str()), "{sub}: {k}");
        }
    }
}

fn deploy(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let (sam, out_s) = (spain().display().to_string(), out.display().to_string());
    let mut args = vec!["deploy", "--sam", &sam, "--agents", "200", "--seed", "5"];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", &out_s]);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    out
}

#[test]
fn run_directory_contents() {
    let dir = tempfile::tempdir().unwrap();
    let out = deploy(dir.path(), "r", &["--months", "6"]);
    for f in ["manifest.txt", "final.snap", "timeseries.csv", "sam_pct.csv", "sam_computed.csv", "wealth_hist.csv", "ledger.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let ts = std::fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert!(ts.starts_with("month,unemployment_pct,emp_s1,emp_s2,emp_s3,emp_s4,emp_s5,emp_s6,hh_cons,gov_cons,ext_cons,ic_total,inv_goods,inv_inputs,hh_wealth\n"));
    assert_eq!(ts.lines().count(), 1 + 7);
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("config.n_sim_agents = 200"));
    assert!(manifest.contains("seed = 5"));
    assert!(manifest.lines().last().unwrap().starts_with("created = "));
    let hist = std::fs::read_to_string(out.join("wealth_hist.csv")).unwrap();
    assert!(hist.starts_with("bin_low,bin_high,count\n"));
    assert!(hist.contains("\ngini,") && hist.contains("\nskewness,"));
}

#[test]
fn same_arguments_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = deploy(dir.path(), "a", &["--months", "8"]);
    let b = deploy(dir.path(), "b", &["--months", "8"]);
    for f in ["timeseries.csv", "sam_pct.csv", "sam_computed.csv", "wealth_hist.csv", "ledger.csv", "final.snap"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let strip = |p: &Path| -> String {
        std::fs::read_to_string(p.join("manifest.txt"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("created = "))
            .collect()
    };
    assert_eq!(strip(&a), strip(&b));
    let o = run(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
}

#[test]
fn snapshot_continuation_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = deploy(dir.path(), "first", &["--months", "10"]);
    let cont = dir.path().join("cont");
    let snap = first.join("final.snap");
    let o = run(&["run", "--snapshot", snap.to_str().unwrap(), "--months", "5", "--out", cont.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let whole = dir.path().join("whole");
    let o = run(&[
        "run", "--sam", spain().to_str().unwrap(), "--agents", "200", "--seed", "5", "--months", "15",
        "--deploy-months", "10", "--out", whole.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let o = run(&["compare", cont.to_str().unwrap(), whole.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o.stdout));
    assert!(text(&o.stdout).contains("identical"));

    let o = run(&["compare", first.to_str().unwrap(), whole.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn report_rewrites_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let r = deploy(dir.path(), "r", &["--months", "6", "--window", "3"]);
    let again = dir.path().join("again");
    let o = run(&[
        "report", "--snapshot", r.join("final.snap").to_str().unwrap(), "--sam", spain().to_str().unwrap(),
        "--window", "3", "--out", again.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("major cells"));
    for f in ["timeseries.csv", "sam_pct.csv", "sam_computed.csv", "wealth_hist.csv"] {
        assert_eq!(std::fs::read(r.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_snapshots_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let r = deploy(dir.path(), "r", &["--months", "2"]);
    let snap = std::fs::read_to_string(r.join("final.snap")).unwrap();
    let old = dir.path().join("old.snap");
    std::fs::write(&old, snap.replacen("v1", "v0", 1)).unwrap();
    let o = run(&["run", "--snapshot", old.to_str().unwrap(), "--months", "1", "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = text(&o.stderr);
    assert!(err.contains("old.snap") && err.contains("version"), "{err}");

    let tampered = dir.path().join("tampered.snap");
    std::fs::write(&tampered, snap.replacen("\"month\":2", "\"month\":3", 1)).unwrap();
    let o = run(&["report", "--snapshot", tampered.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(text(&o.stderr).contains("checksum"));
}

#[test]
fn restored_world_keeps_its_seed() {
    let dir = tempfile::tempdir().unwrap();
    let r = deploy(dir.path(), "r", &["--months", "2"]);
    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, "seed = 99\n").unwrap();
    let o = run(&[
        "run", "--snapshot", r.join("final.snap").to_str().unwrap(), "--config", cfg.to_str().unwrap(),
        "--months", "1", "--out", dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(text(&o.stderr).contains("seed"));
}
