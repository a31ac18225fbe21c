//! Run manifest: everything needed to reproduce a run and check its output.

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::accounting::hex;
use crate::config::SimConfig;
use crate::sam::SamTable;

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Digest of the inputs; equal inputs give equal ids.
    pub run_id: String,
    pub version: String,
    pub seed: u64,
    pub sam_sha256: String,
    pub config: Vec<(String, String)>,
    pub ledger_hash: String,
    /// Seconds since the Unix epoch when the manifest was written.
    pub created: u64,
}

impl Manifest {
    pub fn new(sam: &SamTable, cfg: &SimConfig, ledger_hash: &str) -> Self {
        let sam_sha256 = hex(&Sha256::digest(sam.to_text().as_bytes()));
        let config: Vec<(String, String)> = cfg
            .entries()
            .into_iter()
            .map(|(k, v, _)| (k.to_string(), v))
            .collect();
        let mut h = Sha256::new();
        h.update(sam_sha256.as_bytes());
        for (k, v) in &config {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        let run_id = hex(&h.finalize())[..16].to_string();
        Manifest {
            run_id,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            sam_sha256,
            config,
            ledger_hash: ledger_hash.to_string(),
            created: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }

    /// `key = value` lines. The timestamp is last so that manifests of
    /// identical runs differ only there.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "run_id = {}", self.run_id);
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "sam_sha256 = {}", self.sam_sha256);
        let _ = writeln!(s, "ledger_hash = {}", self.ledger_hash);
        for (k, v) in &self.config {
            let _ = writeln!(s, "config.{k} = {v}");
        }
        let _ = writeln!(s, "created = {}", self.created);
        s
    }

    /// The manifest text without the timestamp line.
    pub fn reproducible_text(&self) -> String {
        self.to_text()
            .lines()
            .filter(|l| !l.starts_with("created = "))
            .map(|l| format!("{l}\n"))
            .collect()
    }
}
