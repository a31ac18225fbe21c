//! Versioned, checksummed world snapshots.
//!
//! Layout: a version line, a `sha256 <hex>` line over the payload, then the
//! JSON payload.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::World;
use crate::accounting::hex;
use crate::error::SimError;

pub const SNAPSHOT_VERSION: &str = "SAMDEPLOY-SNAPSHOT v1";

pub fn snapshot_to_string(world: &World) -> Result<String, SimError> {
    let payload = serde_json::to_string(world).map_err(|e| SimError::SnapshotFormat(e.to_string()))?;
    let digest = hex(&Sha256::digest(payload.as_bytes()));
    Ok(format!("{SNAPSHOT_VERSION}\nsha256 {digest}\n{payload}"))
}

pub fn snapshot_from_str(text: &str) -> Result<World, SimError> {
    let mut parts = text.splitn(3, '\n');
    let version = parts.next().unwrap_or("");
    if version != SNAPSHOT_VERSION {
        return Err(SimError::SnapshotVersion {
            found: version.chars().take(64).collect(),
            expected: SNAPSHOT_VERSION.into(),
        });
    }
    let sum = parts
        .next()
        .and_then(|l| l.strip_prefix("sha256 "))
        .ok_or_else(|| SimError::SnapshotFormat("missing checksum line".into()))?;
    let payload = parts
        .next()
        .ok_or_else(|| SimError::SnapshotFormat("missing payload".into()))?;
    if hex(&Sha256::digest(payload.as_bytes())) != sum.trim() {
        return Err(SimError::SnapshotChecksum);
    }
    let mut world: World =
        serde_json::from_str(payload).map_err(|e| SimError::SnapshotFormat(e.to_string()))?;
    world.rebuild_index();
    Ok(world)
}

pub fn save_snapshot(world: &World, path: &Path) -> Result<(), SimError> {
    std::fs::write(path, snapshot_to_string(world)?)?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<World, SimError> {
    snapshot_from_str(&std::fs::read_to_string(path)?)
}

