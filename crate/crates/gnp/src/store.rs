//! Model checkpoints on disk. Each file carries its network kind and the
//! config needed to rebuild the architecture before restoring weights.

use std::collections::BTreeMap;
use std::path::Path;

use gnp_core::goalnet::{GoalNet, GoalNetConfig};
use gnp_core::nn::Checkpoint;
use gnp_core::nsf::{ForceNets, NsfConfig};

use crate::error::{Error, Result};
use crate::formats::{read_bytes, write_bytes};

const GOALNET: &str = "goalnet";
const FORCENETS: &str = "forcenets";

fn save(
    path: &Path,
    kind: &str,
    config: String,
    store: &gnp_core::nn::ParamStore,
    extra: &[(&str, &str)],
) -> Result<()> {
    let mut meta = BTreeMap::new();
    meta.insert("kind".to_string(), kind.to_string());
    meta.insert("config".to_string(), config);
    for (k, v) in extra {
        meta.insert((*k).to_string(), (*v).to_string());
    }
    write_bytes(path, &Checkpoint::from_store(store, meta).encode())
}

fn open(path: &Path, kind: &str) -> Result<Checkpoint> {
    let ckpt = Checkpoint::decode(&read_bytes(path)?)?;
    match ckpt.metadata.get("kind") {
        Some(k) if k == kind => Ok(ckpt),
        other => Err(Error::Format(format!(
            "{}: expected a {kind} checkpoint, found {}",
            path.display(),
            other.map_or("no kind", String::as_str)
        ))),
    }
}

fn config<T: serde::de::DeserializeOwned>(path: &Path, ckpt: &Checkpoint) -> Result<T> {
    let text = ckpt
        .metadata
        .get("config")
        .ok_or_else(|| Error::Format(format!("{}: no config", path.display())))?;
    serde_json::from_str(text).map_err(|e| Error::Format(format!("{}: bad config: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("configs are plain data")
}

/// Saves `net`; `modes` is the fingerprint of the mode set it was trained on.
pub fn save_goalnet(path: &Path, net: &GoalNet, modes: &str) -> Result<()> {
    save(path, GOALNET, to_json(&net.config), &net.store, &[("modes", modes)])
}

/// Returns the network and the fingerprint of its mode set.
pub fn load_goalnet(path: &Path) -> Result<(GoalNet, String)> {
    let ckpt = open(path, GOALNET)?;
    let mut net = GoalNet::new(config::<GoalNetConfig>(path, &ckpt)?)?;
    ckpt.restore(&mut net.store)?;
    Ok((net, ckpt.metadata.get("modes").cloned().unwrap_or_default()))
}

pub fn save_force_nets(path: &Path, nets: &ForceNets) -> Result<()> {
    save(path, FORCENETS, to_json(&nets.config), &nets.store, &[])
}

pub fn load_force_nets(path: &Path) -> Result<ForceNets> {
    let ckpt = open(path, FORCENETS)?;
    let mut nets = ForceNets::new(config::<NsfConfig>(path, &ckpt)?)?;
    ckpt.restore(&mut nets.store)?;
    Ok(nets)
}
