//! Binary network files: magic, `u32` header length, JSON header, then the
//! trainable parameters followed by the running batch-norm moments, all as
//! little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mlp, MlpSpec, RunningStats, Scaling};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"OSMNET01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetRole {
    Y,
    Z,
    Gamma,
}

impl NetRole {
    pub fn as_str(self) -> &'static str {
        match self {
            NetRole::Y => "y",
            NetRole::Z => "z",
            NetRole::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetHeader {
    pub spec: MlpSpec,
    pub step: usize,
    pub role: NetRole,
    pub stats_frozen: bool,
    pub affine_trainable: bool,
    pub bn_updates: Vec<u64>,
    pub scaling: Scaling,
}

pub fn net_file_name(role: NetRole, step: usize) -> String {
    format!("net_{}_{step}.bin", role.as_str())
}

pub fn save_net(dir: &Path, net: &Mlp, role: NetRole, step: usize) -> Result<()> {
    let header = NetHeader {
        spec: *net.spec(),
        step,
        role,
        stats_frozen: net.stats_frozen,
        affine_trainable: net.affine_trainable,
        bn_updates: net.running.iter().map(|r| r.updates).collect(),
        scaling: net.scaling().clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(12 + json.len() + 8 * net.params.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    let stats = net.running.iter().flat_map(|r| r.mean.iter().chain(&r.var));
    for v in net.params.iter().chain(stats) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join(net_file_name(role, step)), buf)?;
    Ok(())
}

pub fn load_net(dir: &Path, role: NetRole, step: usize) -> Result<Mlp> {
    let path = dir.join(net_file_name(role, step));
    let bytes = fs::read(&path)?;
    let bad = |what: &str| Error::Incompatible(format!("{}: {what}", path.display()));
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("not a network file"));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header"))?;
    let header: NetHeader = serde_json::from_slice(body)?;
    if header.role != role || header.step != step {
        return Err(bad("header does not match file name"));
    }
    let mut net = Mlp::zeros(header.spec)?;
    let floats: Vec<f64> = bytes[12 + len..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let n_stats: usize = net.running.iter().map(|r| 2 * r.mean.len()).sum();
    if floats.len() != net.params.len() + n_stats || header.bn_updates.len() != net.running.len() {
        return Err(bad("parameter count does not match the header"));
    }
    let mut off = net.params.len();
    net.params.copy_from_slice(&floats[..off]);
    for (r, &updates) in net.running.iter_mut().zip(&header.bn_updates) {
        let w = r.mean.len();
        *r = RunningStats { mean: floats[off..off + w].to_vec(), var: floats[off + w..off + 2 * w].to_vec(), updates };
        off += 2 * w;
    }
    net.set_scaling(header.scaling)?;
    net.stats_frozen = header.stats_frozen;
    net.affine_trainable = header.affine_trainable;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut net = Mlp::new(MlpSpec::standard(3, 6), &mut rng).unwrap();
        net.forward(&[1.0, 2.0, 3.0, -1.0, 0.5, 2.5], Mode::Train).unwrap();
        net.stats_frozen = true;
        save_net(dir.path(), &net, NetRole::Gamma, 7).unwrap();
        assert!(dir.path().join("net_gamma_7.bin").exists());
        let back = load_net(dir.path(), NetRole::Gamma, 7).unwrap();
        assert_eq!(back, net);
        assert!(load_net(dir.path(), NetRole::Y, 7).is_err());
    }
}
