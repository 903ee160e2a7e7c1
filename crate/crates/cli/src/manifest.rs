//! Run manifests and output directories.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sica_core::trainer::RunConfig;

pub const OUT_ENV: &str = "SICA_OUT";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAJECTORY_FILE: &str = "trajectories.jsonl";

/// Output root: `$SICA_OUT` or `./runs`.
pub fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

/// Schedule values derived from fractions of `total_steps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub t_max: u64,
    pub peer_decay_steps: u64,
    pub sigma_threshold: u64,
    pub eps_anneal_steps: u64,
    pub one_switch_step: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub metrics: String,
    pub checkpoint: String,
    pub trajectories: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub resolved: Resolved,
    pub seeds: Vec<u64>,
    pub start_time_unix: u64,
    pub code_version: String,
    pub config_hash: String,
    pub artifacts: Artifacts,
}

pub fn code_version() -> String {
    match option_env!("SICA_GIT_REV") {
        Some(rev) => format!("{} ({rev})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// First 12 hex digits of the SHA-256 of the config's JSON form.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let json = serde_json::to_vec(cfg)?;
    let digest = Sha256::digest(&json);
    Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let start_time_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(Self {
            config: cfg.clone(),
            resolved: Resolved {
                t_max: cfg.t_max(),
                peer_decay_steps: cfg.peer_decay_steps(),
                sigma_threshold: cfg.sigma_threshold(),
                eps_anneal_steps: cfg.eps_anneal_steps(),
                one_switch_step: cfg.one_switch_step(),
            },
            seeds: vec![cfg.run.seed],
            start_time_unix,
            code_version: code_version(),
            config_hash: config_hash(cfg)?,
            artifacts: Artifacts {
                metrics: METRICS_FILE.into(),
                checkpoint: CHECKPOINT_FILE.into(),
                trajectories: TRAJECTORY_FILE.into(),
            },
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let file = fs::File::create_new(&path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Creates `base`, or `base-2`, `base-3`, ... if taken. Never reuses an
/// existing directory.
pub fn fresh_dir(parent: &Path, base: &str) -> Result<PathBuf> {
    fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    for k in 1.. {
        let name = if k == 1 { base.to_string() } else { format!("{base}-{k}") };
        let dir = parent.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    unreachable!()
}

/// `<env>-<variant>-s<seed>-<hash>`.
pub fn run_dir_name(cfg: &RunConfig) -> Result<String> {
    Ok(format!(
        "{}-{}-s{}-{}",
        cfg.env.key(),
        cfg.run.variant.key().to_ascii_lowercase(),
        cfg.run.seed,
        config_hash(cfg)?
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_config() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.run.seed = 2;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 12);
    }
}
