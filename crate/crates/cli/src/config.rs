//! Config files and `--set section.key=value` overrides.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use sica_core::trainer::RunConfig;

/// Parses TOML text, applies overrides in order, and validates.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().context("config is not valid TOML")?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| anyhow!("invalid config: {}", e.message()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads `path` (or starts from the defaults when `None`).
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

/// `section.key=value`. The value is read as a TOML literal when it parses
/// as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not of the form section.key=value"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override `{spec}` has an empty key");
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = keys.split_last().expect("nonempty key path");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{spec}`: `{k}` is not a section"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// The config as TOML, for echoing into run directories.
pub fn render_config(cfg: &RunConfig) -> Result<String> {
    Ok(toml::to_string(cfg)?)
}
