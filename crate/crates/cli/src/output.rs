//! Output helpers: every artifact carries the tool version and the config
//! hash, as a `#` comment line in CSVs and a `meta` object in JSON files.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

pub const TOOL: &str = "mvdakit";

pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

pub fn meta_comment(config_hash: &str) -> String {
    format!("{TOOL} v{} config={config_hash}", version())
}

pub fn write_csv(path: &Path, config_hash: &str, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::new();
    text.push_str(&format!("# {}\n", meta_comment(config_hash)));
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, config_hash: &str, data: &T) -> Result<()> {
    let wrapped = json!({
        "meta": { "tool": TOOL, "version": version(), "config_hash": config_hash },
        "data": data,
    });
    let mut text = serde_json::to_string_pretty(&wrapped)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Refuse to clobber `path` unless `force` is set.
pub fn guard_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        anyhow::bail!("{} already exists; pass --force to overwrite", path.display());
    }
    Ok(())
}

/// Format an f64 with shortest round-trip precision.
pub fn full(v: f64) -> String {
    format!("{v}")
}
