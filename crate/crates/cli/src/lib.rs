//! Library side of the `cxr` command: dataset plumbing, benchmark runs and
//! the end-to-end toy run, shared by the binary and the acceptance suite.

pub mod dataset;
pub mod evaluate;
pub mod toy;

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;

/// Reads a TOML or JSON config (by extension), or the default when no path
/// is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(parsed)
}
