//! TOML run configuration: preset defaults with a user document merged on top.

use serde::Deserialize;
use std::path::Path;

use crate::bench::{Preset, TrialConfig};
use crate::error::{Error, Result};

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn located(path: &Path, text: &str, e: &toml::de::Error) -> Error {
    let loc = e
        .span()
        .map(|s| {
            let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
            format!(":{line}")
        })
        .unwrap_or_default();
    Error::Config(format!("{}{loc}: {}", path.display(), e.message()))
}

/// Parses `text` as a partial config over `preset`.
pub fn parse_config(text: &str, path: &Path, preset: Preset) -> Result<TrialConfig> {
    let user: toml::Value = toml::from_str(text).map_err(|e| located(path, text, &e))?;
    // field-level diagnostics come from deserialising the document on its own
    TrialConfig::deserialize(toml::Deserializer::new(text)).map_err(|e| located(path, text, &e))?;
    let mut merged = toml::Value::try_from(preset.config())
        .map_err(|e| Error::Config(format!("cannot encode preset: {e}")))?;
    merge(&mut merged, user);
    let cfg = TrialConfig::deserialize(merged)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
    cfg.validate()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

/// Loads the effective config: the preset alone, or a file merged onto it.
pub fn load_config(path: Option<&Path>, preset: Preset) -> Result<TrialConfig> {
    match path {
        None => {
            let cfg = preset.config();
            cfg.validate()?;
            Ok(cfg)
        }
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_config(&text, p, preset)
        }
    }
}

/// Fully materialised config document.
pub fn to_toml(cfg: &TrialConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(format!("cannot encode config: {e}")))
}
