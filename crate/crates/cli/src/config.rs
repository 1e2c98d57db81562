//! Optional TOML defaults, read from `--config` or `$POLVIS_CONFIG`.
//! Command-line flags always win.

use std::path::Path;

use serde::Deserialize;

use crate::error::CliError;

pub const CONFIG_ENV: &str = "POLVIS_CONFIG";

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub scan: ScanSection,
    pub bt: BtSection,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub iou_threshold: Option<f64>,
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BtSection {
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub pseudo_count: Option<f64>,
}

impl Config {
    pub fn load(explicit: Option<&Path>) -> Result<Self, CliError> {
        let from_env = std::env::var_os(CONFIG_ENV);
        let path = match (explicit, &from_env) {
            (Some(p), _) => p,
            (None, Some(p)) if !p.is_empty() => Path::new(p),
            _ => return Ok(Self::default()),
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::data("config", format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::data("config", format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let c: Config = toml::from_str("seed = 4\n[scan]\niou_threshold = 0.4\n[bt]\ntol = 1e-8\n").unwrap();
        assert_eq!(c.seed, Some(4));
        assert_eq!(c.scan.iou_threshold, Some(0.4));
        assert_eq!(c.bt.tol, Some(1e-8));
        assert!(toml::from_str::<Config>("sede = 4").is_err());
    }
}
