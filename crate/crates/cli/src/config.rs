//! JSON run configuration. Every field is optional and mirrors a flag of the
//! same name; values given on the command line take precedence.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use uwimg_core::imaging::WaterRanges;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,

    pub input: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub depth_dir: Option<PathBuf>,

    pub water_type: Option<String>,
    /// Replaces the preset ranges entirely.
    pub ranges: Option<WaterRanges>,
    pub enforce_order: Option<bool>,
    pub samples_per_pair: Option<usize>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub meters_per_unit: Option<f64>,
    pub max_range: Option<f64>,

    pub methods: Option<Vec<String>>,
    pub metrics: Option<Vec<String>>,
    pub losses: Option<Vec<String>>,
    pub mix_alpha: Option<f64>,
    pub beta: Option<[f64; 3]>,
    pub ambient: Option<[f64; 3]>,
    pub alpha: Option<f64>,
    pub max_iters: Option<usize>,
    pub step_size: Option<f64>,
    pub transmission_floor: Option<f64>,
    pub limit: Option<usize>,

    pub images: Option<usize>,
    pub warmup: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_configs() {
        let c = FileConfig::parse(r#"{"seed": 3, "methods": ["he", "udcp"], "beta": [0.4, 0.2, 0.1]}"#)
            .unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.methods.unwrap().len(), 2);
        assert_eq!(c.out, None);
        assert!(FileConfig::parse(r#"{"sed": 3}"#).is_err());
    }
}
