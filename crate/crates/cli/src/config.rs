//! TOML configuration file.
//!
//! ```toml
//! seed = 7
//! tol = 1e-10
//! threads = 4
//! format = "csv"
//!
//! [verify]
//! bounds_k_max = 500
//! mc_trials = 200000
//! ```
//!
//! Command-line flags take precedence over file values.

use std::path::Path;

use anyhow::Context;
use revgap::verify::VerifyConfig;
use serde::Deserialize;

use crate::output::Format;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub threads: Option<usize>,
    pub format: Option<Format>,
    pub verify: VerifyConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
