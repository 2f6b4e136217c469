//! Run settings shared by the CLI and the FFI.

use serde::{Deserialize, Serialize};

use crate::commitment::TOL_VERIFY;
use crate::error::{Error, Result};
use crate::tensor::{DEFAULT_DIM_CAP, TOL_PSD};

pub const SEED_ENV: &str = "COMBLAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol_psd: f64,
    pub tol_norm: f64,
    pub tol_verify: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tol_psd: TOL_PSD, tol_norm: crate::choi::TOL_NORM, tol_verify: TOL_VERIFY }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub tolerances: Tolerances,
    pub dim_cap: usize,
    pub output: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 0, tolerances: Tolerances::default(), dim_cap: DEFAULT_DIM_CAP, output: OutputFormat::Text }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Applies the seed from the environment, if set.
    pub fn with_env(self) -> Result<Self> {
        self.with_seed_var(std::env::var(SEED_ENV).ok().as_deref())
    }

    pub fn with_seed_var(mut self, var: Option<&str>) -> Result<Self> {
        if let Some(v) = var {
            self.seed = v.trim().parse().map_err(|_| Error::InvalidInput(format!("{SEED_ENV}={v} is not a 64-bit unsigned integer")))?;
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let file = RunConfig::from_json(r#"{"seed": 5, "output": "json"}"#).unwrap();
        assert_eq!(file.seed, 5);
        assert_eq!(file.tolerances, Tolerances::default());
        let env = file.clone().with_seed_var(Some("17")).unwrap();
        assert_eq!(env.seed, 17);
        assert_eq!(file.with_seed_var(None).unwrap().seed, 5);
        assert!(RunConfig::default().with_seed_var(Some("x")).is_err());
    }
}
