//! Experiment configuration files.
//!
//! Configs are TOML documents; see `configs/` in the repository for the
//! bundled experiments. Unknown keys are rejected so that typos surface as
//! errors instead of silently falling back to defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::phase::PhasePoint;
use crate::quantum::Backend;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub tol_flow: f64,
    pub tol_symp: f64,
    pub tol_period: f64,
    pub tol_action: f64,
    pub tol_sub: f64,
    pub tol_level: f64,
    pub tol_rank: f64,
    pub tol_eig: f64,
    pub tol_comm: f64,
    pub tol_degen: f64,
    pub tol_grid: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_flow: 1e-10,
            tol_symp: 1e-8,
            tol_period: 1e-9,
            tol_action: 1e-6,
            tol_sub: 1e-6,
            tol_level: 1e-12,
            tol_rank: 1e-6,
            tol_eig: 1e-8,
            tol_comm: 1e-10,
            tol_degen: 1e-9,
            tol_grid: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeriodSettings {
    pub t_max: f64,
    pub grid: usize,
    pub check_points: usize,
    pub n_frames: usize,
    pub max_frames: usize,
}

impl Default for PeriodSettings {
    fn default() -> Self {
        Self { t_max: 8.0, grid: 160, check_points: 3, n_frames: 64, max_frames: 1 << 14 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Windows {
    /// Half-widths of the spectral window in units of `h`.
    pub c: Option<Vec<f64>>,
    /// Multiplicity cubes have half-width `C h²`.
    #[serde(rename = "C")]
    pub cube: f64,
    /// Matches further apart than `reject h²` are rejected.
    pub reject: f64,
}

impl Default for Windows {
    fn default() -> Self {
        Self { c: None, cube: 1.0, reject: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct QuantumSettings {
    pub n_quanta: Option<usize>,
    pub points_per_wavelength: Option<f64>,
    pub max_points_per_wavelength: Option<f64>,
    pub r_max_energy_factor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self { directory: "out".into(), formats: vec![Format::Json, Format::Csv] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub model: ModelSpec,
    pub e0: Vec<f64>,
    pub h_grid: Vec<f64>,
    pub backend: Backend,
    /// Seed for level-set sampling and hypothesis probes.
    #[serde(default)]
    pub seed: u64,
    /// Starting guess for the base point on the level set.
    #[serde(default)]
    pub base_point: Option<PhasePoint>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub period: PeriodSettings,
    #[serde(default)]
    pub mc: Option<McSettings>,
    #[serde(default)]
    pub windows: Windows,
    #[serde(default)]
    pub quantum: QuantumSettings,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn check(&self) -> Result<()> {
        if self.h_grid.is_empty() || self.h_grid.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::Config("h_grid must be a nonempty list of positive numbers".into()));
        }
        if self.h_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("h_grid must be strictly decreasing".into()));
        }
        if self.e0.is_empty() || self.e0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("e0 must be a nonempty list of finite numbers".into()));
        }
        if let Some(c) = &self.windows.c {
            if c.len() != self.e0.len() || c.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Config("windows.c must hold one positive half-width per component of e0".into()));
            }
        }
        if let Some(mc) = &self.mc {
            if mc.n_samples == 0 {
                return Err(Error::Config("mc.n_samples must be positive".into()));
            }
        }
        if !(self.windows.cube > 0.0) || !(self.windows.reject > 0.0) {
            return Err(Error::Config("windows.C and windows.reject must be positive".into()));
        }
        self.model.build()?;
        Ok(())
    }

    /// Canonical TOML rendering; parsing it reproduces this config.
    pub fn echo(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical echo, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.echo()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Replaces every seed in the config.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Some(mc) = &mut self.mc {
            mc.seed = seed;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HO: &str = r#"
name = "ho1d"
e0 = [0.5]
h_grid = [0.2, 0.1, 0.05]
backend = "oscillator-exact"

[model]
name = "ho1d"

[windows]
c = [4.05]
"#;

    #[test]
    fn parses_and_echo_round_trips() {
        let cfg = ExperimentConfig::parse(HO).unwrap();
        assert_eq!(cfg.backend, Backend::OscillatorExact);
        assert_eq!(cfg.tolerances.tol_period, 1e-9);
        let again = ExperimentConfig::parse(&cfg.echo().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash().unwrap(), again.hash().unwrap());
        assert_eq!(cfg.hash().unwrap().len(), 64);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::parse(&HO.replace("[0.2, 0.1, 0.05]", "[0.1, 0.2, 0.05]")).is_err());
        assert!(ExperimentConfig::parse(&HO.replace("[0.2, 0.1, 0.05]", "[]")).is_err());
        assert!(ExperimentConfig::parse(&format!("{HO}\ntypo = 1\n")).is_err());
        assert!(ExperimentConfig::parse(&HO.replace("name = \"ho1d\"\n\n", "name = \"nope\"\n\n")).is_err());
        let no_seed = format!("{HO}\n[mc]\nn_samples = 10\n");
        assert!(ExperimentConfig::parse(&no_seed).is_err());
    }

    #[test]
    fn seed_override_reaches_mc() {
        let mut cfg = ExperimentConfig::parse(&format!("{HO}\n[mc]\nn_samples = 10\nseed = 3\n")).unwrap();
        cfg.override_seed(99);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.mc.unwrap().seed, 99);
    }
}
