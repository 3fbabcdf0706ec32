//! Run configuration: a TOML file with one section per pipeline stage, overridden by flags.

use std::path::Path;

use ctflow::flow::ArchConfig;
use ctflow::tomo::{DatasetConfig, Geometry, PhantomFamily};
use ctflow::train::TrainConfig;
use ctflow::{Error, Result};
use serde::{Deserialize, Serialize};

/// Simulation settings other than the geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub count: usize,
    pub seed: u64,
    pub family: PhantomFamily,
    pub photons_high: f64,
    pub photons_low: f64,
    pub clamp_floor: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            count: d.count,
            seed: d.seed,
            family: d.family,
            photons_high: d.photons_high,
            photons_low: d.photons_low,
            clamp_floor: d.clamp_floor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub n_list: Vec<usize>,
    pub seed: u64,
    pub data_range: f64,
    /// Standard deviation mapped to white in exported std images.
    pub std_range: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { n_list: vec![1, 10, 100, 1000], seed: 0, data_range: 1.0, std_range: 0.2 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub data: DataSection,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig {
            count: self.data.count,
            seed: self.data.seed,
            geometry: self.geometry,
            family: self.data.family,
            photons_high: self.data.photons_high,
            photons_low: self.data.photons_low,
            clamp_floor: self.data.clamp_floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset().validate()?;
        self.arch.validate()?;
        self.train.validate()?;
        if self.eval.n_list.is_empty() || self.eval.n_list.contains(&0) {
            return Err(Error::Config("eval.n_list must hold positive sample counts".into()));
        }
        if !(self.eval.data_range > 0.0 && self.eval.std_range > 0.0) {
            return Err(Error::Config("eval.data_range and eval.std_range must be positive".into()));
        }
        Ok(())
    }

    /// Write the effective configuration next to a command's outputs.
    pub fn echo(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_unknown_keys() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(RunConfig::from_toml("[train]\nsteps = 5\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[nope]\n").is_err());
        let partial = RunConfig::from_toml("[train]\nsteps = 5\n").unwrap();
        assert_eq!(partial.train.steps, 5);
        assert_eq!(partial.geometry, Geometry::default());
    }
}
