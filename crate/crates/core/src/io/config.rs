use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_json, write_json};
use crate::error::{Error, Result};
use crate::hamiltonian::PairSiteModel;
use crate::spectrum::{MapOptions, SweepSpec, COLOR_FLOOR};

pub const SCHEMA_VERSION: u32 = 1;

/// Rendering options stored alongside a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Presentation {
    /// Gaussian line width (GHz).
    pub sigma: f64,
    /// Frequency grid step of rendered maps (GHz).
    pub freq_step: f64,
    /// Offset inside `log10(P + floor)`.
    pub color_floor: f64,
    /// Lines weaker than this are not drawn.
    pub min_intensity: f64,
}

impl Default for Presentation {
    fn default() -> Self {
        let m = MapOptions::default();
        Presentation {
            sigma: m.sigma,
            freq_step: m.freq_step,
            color_floor: COLOR_FLOOR,
            min_intensity: m.min_intensity,
        }
    }
}

impl Presentation {
    pub fn map_options(&self) -> MapOptions {
        MapOptions {
            sigma: self.sigma,
            freq_step: self.freq_step,
            min_intensity: self.min_intensity,
            ..MapOptions::default()
        }
    }
}

fn default_sweep() -> SweepSpec {
    SweepSpec::along_z(-0.2, 0.7, 901)
}

/// A model with its sweep defaults and presentation options; the on-disk
/// form of every CLI configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub schema_version: u32,
    pub model: PairSiteModel,
    #[serde(default = "default_sweep")]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub presentation: Presentation,
}

impl ModelConfig {
    pub fn new(model: PairSiteModel) -> Self {
        ModelConfig {
            schema_version: SCHEMA_VERSION,
            model,
            sweep: default_sweep(),
            presentation: Presentation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(self.schema_version));
        }
        self.model.validate()?;
        self.sweep.validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let cfg: ModelConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }
}
