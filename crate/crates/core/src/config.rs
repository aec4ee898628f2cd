//! Run configuration: a named preset with a TOML file layered on top.
//!
//! ```toml
//! preset = "desk"            # or "paper"
//!
//! [materials]
//! assets_dir = "assets/materials"   # optional; overrides the builtin metal tables
//! prism_index = 1.52
//! polarization = "P"
//!
//! [grids]
//! wavelength_min_nm = 300.0
//! wavelength_max_nm = 2000.0
//! wavelength_count = 64
//! angle_min_deg = 0.0
//! angle_max_deg = 90.0
//! angle_count = 64
//!
//! [structure]
//! layer_count = 6
//! metal_range = { min_nm = 5.0, max_nm = 10.0 }
//! dielectric_range = { min_nm = 5.0, max_nm = 40.0 }
//! palette = ["Au", "Ag", "Cu", "Al"]
//! dielectric = "SiO2"
//!
//! [cost]                     # price per nm of each material
//! Au = 300.0659
//!
//! [network]                  # head sizes follow [structure]
//! stage_widths = [16, 32, 64, 128]
//!
//! [dataset]
//! train_count = 500
//! test_count = 100
//!
//! [training]
//! epochs = 30
//! batch_size = 64
//! learning_rate = 0.01
//! seed = 1
//!
//! [guidance]
//! enabled = true
//! epsilon = 0.05
//! cadence = 1
//! warmup = 5
//! ```
//!
//! Only the keys given in the file replace the preset's values.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::{CostTable, GenerationSetup, StructureSpec};
use crate::error::{Error, Result};
use crate::guided::{GuidanceConfig, TrainingConfig};
use crate::materials::{MaterialDb, DEFAULT_PRISM_INDEX};
use crate::net::NetworkConfig;
use crate::optics::{GridSpec, OpticsSettings, Polarization, Solver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::Config(format!("unknown preset {s:?} (expected desk or paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assets_dir: Option<PathBuf>,
    pub prism_index: f64,
    pub polarization: Polarization,
}

/// Network settings that do not depend on the structure spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSettings {
    pub input_rows: usize,
    pub input_cols: usize,
    pub input_channels: usize,
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub residual_init: f64,
    pub type_weight: f64,
}

impl NetworkSettings {
    fn from_config(c: &NetworkConfig) -> Self {
        Self {
            input_rows: c.input_rows,
            input_cols: c.input_cols,
            input_channels: c.input_channels,
            stage_widths: c.stage_widths.clone(),
            blocks_per_stage: c.blocks_per_stage,
            stem_kernel: c.stem_kernel,
            stem_stride: c.stem_stride,
            residual_init: c.residual_init,
            type_weight: c.type_weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub train_count: usize,
    pub test_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub materials: MaterialsConfig,
    pub grids: GridSpec,
    pub structure: StructureSpec,
    pub cost: CostTable,
    pub network: NetworkSettings,
    pub dataset: DatasetConfig,
    pub training: TrainingConfig,
    pub guidance: GuidanceConfig,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (grids, structure, net, dataset) = match preset {
            Preset::Desk => {
                let s = StructureSpec::desk();
                let n = NetworkConfig::desk(&s);
                (GridSpec::desk(), s, n, (500, 100))
            }
            Preset::Paper => {
                let s = StructureSpec::paper();
                let n = NetworkConfig::paper(&s);
                (GridSpec::paper(), s, n, (5000, 1000))
            }
        };
        Self {
            preset,
            materials: MaterialsConfig {
                assets_dir: None,
                prism_index: DEFAULT_PRISM_INDEX,
                polarization: Polarization::P,
            },
            grids,
            structure,
            cost: CostTable::fitted(),
            network: NetworkSettings::from_config(&net),
            dataset: DatasetConfig {
                train_count: dataset.0,
                test_count: dataset.1,
            },
            training: TrainingConfig::default(),
            guidance: GuidanceConfig::default(),
        }
    }

    /// Parses `text` over its `preset` (or `preset_override` when given).
    /// `source` names the file in error messages.
    pub fn from_toml_str(text: &str, source: &str, preset_override: Option<Preset>) -> Result<Self> {
        let cfg_err = |m: String| Error::Config(format!("{source}: {m}"));
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
        let preset = match (preset_override, user.get("preset")) {
            (Some(p), _) => p,
            (None, Some(v)) => v
                .as_str()
                .ok_or_else(|| cfg_err("preset must be a string".into()))?
                .parse()
                .map_err(|e: Error| cfg_err(e.to_string()))?,
            (None, None) => Preset::Desk,
        };
        let mut base = toml::Table::try_from(Self::preset(preset)).expect("preset serializes");
        merge(&mut base, user);
        base.insert("preset".into(), toml::Value::String(preset.to_string()));
        let cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
        cfg.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, preset_override: Option<Preset>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string(), preset_override)?;
        if let Some(dir) = &cfg.materials.assets_dir {
            if dir.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.materials.assets_dir = Some(base.join(dir));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.materials;
        if !(m.prism_index.is_finite() && m.prism_index > 0.0) {
            return Err(Error::Config(format!("materials.prism_index must be positive, got {}", m.prism_index)));
        }
        self.grids.validate()?;
        self.structure.validate()?;
        self.cost.covers(&self.structure)?;
        self.network_config().validate()?;
        if self.dataset.train_count == 0 || self.dataset.test_count == 0 {
            return Err(Error::Config("dataset counts must be >= 1".into()));
        }
        self.training.validate()?;
        self.guidance.validate()
    }

    pub fn network_config(&self) -> NetworkConfig {
        let n = &self.network;
        NetworkConfig {
            input_rows: n.input_rows,
            input_cols: n.input_cols,
            input_channels: n.input_channels,
            stage_widths: n.stage_widths.clone(),
            blocks_per_stage: n.blocks_per_stage,
            stem_kernel: n.stem_kernel,
            stem_stride: n.stem_stride,
            residual_init: n.residual_init,
            thickness_outputs: self.structure.layer_count,
            metal_layers: self.structure.metal_layer_count(),
            classes: self.structure.palette.len(),
            type_weight: n.type_weight,
        }
    }

    pub fn optics(&self) -> OpticsSettings {
        OpticsSettings {
            prism_index: self.materials.prism_index,
            polarization: self.materials.polarization,
            ..OpticsSettings::default()
        }
    }

    pub fn generation_setup(&self) -> GenerationSetup {
        GenerationSetup {
            spec: self.structure.clone(),
            grid: self.grids,
            cost_table: self.cost.clone(),
            optics: self.optics(),
        }
    }

    /// Material database from `materials.assets_dir`, else `$SPP_ASSETS_DIR`,
    /// else the builtin tables.
    pub fn material_db(&self) -> Result<MaterialDb> {
        match &self.materials.assets_dir {
            Some(dir) => MaterialDb::from_assets_dir(dir),
            None => MaterialDb::from_env(),
        }
    }

    pub fn solver(&self) -> Result<Solver> {
        Solver::from_settings(self.material_db()?, &self.optics())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
