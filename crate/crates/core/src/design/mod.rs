//! Film stacks, their material cost, and randomly generated training data.

mod persist;

pub use persist::{load_dataset, save_dataset, validate_dataset, MANIFEST_FILE, STRUCTURES_FILE};

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::MaterialId;
use crate::optics::{GridSpec, HeatMap, OpticsSettings, Solver};

/// One film: thickness in nm and material. Serialized as `[thickness, "Mat"]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, MaterialId)", into = "(f64, MaterialId)")]
pub struct Layer {
    pub thickness_nm: f64,
    pub material: MaterialId,
}

impl Layer {
    pub fn new(thickness_nm: f64, material: MaterialId) -> Self {
        Self {
            thickness_nm,
            material,
        }
    }
}

impl From<(f64, MaterialId)> for Layer {
    fn from((thickness_nm, material): (f64, MaterialId)) -> Self {
        Self::new(thickness_nm, material)
    }
}

impl From<Layer> for (f64, MaterialId) {
    fn from(l: Layer) -> Self {
        (l.thickness_nm, l.material)
    }
}

/// Ordered layers from the prism side outwards.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StructureVector {
    pub layers: Vec<Layer>,
}

impl StructureVector {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Total thickness of each material, nm.
    pub fn material_totals(&self) -> BTreeMap<MaterialId, f64> {
        let mut out = BTreeMap::new();
        for l in &self.layers {
            *out.entry(l.material).or_insert(0.0) += l.thickness_nm;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerRole {
    Metal,
    Dielectric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThicknessRange {
    pub min_nm: f64,
    pub max_nm: f64,
}

impl ThicknessRange {
    pub fn new(min_nm: f64, max_nm: f64) -> Self {
        Self { min_nm, max_nm }
    }

    pub fn span(&self) -> f64 {
        self.max_nm - self.min_nm
    }

    pub fn contains(&self, h: f64) -> bool {
        h >= self.min_nm && h <= self.max_nm
    }

    /// Maps a thickness onto [0, 1]; a degenerate range maps to 0.
    pub fn normalize(&self, h: f64) -> f64 {
        if self.span() > 0.0 {
            (h - self.min_nm) / self.span()
        } else {
            0.0
        }
    }
}

/// Layer pattern: positions 1, 3, 5, … (counting from 1) are metal from the
/// palette, the others are the fixed dielectric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub layer_count: usize,
    pub metal_range: ThicknessRange,
    pub dielectric_range: ThicknessRange,
    pub palette: Vec<MaterialId>,
    pub dielectric: MaterialId,
}

impl StructureSpec {
    /// Ten alternating layers, as in the published examples.
    pub fn paper() -> Self {
        Self {
            layer_count: 10,
            metal_range: ThicknessRange::new(5.0, 10.0),
            dielectric_range: ThicknessRange::new(5.0, 40.0),
            palette: MaterialId::METALS.to_vec(),
            dielectric: MaterialId::SiO2,
        }
    }

    pub fn desk() -> Self {
        Self {
            layer_count: 6,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.layer_count < 2 {
            return bad(format!("layer_count must be >= 2, got {}", self.layer_count));
        }
        for (name, r) in [("metal", self.metal_range), ("dielectric", self.dielectric_range)] {
            if !(r.min_nm > 0.0 && r.min_nm <= r.max_nm && r.max_nm.is_finite()) {
                return bad(format!("{name} range [{}, {}] invalid", r.min_nm, r.max_nm));
            }
            if r.min_nm.ceil() > r.max_nm.floor() {
                return bad(format!("{name} range [{}, {}] holds no whole nm", r.min_nm, r.max_nm));
            }
        }
        if self.palette.is_empty() || self.palette.iter().any(|m| !m.is_metal()) {
            return bad(format!("palette must be non-empty metals, got {:?}", self.palette));
        }
        if self.dielectric.is_metal() {
            return bad("dielectric layer material must not be a metal".into());
        }
        Ok(())
    }

    pub fn role(&self, index: usize) -> LayerRole {
        if index.is_multiple_of(2) {
            LayerRole::Metal
        } else {
            LayerRole::Dielectric
        }
    }

    pub fn range(&self, role: LayerRole) -> ThicknessRange {
        match role {
            LayerRole::Metal => self.metal_range,
            LayerRole::Dielectric => self.dielectric_range,
        }
    }

    pub fn metal_layer_count(&self) -> usize {
        self.layer_count.div_ceil(2)
    }

    pub fn palette_index(&self, m: MaterialId) -> Option<usize> {
        self.palette.iter().position(|&p| p == m)
    }

    /// Checks pattern, palette and thickness bounds.
    pub fn check(&self, sv: &StructureVector) -> Result<()> {
        if sv.len() != self.layer_count {
            return Err(Error::domain(format!(
                "structure has {} layers, spec requires {}",
                sv.len(),
                self.layer_count
            )));
        }
        for (i, l) in sv.layers.iter().enumerate() {
            let role = self.role(i);
            let ok_material = match role {
                LayerRole::Metal => self.palette.contains(&l.material),
                LayerRole::Dielectric => l.material == self.dielectric,
            };
            if !ok_material {
                return Err(Error::domain(format!("layer {}: material {} not allowed", i + 1, l.material)));
            }
            if !self.range(role).contains(l.thickness_nm) {
                return Err(Error::domain(format!(
                    "layer {}: thickness {} nm outside role range",
                    i + 1,
                    l.thickness_nm
                )));
            }
        }
        Ok(())
    }
}

/// Per-nm price of each material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostTable {
    pub prices: BTreeMap<MaterialId, f64>,
}

impl Default for CostTable {
    fn default() -> Self {
        Self::fitted()
    }
}

impl CostTable {
    pub fn new(prices: impl IntoIterator<Item = (MaterialId, f64)>) -> Result<Self> {
        let table = Self {
            prices: prices.into_iter().collect(),
        };
        if let Some((m, p)) = table.prices.iter().find(|(_, p)| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::Config(format!("price of {m} must be non-negative, got {p}")));
        }
        Ok(table)
    }

    /// Non-negative least-squares fit of per-nm prices to the six published
    /// structure costs (1996, 2656, 226, 6601, 6901, 3001). Residuals:
    /// +15.66, −14.03, +0.35, +0.45, +0.51, −0.34.
    pub fn fitted() -> Self {
        Self::new([
            (MaterialId::Au, 300.0659),
            (MaterialId::Ag, 15.0902),
            (MaterialId::Cu, 0.0),
            (MaterialId::Al, 0.0),
            (MaterialId::SiO2, 0.0),
        ])
        .unwrap()
    }

    pub fn price(&self, m: MaterialId) -> Result<f64> {
        self.prices.get(&m).copied().ok_or(Error::MissingCost(m))
    }

    pub fn covers(&self, spec: &StructureSpec) -> Result<()> {
        for &m in spec.palette.iter().chain(std::iter::once(&spec.dielectric)) {
            self.price(m)?;
        }
        Ok(())
    }
}

/// `Σ h · price(material)` over the layers.
pub fn cost(sv: &StructureVector, table: &CostTable) -> Result<f64> {
    sv.layers
        .iter()
        .map(|l| Ok(l.thickness_nm * table.price(l.material)?))
        .sum()
}

/// Random stack: whole-nm thicknesses uniform over the role range, metals
/// uniform over the palette.
pub fn random_structure(spec: &StructureSpec, rng: &mut impl Rng) -> StructureVector {
    let layers = (0..spec.layer_count)
        .map(|i| {
            let role = spec.role(i);
            let r = spec.range(role);
            let h = rng.random_range(r.min_nm.ceil() as i64..=r.max_nm.floor() as i64) as f64;
            let material = match role {
                LayerRole::Metal => spec.palette[rng.random_range(0..spec.palette.len())],
                LayerRole::Dielectric => spec.dielectric,
            };
            Layer::new(h, material)
        })
        .collect();
    StructureVector::new(layers)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// ChaCha stream id; train and test draw from disjoint streams.
    pub fn stream(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }
}

/// Seeded generator used everywhere in the crate (ChaCha8, stream per split).
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    /// Current target structure (may be replaced by a cheaper equivalent).
    pub structure: StructureVector,
    /// The required spectrum; fixed at generation time.
    pub map: HeatMap,
    pub cost: f64,
    pub original_cost: f64,
    pub replaced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub seed: u64,
    pub spec: StructureSpec,
    pub cost_table: CostTable,
    pub grid: GridSpec,
    pub optics: OpticsSettings,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_cost(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.cost).sum::<f64>() / self.samples.len() as f64
    }

    pub fn replaced_count(&self) -> usize {
        self.samples.iter().filter(|s| s.replaced).count()
    }
}

/// Everything needed to generate a dataset besides count and seed.
#[derive(Debug, Clone)]
pub struct GenerationSetup {
    pub spec: StructureSpec,
    pub grid: GridSpec,
    pub cost_table: CostTable,
    pub optics: OpticsSettings,
}

/// Draws `n` structures sequentially from the split's stream, then simulates
/// their maps in parallel. Output is independent of the worker count.
pub fn generate_dataset(
    n: usize,
    setup: &GenerationSetup,
    solver: &Solver,
    seed: u64,
    split: Split,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::domain("dataset size must be at least 1"));
    }
    setup.spec.validate()?;
    setup.cost_table.covers(&setup.spec)?;
    let grid = setup.grid.build()?;

    let mut rng = seeded_rng(seed, split.stream());
    let structures: Vec<StructureVector> = (0..n).map(|_| random_structure(&setup.spec, &mut rng)).collect();

    let samples = structures
        .into_par_iter()
        .enumerate()
        .map(|(i, structure)| {
            let map = solver.heat_map(&structure, &grid)?;
            let c = cost(&structure, &setup.cost_table)?;
            Ok(Sample {
                id: i as u64,
                structure,
                map,
                cost: c,
                original_cost: c,
                replaced: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Dataset {
        split,
        seed,
        spec: setup.spec.clone(),
        cost_table: setup.cost_table.clone(),
        grid: setup.grid,
        optics: setup.optics,
        samples,
    })
}
