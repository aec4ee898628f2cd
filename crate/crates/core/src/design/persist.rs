//! Dataset directory layout:
//!
//! ```text
//! <dir>/manifest.json     spec, cost table, grid, optics, seed, sample index
//! <dir>/structures.json   one [[thickness_nm, "Material"], ...] list per sample
//! <dir>/maps/NNNN.sppm    one binary heat map per sample
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{cost, CostTable, Dataset, Sample, Split, StructureSpec, StructureVector};
use crate::error::{Error, Result};
use crate::optics::{GridSpec, HeatMap, OpticsSettings};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STRUCTURES_FILE: &str = "structures.json";
const FORMAT_TAG: &str = "spp-dataset";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    split: Split,
    seed: u64,
    spec: StructureSpec,
    cost_table: CostTable,
    grid: GridSpec,
    optics: OpticsSettings,
    structures_file: String,
    samples: Vec<SampleEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleEntry {
    id: u64,
    cost: f64,
    original_cost: f64,
    replaced: bool,
    map_file: String,
}

fn map_file_name(index: usize) -> String {
    format!("maps/{index:04}.sppm")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes the dataset under `dir`; returns the manifest path.
pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let maps_dir = dir.join("maps");
    std::fs::create_dir_all(&maps_dir).map_err(|e| Error::io(&maps_dir, e))?;

    let mut entries = Vec::with_capacity(ds.samples.len());
    for (i, s) in ds.samples.iter().enumerate() {
        let name = map_file_name(i);
        s.map.save(dir.join(&name))?;
        entries.push(SampleEntry {
            id: s.id,
            cost: s.cost,
            original_cost: s.original_cost,
            replaced: s.replaced,
            map_file: name,
        });
    }

    let structures: Vec<&StructureVector> = ds.samples.iter().map(|s| &s.structure).collect();
    write_json(&dir.join(STRUCTURES_FILE), &structures)?;

    let manifest = Manifest {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        split: ds.split,
        seed: ds.seed,
        spec: ds.spec.clone(),
        cost_table: ds.cost_table.clone(),
        grid: ds.grid,
        optics: ds.optics,
        structures_file: STRUCTURES_FILE.into(),
        samples: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Reads a dataset written by [`save_dataset`]. Consistency problems that do
/// not prevent loading are logged as warnings (see [`validate_dataset`]).
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = read_json(&manifest_path)?;
    if manifest.format != FORMAT_TAG || manifest.version != FORMAT_VERSION {
        return Err(Error::format(
            &manifest_path,
            format!("unsupported format {} v{}", manifest.format, manifest.version),
        ));
    }
    let structures_path = dir.join(&manifest.structures_file);
    let structures: Vec<StructureVector> = read_json(&structures_path)?;
    if structures.len() != manifest.samples.len() {
        return Err(Error::format(
            &structures_path,
            format!(
                "{} structures for {} manifest samples",
                structures.len(),
                manifest.samples.len()
            ),
        ));
    }

    let samples = manifest
        .samples
        .into_iter()
        .zip(structures)
        .map(|(e, structure)| {
            let map_path = dir.join(&e.map_file);
            let map = HeatMap::load(&map_path)?;
            if map.rows() != manifest.grid.angle_count || map.cols() != manifest.grid.wavelength_count {
                return Err(Error::format(
                    &map_path,
                    format!(
                        "map is {}x{}, grid requires {}x{}",
                        map.rows(),
                        map.cols(),
                        manifest.grid.angle_count,
                        manifest.grid.wavelength_count
                    ),
                ));
            }
            Ok(Sample {
                id: e.id,
                structure,
                map,
                cost: e.cost,
                original_cost: e.original_cost,
                replaced: e.replaced,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let ds = Dataset {
        split: manifest.split,
        seed: manifest.seed,
        spec: manifest.spec,
        cost_table: manifest.cost_table,
        grid: manifest.grid,
        optics: manifest.optics,
        samples,
    };
    for w in validate_dataset(&ds) {
        log::warn!("{}: {w}", dir.display());
    }
    Ok(ds)
}

/// Non-fatal invariant checks: stored cost vs. recomputed cost, spec
/// conformance, replaced-flag consistency.
pub fn validate_dataset(ds: &Dataset) -> Vec<String> {
    let mut warnings = Vec::new();
    for s in &ds.samples {
        match cost(&s.structure, &ds.cost_table) {
            Ok(c) if (c - s.cost).abs() > 1e-9 * c.abs().max(1.0) => warnings.push(format!(
                "sample {}: stored cost {} disagrees with recomputed cost {c}",
                s.id, s.cost
            )),
            Ok(_) => {}
            Err(e) => warnings.push(format!("sample {}: {e}", s.id)),
        }
        if let Err(e) = ds.spec.check(&s.structure) {
            warnings.push(format!("sample {}: {e}", s.id));
        }
        if s.replaced && !(s.cost < s.original_cost) {
            warnings.push(format!("sample {}: replaced but cost did not decrease", s.id));
        }
    }
    warnings
}
