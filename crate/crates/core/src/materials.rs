//! Optical constants of the film, prism and ambient materials.
//!
//! Every material maps to a [`DispersionModel`] giving the complex refractive
//! index `n + iκ` (time dependence `exp(-iωt)`, so absorbing media have
//! `κ ≥ 0`). Metals ship as `wavelength_nm,n,k` tables embedded at compile
//! time; the same files live under `crates/core/assets/materials/` and can be
//! replaced at run time with [`MaterialDb::from_assets_dir`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable that overrides the assets directory.
pub const ASSETS_ENV: &str = "SPP_ASSETS_DIR";

/// Default index of the coupling prism.
pub const DEFAULT_PRISM_INDEX: f64 = 1.52;

const AU_CSV: &str = include_str!("../assets/materials/au.csv");
const AG_CSV: &str = include_str!("../assets/materials/ag.csv");
const CU_CSV: &str = include_str!("../assets/materials/cu.csv");
const AL_CSV: &str = include_str!("../assets/materials/al.csv");

const TABLE_PROVENANCE: &str =
    "Rakic et al., Appl. Opt. 37, 5271 (1998) Lorentz-Drude parameters, tabulated every 10 nm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MaterialId {
    Au,
    Ag,
    Cu,
    Al,
    SiO2,
    Prism,
    Air,
}

impl MaterialId {
    pub const ALL: [MaterialId; 7] = [
        MaterialId::Au,
        MaterialId::Ag,
        MaterialId::Cu,
        MaterialId::Al,
        MaterialId::SiO2,
        MaterialId::Prism,
        MaterialId::Air,
    ];

    /// Metal palette in class-index order used by the network heads.
    pub const METALS: [MaterialId; 4] = [
        MaterialId::Au,
        MaterialId::Ag,
        MaterialId::Cu,
        MaterialId::Al,
    ];

    pub fn is_metal(self) -> bool {
        Self::METALS.contains(&self)
    }

    pub fn name(self) -> &'static str {
        match self {
            MaterialId::Au => "Au",
            MaterialId::Ag => "Ag",
            MaterialId::Cu => "Cu",
            MaterialId::Al => "Al",
            MaterialId::SiO2 => "SiO2",
            MaterialId::Prism => "Prism",
            MaterialId::Air => "Air",
        }
    }

    fn table_file(self) -> Option<&'static str> {
        match self {
            MaterialId::Au => Some("au.csv"),
            MaterialId::Ag => Some("ag.csv"),
            MaterialId::Cu => Some("cu.csv"),
            MaterialId::Al => Some("al.csv"),
            _ => None,
        }
    }
}

impl fmt::Display for MaterialId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaterialId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MaterialId::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown material `{s}`")))
    }
}

/// Tabulated `(wavelength, n, κ)` samples with strictly increasing wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedIndex {
    wavelengths_nm: Vec<f64>,
    n: Vec<f64>,
    k: Vec<f64>,
}

impl TabulatedIndex {
    pub fn new(samples: &[(f64, f64, f64)]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::domain("a tabulated model needs at least two samples"));
        }
        for (i, &(wl, n, k)) in samples.iter().enumerate() {
            check_sample(wl, n, k).map_err(Error::Domain)?;
            if i > 0 && wl <= samples[i - 1].0 {
                return Err(Error::domain(format!(
                    "wavelengths not strictly increasing at {wl} nm"
                )));
            }
        }
        Ok(Self {
            wavelengths_nm: samples.iter().map(|s| s.0).collect(),
            n: samples.iter().map(|s| s.1).collect(),
            k: samples.iter().map(|s| s.2).collect(),
        })
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.wavelengths_nm
            .iter()
            .zip(&self.n)
            .zip(&self.k)
            .map(|((&w, &n), &k)| (w, n, k))
    }

    pub fn range(&self) -> (f64, f64) {
        (self.wavelengths_nm[0], *self.wavelengths_nm.last().unwrap())
    }

    fn interpolate(&self, wavelength_nm: f64) -> Complex64 {
        let w = &self.wavelengths_nm;
        // First index with w[hi] >= wavelength; the caller has range-checked.
        let hi = w.partition_point(|&x| x < wavelength_nm).max(1);
        let lo = hi - 1;
        if w[hi] == wavelength_nm {
            return Complex64::new(self.n[hi], self.k[hi]);
        }
        let t = (wavelength_nm - w[lo]) / (w[hi] - w[lo]);
        let n = self.n[lo] + t * (self.n[hi] - self.n[lo]);
        let k = self.k[lo] + t * (self.k[hi] - self.k[lo]);
        Complex64::new(n, k)
    }
}

fn check_sample(wl: f64, n: f64, k: f64) -> std::result::Result<(), String> {
    if !(wl.is_finite() && n.is_finite() && k.is_finite()) {
        return Err("non-finite value".into());
    }
    if wl <= 0.0 {
        return Err(format!("wavelength must be positive, got {wl}"));
    }
    if n <= 0.0 {
        return Err(format!("n must be positive, got {n}"));
    }
    if k < 0.0 {
        return Err(format!("k must be non-negative, got {k}"));
    }
    Ok(())
}

/// Three-term Sellmeier model `n² = 1 + Σ B λ² / (λ² − C)`, λ in µm, C in µm².
#[derive(Debug, Clone, PartialEq)]
pub struct Sellmeier {
    pub terms: Vec<(f64, f64)>,
    pub min_nm: f64,
    pub max_nm: f64,
}

impl Sellmeier {
    /// Fused silica, Malitson (1965). Valid 210–6700 nm.
    pub fn fused_silica() -> Self {
        Self {
            terms: vec![
                (0.696_166_3, 0.068_404_3 * 0.068_404_3),
                (0.407_942_6, 0.116_241_4 * 0.116_241_4),
                (0.897_479_4, 9.896_161 * 9.896_161),
            ],
            min_nm: 210.0,
            max_nm: 6700.0,
        }
    }

    fn index(&self, wavelength_nm: f64) -> f64 {
        let l2 = (wavelength_nm * 1e-3).powi(2);
        let n2 = 1.0 + self.terms.iter().map(|&(b, c)| b * l2 / (l2 - c)).sum::<f64>();
        n2.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DispersionModel {
    Tabulated(TabulatedIndex),
    Sellmeier(Sellmeier),
    /// Non-dispersive real index, valid at every positive wavelength.
    Constant(f64),
}

impl DispersionModel {
    pub fn coverage(&self) -> (f64, f64) {
        match self {
            DispersionModel::Tabulated(t) => t.range(),
            DispersionModel::Sellmeier(s) => (s.min_nm, s.max_nm),
            DispersionModel::Constant(_) => (0.0, f64::INFINITY),
        }
    }

    fn evaluate(&self, wavelength_nm: f64) -> Complex64 {
        match self {
            DispersionModel::Tabulated(t) => t.interpolate(wavelength_nm),
            DispersionModel::Sellmeier(s) => Complex64::new(s.index(wavelength_nm), 0.0),
            DispersionModel::Constant(n) => Complex64::new(*n, 0.0),
        }
    }

    /// Serializes a tabulated model to the `wavelength_nm,n,k` CSV schema.
    pub fn to_csv(&self) -> Result<String> {
        let DispersionModel::Tabulated(t) = self else {
            return Err(Error::domain("only tabulated models have a CSV form"));
        };
        let mut out = String::from("wavelength_nm,n,k\n");
        for (w, n, k) in t.samples() {
            // `{}` on f64 prints the shortest representation that round-trips.
            out.push_str(&format!("{w},{n},{k}\n"));
        }
        Ok(out)
    }
}

/// Parses the `wavelength_nm,n,k` CSV schema into a tabulated model.
pub fn parse_material_csv(text: &str, source_name: &str) -> Result<DispersionModel> {
    let parse_err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim().trim_start_matches('\u{feff}') == "wavelength_nm,n,k" => {}
        Some((_, header)) => {
            return Err(parse_err(1, format!("expected header `wavelength_nm,n,k`, got `{header}`")))
        }
        None => return Err(parse_err(1, "empty file".into())),
    }

    let mut samples: Vec<(f64, f64, f64)> = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(line_no, format!("expected 3 fields, got {}", fields.len())));
        }
        let mut vals = [0.0; 3];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f
                .parse::<f64>()
                .map_err(|e| parse_err(line_no, format!("bad number `{f}`: {e}")))?;
        }
        let [wl, n, k] = vals;
        check_sample(wl, n, k).map_err(|m| parse_err(line_no, m))?;
        if let Some(&(prev, _, _)) = samples.last() {
            if wl <= prev {
                return Err(parse_err(
                    line_no,
                    format!("wavelength {wl} not greater than previous {prev}"),
                ));
            }
        }
        samples.push((wl, n, k));
    }
    if samples.len() < 2 {
        return Err(parse_err(1, "need at least two data rows".into()));
    }
    Ok(DispersionModel::Tabulated(TabulatedIndex::new(&samples)?))
}

/// Loads a material table from a CSV file.
pub fn load_material_table(path: impl AsRef<Path>) -> Result<DispersionModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_material_csv(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialEntry {
    pub model: DispersionModel,
    pub provenance: String,
}

/// Read-only material database; one entry per [`MaterialId`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialDb {
    entries: BTreeMap<MaterialId, MaterialEntry>,
}

impl Default for MaterialDb {
    fn default() -> Self {
        Self::builtin()
    }
}

impl MaterialDb {
    /// Database backed by the tables compiled into the crate.
    pub fn builtin() -> Self {
        let mut entries = BTreeMap::new();
        for (id, csv) in [
            (MaterialId::Au, AU_CSV),
            (MaterialId::Ag, AG_CSV),
            (MaterialId::Cu, CU_CSV),
            (MaterialId::Al, AL_CSV),
        ] {
            let model = parse_material_csv(csv, id.table_file().unwrap())
                .expect("embedded material table is valid");
            entries.insert(
                id,
                MaterialEntry {
                    model,
                    provenance: TABLE_PROVENANCE.to_string(),
                },
            );
        }
        entries.insert(
            MaterialId::SiO2,
            MaterialEntry {
                model: DispersionModel::Sellmeier(Sellmeier::fused_silica()),
                provenance: "Malitson (1965) fused-silica Sellmeier".into(),
            },
        );
        entries.insert(
            MaterialId::Prism,
            MaterialEntry {
                model: DispersionModel::Constant(DEFAULT_PRISM_INDEX),
                provenance: "constant crown-glass prism index".into(),
            },
        );
        entries.insert(
            MaterialId::Air,
            MaterialEntry {
                model: DispersionModel::Constant(1.0),
                provenance: "constant".into(),
            },
        );
        Self { entries }
    }

    /// Builtin database with the metal tables re-read from `dir`
    /// (`au.csv`, `ag.csv`, `cu.csv`, `al.csv`; missing files keep the builtin).
    pub fn from_assets_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut db = Self::builtin();
        for id in MaterialId::METALS {
            let path = dir.join(id.table_file().unwrap());
            if path.exists() {
                let model = load_material_table(&path)?;
                db.entries.insert(
                    id,
                    MaterialEntry {
                        model,
                        provenance: path.display().to_string(),
                    },
                );
            }
        }
        Ok(db)
    }

    /// Builtin database, or the one under `$SPP_ASSETS_DIR` when set.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(ASSETS_ENV) {
            Some(dir) => Self::from_assets_dir(dir),
            None => Ok(Self::builtin()),
        }
    }

    pub fn with_prism_index(mut self, n: f64) -> Result<Self> {
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Config(format!("prism index must be positive, got {n}")));
        }
        self.set(MaterialId::Prism, DispersionModel::Constant(n), "user prism index");
        Ok(self)
    }

    pub fn set(&mut self, id: MaterialId, model: DispersionModel, provenance: impl Into<String>) {
        self.entries.insert(
            id,
            MaterialEntry {
                model,
                provenance: provenance.into(),
            },
        );
    }

    pub fn entry(&self, id: MaterialId) -> &MaterialEntry {
        &self.entries[&id]
    }

    pub fn refractive_index(&self, id: MaterialId, wavelength_nm: f64) -> Result<Complex64> {
        refractive_index(self, id, wavelength_nm)
    }
}

/// Complex refractive index `n + iκ` of `material` at `wavelength_nm`.
pub fn refractive_index(db: &MaterialDb, material: MaterialId, wavelength_nm: f64) -> Result<Complex64> {
    let model = &db.entry(material).model;
    let (min_nm, max_nm) = model.coverage();
    let covered = wavelength_nm.is_finite()
        && wavelength_nm > 0.0
        && wavelength_nm >= min_nm
        && wavelength_nm <= max_nm;
    if !covered {
        return Err(Error::OutOfRange {
            material: material.to_string(),
            wavelength_nm,
            min_nm,
            max_nm,
        });
    }
    Ok(model.evaluate(wavelength_nm))
}
