//! Python module `spp_design`.
//!
//! Layers are `(thickness_nm, material)` tuples with material names such as
//! `"Au"` or `"SiO2"`; heat maps are lists of rows (angles) of reflectance
//! values (wavelengths).

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use spp_core::config::{Preset, RunConfig};
use spp_core::design::{self, CostTable, Layer, Split, StructureVector};
use spp_core::guided::{map_distance as core_distance, NetPredictor, StructurePredictor};
use spp_core::materials::MaterialId;
use spp_core::net::{Checkpoint, Network};
use spp_core::optics::{GridSpec, HeatMap, Polarization, Solver};
use spp_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Format { .. } | Error::Parse { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn structure(layers: Vec<(f64, String)>) -> PyResult<StructureVector> {
    layers
        .into_iter()
        .map(|(h, m)| Ok(Layer::new(h, m.parse::<MaterialId>().map_err(py_err)?)))
        .collect::<PyResult<_>>()
        .map(StructureVector::new)
}

fn layers_out(sv: &StructureVector) -> Vec<(f64, String)> {
    sv.layers.iter().map(|l| (l.thickness_nm, l.material.name().to_string())).collect()
}

fn rows_out(map: &HeatMap) -> Vec<Vec<f32>> {
    map.values().chunks(map.cols()).map(<[f32]>::to_vec).collect()
}

fn map_in(rows: Vec<Vec<f32>>) -> PyResult<HeatMap> {
    let (r, c) = (rows.len(), rows.first().map_or(0, Vec::len));
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("heat map rows must all have the same length"));
    }
    HeatMap::new(r, c, rows.concat()).map_err(py_err)
}

fn solver(polarization: &str, prism_index: f64) -> PyResult<Solver> {
    let pol = match polarization {
        "P" | "p" => Polarization::P,
        "S" | "s" => Polarization::S,
        other => return Err(PyValueError::new_err(format!("polarization must be P or S, got {other:?}"))),
    };
    let db = spp_core::materials::MaterialDb::builtin()
        .with_prism_index(prism_index)
        .map_err(py_err)?;
    Ok(Solver::new(db).with_polarization(pol))
}

fn preset(name: &str) -> PyResult<RunConfig> {
    Ok(RunConfig::preset(name.parse::<Preset>().map_err(py_err)?))
}

/// Reflectance of a stack between the prism and air.
#[pyfunction]
#[pyo3(signature = (layers, wavelength_nm, theta_deg, polarization = "P", prism_index = 1.52))]
fn reflectance(
    layers: Vec<(f64, String)>,
    wavelength_nm: f64,
    theta_deg: f64,
    polarization: &str,
    prism_index: f64,
) -> PyResult<f64> {
    solver(polarization, prism_index)?
        .reflectance(&structure(layers)?, wavelength_nm, theta_deg)
        .map_err(py_err)
}

/// Reflectance over the standard angle × wavelength grid.
#[pyfunction]
#[pyo3(signature = (layers, angle_count = 64, wavelength_count = 64, polarization = "P", prism_index = 1.52))]
fn heat_map(
    layers: Vec<(f64, String)>,
    angle_count: usize,
    wavelength_count: usize,
    polarization: &str,
    prism_index: f64,
) -> PyResult<Vec<Vec<f32>>> {
    let grid = GridSpec {
        angle_count,
        wavelength_count,
        ..GridSpec::desk()
    }
    .build()
    .map_err(py_err)?;
    let map = solver(polarization, prism_index)?
        .heat_map(&structure(layers)?, &grid)
        .map_err(py_err)?;
    Ok(rows_out(&map))
}

/// Material cost `Σ thickness · price`; `prices` defaults to the fitted table.
#[pyfunction]
#[pyo3(signature = (layers, prices = None))]
fn cost(layers: Vec<(f64, String)>, prices: Option<HashMap<String, f64>>) -> PyResult<f64> {
    let table = match prices {
        None => CostTable::fitted(),
        Some(p) => CostTable::new(
            p.into_iter()
                .map(|(m, v)| Ok((m.parse::<MaterialId>().map_err(py_err)?, v)))
                .collect::<PyResult<Vec<_>>>()?,
        )
        .map_err(py_err)?,
    };
    design::cost(&structure(layers)?, &table).map_err(py_err)
}

/// Relative L1 distance `Σ|a − b| / Σ|a|` between two maps.
#[pyfunction]
fn map_distance(reference: Vec<Vec<f32>>, other: Vec<Vec<f32>>) -> PyResult<f64> {
    core_distance(&map_in(reference)?, &map_in(other)?).map_err(py_err)
}

type SampleParts = (Vec<(f64, String)>, Vec<Vec<f32>>, f64);

/// A generated or loaded dataset.
#[pyclass(frozen)]
struct Dataset {
    inner: design::Dataset,
}

#[pymethods]
impl Dataset {
    /// Generates `count` random samples with a preset's structure, grid and prices.
    #[staticmethod]
    #[pyo3(signature = (count, seed, split = "train", preset = "desk"))]
    fn generate(py: Python<'_>, count: usize, seed: u64, split: &str, preset: &str) -> PyResult<Self> {
        let split = match split {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(PyValueError::new_err(format!("split must be train or test, got {other:?}"))),
        };
        let cfg = self::preset(preset)?;
        let setup = cfg.generation_setup();
        let solver = cfg.solver().map_err(py_err)?;
        let inner = py
            .detach(|| design::generate_dataset(count, &setup, &solver, seed, split))
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: design::load_dataset(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        design::save_dataset(&self.inner, path).map(|_| ()).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn mean_cost(&self) -> f64 {
        self.inner.mean_cost()
    }

    /// `(layers, map, cost)` of sample `index`.
    fn sample(&self, index: usize) -> PyResult<SampleParts> {
        let s = self
            .inner
            .samples
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("sample {index} out of range")))?;
        Ok((layers_out(&s.structure), rows_out(&s.map), s.cost))
    }
}

/// A trained network loaded from a checkpoint.
#[pyclass(frozen)]
struct Model {
    net: Network,
    cfg: RunConfig,
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (path, preset = "desk"))]
    fn load(path: PathBuf, preset: &str) -> PyResult<Self> {
        let cfg = self::preset(preset)?;
        let ck = Checkpoint::load(path).map_err(py_err)?;
        let (net, _) = ck.restore(cfg.network_config(), &cfg.structure).map_err(py_err)?;
        Ok(Self { net, cfg })
    }

    /// Freshly initialized (untrained) network for a preset.
    #[staticmethod]
    #[pyo3(signature = (seed, preset = "desk"))]
    fn untrained(seed: u64, preset: &str) -> PyResult<Self> {
        let cfg = self::preset(preset)?;
        let net = Network::new(cfg.network_config(), seed).map_err(py_err)?;
        Ok(Self { net, cfg })
    }

    fn num_params(&self) -> usize {
        self.net.num_params()
    }

    /// Predicted layers for a heat map.
    fn predict(&self, py: Python<'_>, map: Vec<Vec<f32>>) -> PyResult<Vec<(f64, String)>> {
        let map = map_in(map)?;
        let sv = py
            .detach(|| {
                NetPredictor {
                    net: &self.net,
                    spec: &self.cfg.structure,
                }
                .predict(&map)
            })
            .map_err(py_err)?;
        Ok(layers_out(&sv))
    }
}

#[pymodule]
fn spp_design(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(reflectance, m)?)?;
    m.add_function(wrap_pyfunction!(heat_map, m)?)?;
    m.add_function(wrap_pyfunction!(cost, m)?)?;
    m.add_function(wrap_pyfunction!(map_distance, m)?)?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    Ok(())
}
