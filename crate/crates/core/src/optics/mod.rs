//! Characteristic-matrix (Abelès) solver for prism-coupled multilayer films.
//!
//! Conventions: fields vary as `exp(-iωt)`, indices are `n + iκ` with
//! `κ ≥ 0`, and the transverse invariant is `n_prism · sin θ₁`. Admittances
//! are in units of the free-space admittance, which cancels in the
//! reflection coefficient.

mod heatmap;

pub use heatmap::{resize_map, Grid, GridSpec, HeatMap, SPPM_MAGIC};

use std::ops::Mul;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{Layer, StructureVector};
use crate::error::{Error, Result};
use crate::materials::{MaterialDb, MaterialId};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Polarization {
    /// TM light; the only polarization that couples to surface plasmons.
    #[default]
    P,
    S,
}

/// One homogeneous film: complex index and thickness in nm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSlab {
    pub index: Complex64,
    pub thickness_nm: f64,
}

impl LayerSlab {
    pub fn new(index: Complex64, thickness_nm: f64) -> Self {
        Self {
            index,
            thickness_nm,
        }
    }
}

/// 2×2 complex characteristic matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicMatrix {
    pub m11: Complex64,
    pub m12: Complex64,
    pub m21: Complex64,
    pub m22: Complex64,
}

impl CharacteristicMatrix {
    pub const IDENTITY: Self = Self {
        m11: Complex64::new(1.0, 0.0),
        m12: Complex64::new(0.0, 0.0),
        m21: Complex64::new(0.0, 0.0),
        m22: Complex64::new(1.0, 0.0),
    };

    pub fn determinant(&self) -> Complex64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }
}

impl Mul for CharacteristicMatrix {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        Self {
            m11: self.m11 * rhs.m11 + self.m12 * rhs.m21,
            m12: self.m11 * rhs.m12 + self.m12 * rhs.m22,
            m21: self.m21 * rhs.m11 + self.m22 * rhs.m21,
            m22: self.m21 * rhs.m12 + self.m22 * rhs.m22,
        }
    }
}

/// `cos θ` inside a medium of index `n` given `kx_norm = n₁ sin θ₁`.
///
/// The square-root branch keeps `Im(n cos θ) ≥ 0` (decaying evanescent
/// fields), with `Re(n cos θ) ≥ 0` when the imaginary part is exactly zero.
pub fn snell_cosine(kx_norm: f64, n: Complex64) -> Complex64 {
    let s = Complex64::new(kx_norm, 0.0) / n;
    let mut cos = (Complex64::new(1.0, 0.0) - s * s).sqrt();
    let nc = n * cos;
    if nc.im < 0.0 || (nc.im == 0.0 && nc.re < 0.0) {
        cos = -cos;
    }
    cos
}

/// Tilted optical admittance: `n / cos θ` for p, `n cos θ` for s.
pub fn tilted_admittance(n: Complex64, cos_theta: Complex64, pol: Polarization) -> Result<Complex64> {
    match pol {
        Polarization::P => {
            if cos_theta == Complex64::new(0.0, 0.0) {
                return Err(Error::GrazingIncidence);
            }
            Ok(n / cos_theta)
        }
        Polarization::S => Ok(n * cos_theta),
    }
}

/// Phase thickness `2π n h cos θ / λ`.
pub fn phase_thickness(
    n: Complex64,
    thickness_nm: f64,
    wavelength_nm: f64,
    cos_theta: Complex64,
) -> Result<Complex64> {
    if !(wavelength_nm > 0.0) {
        return Err(Error::domain(format!("wavelength must be positive, got {wavelength_nm}")));
    }
    if !(thickness_nm >= 0.0) {
        return Err(Error::domain(format!("thickness must be non-negative, got {thickness_nm}")));
    }
    Ok(2.0 * std::f64::consts::PI * n * thickness_nm * cos_theta / wavelength_nm)
}

/// Single-layer characteristic matrix `[[cos δ, (i/η) sin δ], [iη sin δ, cos δ]]`.
pub fn layer_matrix(delta: Complex64, eta: Complex64) -> Result<CharacteristicMatrix> {
    if eta == Complex64::new(0.0, 0.0) {
        return Err(Error::SingularAdmittance);
    }
    let (c, s) = (delta.cos(), delta.sin());
    Ok(CharacteristicMatrix {
        m11: c,
        m12: I / eta * s,
        m21: I * eta * s,
        m22: c,
    })
}

/// Matrix of one slab at transverse invariant `kx_norm`.
///
/// `layer_matrix` is written for a forward phase of `exp(-iδ)`; under
/// `exp(-iωt)` the forward wave carries `exp(+iδ)`, so the slab enters with
/// `-δ`. With real δ the two differ only by conjugation; for absorbing or
/// evanescent layers the sign is what keeps R ≤ 1.
pub fn slab_matrix(
    slab: &LayerSlab,
    kx_norm: f64,
    wavelength_nm: f64,
    pol: Polarization,
) -> Result<CharacteristicMatrix> {
    let cos = snell_cosine(kx_norm, slab.index);
    let eta = tilted_admittance(slab.index, cos, pol)?;
    let delta = phase_thickness(slab.index, slab.thickness_nm, wavelength_nm, cos)?;
    layer_matrix(-delta, eta)
}

/// Product of the slab matrices in physical order from the incidence side.
pub fn stack_matrix_slabs(
    slabs: &[LayerSlab],
    kx_norm: f64,
    wavelength_nm: f64,
    pol: Polarization,
) -> Result<CharacteristicMatrix> {
    slabs.iter().try_fold(CharacteristicMatrix::IDENTITY, |acc, slab| {
        Ok(acc * slab_matrix(slab, kx_norm, wavelength_nm, pol)?)
    })
}

fn check_incidence_angle(theta_deg: f64) -> Result<()> {
    if !(0.0..90.0).contains(&theta_deg) {
        return Err(Error::domain(format!(
            "incidence angle must lie in [0, 90) degrees, got {theta_deg}"
        )));
    }
    Ok(())
}

/// Reflectance `|ρ|²` of slabs between a semi-infinite incidence medium and
/// a semi-infinite exit medium.
pub fn reflectance_slabs(
    incidence: Complex64,
    slabs: &[LayerSlab],
    exit: Complex64,
    wavelength_nm: f64,
    theta_deg: f64,
    pol: Polarization,
) -> Result<f64> {
    check_incidence_angle(theta_deg)?;
    let kx = incidence.re * theta_deg.to_radians().sin();
    let eta_in = tilted_admittance(incidence, snell_cosine(kx, incidence), pol)?;
    let eta_out = tilted_admittance(exit, snell_cosine(kx, exit), pol)?;
    let m = stack_matrix_slabs(slabs, kx, wavelength_nm, pol)?;
    reflectance_from_matrix(&m, eta_in, eta_out)
}

/// `ρ = [η₁(m11 + m12 η_k) − (m21 + m22 η_k)] / [η₁(m11 + m12 η_k) + (m21 + m22 η_k)]`, returns `|ρ|²`.
pub fn reflectance_from_matrix(
    m: &CharacteristicMatrix,
    eta_in: Complex64,
    eta_out: Complex64,
) -> Result<f64> {
    let b = m.m11 + m.m12 * eta_out;
    let c = m.m21 + m.m22 * eta_out;
    let den = eta_in * b + c;
    if den.norm() < 1e-300 {
        return Err(Error::DegenerateStack);
    }
    let rho = (eta_in * b - c) / den;
    Ok(rho.norm_sqr())
}

/// Optical setup shared by every simulation of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsSettings {
    pub prism_index: f64,
    pub incidence: MaterialId,
    pub exit: MaterialId,
    pub polarization: Polarization,
}

impl Default for OpticsSettings {
    fn default() -> Self {
        Self {
            prism_index: crate::materials::DEFAULT_PRISM_INDEX,
            incidence: MaterialId::Prism,
            exit: MaterialId::Air,
            polarization: Polarization::P,
        }
    }
}

/// Material database plus the incidence/exit media and polarization.
#[derive(Debug, Clone)]
pub struct Solver {
    pub db: MaterialDb,
    pub incidence: MaterialId,
    pub exit: MaterialId,
    pub polarization: Polarization,
}

impl Default for Solver {
    fn default() -> Self {
        Self::new(MaterialDb::builtin())
    }
}

impl Solver {
    /// Prism incidence, air exit, p-polarization.
    pub fn new(db: MaterialDb) -> Self {
        Self {
            db,
            incidence: MaterialId::Prism,
            exit: MaterialId::Air,
            polarization: Polarization::P,
        }
    }

    pub fn from_settings(db: MaterialDb, settings: &OpticsSettings) -> Result<Self> {
        Ok(Self {
            db: db.with_prism_index(settings.prism_index)?,
            incidence: settings.incidence,
            exit: settings.exit,
            polarization: settings.polarization,
        })
    }

    pub fn with_polarization(mut self, pol: Polarization) -> Self {
        self.polarization = pol;
        self
    }

    fn slabs(&self, layers: &[Layer], wavelength_nm: f64) -> Result<Vec<LayerSlab>> {
        layers
            .iter()
            .map(|l| {
                Ok(LayerSlab::new(
                    self.db.refractive_index(l.material, wavelength_nm)?,
                    l.thickness_nm,
                ))
            })
            .collect()
    }

    /// Total matrix of the intermediate layers (incidence and exit media excluded).
    pub fn stack_matrix(
        &self,
        layers: &[Layer],
        wavelength_nm: f64,
        theta_deg: f64,
    ) -> Result<CharacteristicMatrix> {
        check_incidence_angle(theta_deg)?;
        let n_in = self.db.refractive_index(self.incidence, wavelength_nm)?;
        let kx = n_in.re * theta_deg.to_radians().sin();
        stack_matrix_slabs(&self.slabs(layers, wavelength_nm)?, kx, wavelength_nm, self.polarization)
    }

    pub fn reflectance(&self, stack: &StructureVector, wavelength_nm: f64, theta_deg: f64) -> Result<f64> {
        let n_in = self.db.refractive_index(self.incidence, wavelength_nm)?;
        let n_out = self.db.refractive_index(self.exit, wavelength_nm)?;
        let slabs = self.slabs(&stack.layers, wavelength_nm)?;
        reflectance_slabs(n_in, &slabs, n_out, wavelength_nm, theta_deg, self.polarization)
    }

    /// Reflectance over every (angle, wavelength) cell; rows are angles.
    pub fn heat_map(&self, stack: &StructureVector, grid: &Grid) -> Result<HeatMap> {
        if grid.angles_deg.is_empty() || grid.wavelengths_nm.is_empty() {
            return Err(Error::domain("heat map grids must be non-empty"));
        }
        for &theta in &grid.angles_deg {
            check_incidence_angle(theta)?;
        }
        let rows = grid.angles_deg.len();
        let cols = grid.wavelengths_nm.len();

        // Column-major work: indices are resolved once per wavelength.
        let columns: Vec<Vec<f32>> = grid
            .wavelengths_nm
            .par_iter()
            .map(|&wl| -> Result<Vec<f32>> {
                let n_in = self.db.refractive_index(self.incidence, wl)?;
                let n_out = self.db.refractive_index(self.exit, wl)?;
                let slabs = self.slabs(&stack.layers, wl)?;
                grid.angles_deg
                    .iter()
                    .map(|&theta| {
                        let r = reflectance_slabs(n_in, &slabs, n_out, wl, theta, self.polarization)?;
                        Ok(r as f32)
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;

        let mut values = vec![0f32; rows * cols];
        for (c, col) in columns.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                values[r * cols + c] = v;
            }
        }
        HeatMap::new(rows, cols, values)
    }
}
