//! Forward simulation of prism-coupled multilayer metal/dielectric films and
//! cost-guided inverse design with a convolutional predictor.
//!
//! * [`materials`] – complex refractive indices of the film materials
//! * [`optics`] – characteristic-matrix solver and reflectance heat maps
//! * [`design`] – structure vectors, cost model, dataset generation and storage
//! * [`net`] – residual CNN, hybrid loss, gradients and Adam
//! * [`guided`] – low-cost sample replacement, guided training and metrics
//! * [`config`] – run configuration and the `desk`/`paper` presets

pub mod config;
pub mod design;
pub mod net;
pub mod error;
pub mod guided;
pub mod materials;
pub mod optics;

pub use error::{Error, Result};
