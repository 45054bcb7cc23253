//! Allocation-only kernels for energy-microclimate analysis.
//!
//! The crate turns building footprints, raster scenes and hourly reanalysis
//! series into per-building monthly features, fits log-linear energy models
//! with VIF-pruned OLS, and clusters the per-feature contributions of those
//! models into energy microclimates (EMCs) with a Gaussian mixture.
//!
//! Everything here is `no_std` + `alloc`; file formats, orchestration and the
//! command-line surface live in the `emc` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod climate;
pub mod dataset;
pub mod emc;
mod error;
pub mod geo;
pub mod linalg;
pub mod math;
pub mod raster;
pub mod rng;
pub mod stats;
pub mod time;

pub use error::{Error, ErrorClass, Result};
