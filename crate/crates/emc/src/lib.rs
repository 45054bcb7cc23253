//! File formats, pipeline stages and the command-line surface for
//! energy-microclimate analysis on top of [`emc_core`].

pub mod asc;
pub mod cluster;
pub mod config;
pub mod error;
pub mod features;
pub mod geojson;
pub mod manifest;
pub mod map;
pub mod numfmt;
pub mod reanalysis;
pub mod regress;
pub mod report;
pub mod synth;
pub mod tables;

pub use emc_core;
pub use error::{Error, Result};
