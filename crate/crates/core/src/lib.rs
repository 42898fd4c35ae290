//! Jammer localization and classification from 4-patch antenna snapshots:
//! simulation, feature extraction, models, training and evaluation.

pub mod config;
pub mod dataset_io;
pub mod dsp;
pub mod error;
pub mod model;
pub mod sigsim;
pub mod train;

pub use error::{Error, Result};
