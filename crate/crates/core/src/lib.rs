//! Graph signal processing toolkit for power-grid voltage phasor data.

pub mod cli;
pub mod codec;
pub mod config;
pub mod error;
pub mod fdi;
pub mod grid_model;
pub mod linalg;
pub mod recovery;
pub mod rng;
pub mod sampling;
pub mod spectral;
pub mod synthesis;

pub use error::{GspError, Result};
