//! Modeling toolkit for capacitively shunted three-junction flux qubits:
//! circuit spectra, spectroscopy fitting, dephasing under 1/f noise,
//! multilevel relaxation, photon shot noise, randomized benchmarking and
//! design optimization.

pub mod circuit;
pub mod config;
pub mod constants;
pub mod decoherence;
pub mod design;
pub mod eigen;
pub mod error;
pub mod lsq;
pub mod multilevel;
pub mod noise;
pub mod optim;
pub mod photon;
pub mod quad;
pub mod rb;
pub mod spectro;
pub mod table;

pub use circuit::{BiasPoint, CapacitanceSet, CircuitParams, Spectrum, Truncation};
pub use error::{Error, Result};
