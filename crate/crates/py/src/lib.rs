//! Python bindings for a handful of `csfq` entry points.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use csfq::circuit::sweep_flux;
use csfq::config::DeviceConfig;
use csfq::constants::to_ghz;
use csfq::decoherence::{coherence_numeric as coh, gamma_n as gamma, PowerLawPsd};
use csfq::rb::{fit_rb, run_rb, RbBackend, RbConfig};
use csfq::{BiasPoint, Truncation};

const BUILTIN_DEVICE: &str = include_str!("../../../data/device_paper.cfg");

fn err(e: csfq::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Text of the bundled device file.
#[pyfunction]
fn default_device() -> &'static str {
    BUILTIN_DEVICE
}

/// (f01, f12, f02) in GHz at each reduced flux.
#[pyfunction]
#[pyo3(signature = (fluxes, device=None, nmax=12))]
fn spectrum(fluxes: Vec<f64>, device: Option<&str>, nmax: usize) -> PyResult<Vec<(f64, f64, f64)>> {
    let d = DeviceConfig::parse(device.unwrap_or(BUILTIN_DEVICE)).map_err(err)?;
    let sp = sweep_flux(&d.circuit, &BiasPoint::at_flux(0.5), &fluxes, 3, Truncation { nmax }).map_err(err)?;
    sp.iter()
        .map(|s| Ok((to_ghz(s.transition(0, 1)?), to_ghz(s.transition(1, 2)?), to_ghz(s.transition(0, 2)?))))
        .collect::<csfq::Result<_>>()
        .map_err(err)
}

/// Characteristic CPMG decay rate for frequency noise A/w^alpha.
#[pyfunction]
fn gamma_n(a: f64, alpha: f64, n: u32) -> f64 {
    gamma(a, alpha, n)
}

/// CPMG coherence by direct integration over [w_min, w_max] (rad/s).
#[pyfunction]
fn coherence_numeric(a: f64, alpha: f64, w_min: f64, w_max: f64, n: u32, tau: f64) -> PyResult<f64> {
    let psd = PowerLawPsd::new(a, alpha, w_min, w_max).map_err(err)?;
    coh(&psd, n, tau).map_err(err)
}

/// Mean photon number of a mode at temperature (K) and angular frequency.
#[pyfunction]
fn n_thermal(temperature: f64, omega: f64) -> PyResult<f64> {
    csfq::photon::n_thermal(temperature, omega).map_err(err)
}

/// Fitted average gate fidelity of a depolarizing-channel RB run.
#[pyfunction]
#[pyo3(signature = (p, lengths, randomizations=8, seed=0))]
fn rb_depolarizing(p: f64, lengths: Vec<usize>, randomizations: usize, seed: u64) -> PyResult<f64> {
    let cfg = RbConfig { lengths, randomizations, seed, ..Default::default() };
    let recs = run_rb(&cfg, &RbBackend::Depolarizing { p }).map_err(err)?;
    Ok(fit_rb(&recs).map_err(err)?.f_ave)
}

#[pymodule]
fn csfq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(default_device, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_n, m)?)?;
    m.add_function(wrap_pyfunction!(coherence_numeric, m)?)?;
    m.add_function(wrap_pyfunction!(n_thermal, m)?)?;
    m.add_function(wrap_pyfunction!(rb_depolarizing, m)?)?;
    Ok(())
}
