//! Device description files: `[section]` headers and `key = value unit`
//! lines, `#` comments. Values are stored in SI (angular frequencies in
//! rad/s) and emitted in SI so that a round trip is exact.

use std::fmt::Write as _;

use crate::circuit::{CapacitanceSet, CavityParams, CircuitParams};
use crate::constants::TWO_PI;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Dim {
    Capacitance,
    Area,
    CurrentDensity,
    CapPerArea,
    Frequency,
    Voltage,
    Pure,
}

fn unit_scale(dim: Dim, unit: &str) -> Option<f64> {
    let s = match (dim, unit) {
        (Dim::Capacitance, "F") => 1.0,
        (Dim::Capacitance, "pF") => 1e-12,
        (Dim::Capacitance, "fF") => 1e-15,
        (Dim::Capacitance, "aF") => 1e-18,
        (Dim::Area, "m^2") => 1.0,
        (Dim::Area, "um^2") => 1e-12,
        (Dim::Area, "nm^2") => 1e-18,
        (Dim::CurrentDensity, "A/m^2") => 1.0,
        (Dim::CurrentDensity, "uA/um^2") => 1e6,
        (Dim::CurrentDensity, "kA/cm^2") => 1e7,
        (Dim::CapPerArea, "F/m^2") => 1.0,
        (Dim::CapPerArea, "fF/um^2") => 1e-3,
        (Dim::Frequency, "rad/s") => 1.0,
        (Dim::Frequency, "Hz") => TWO_PI,
        (Dim::Frequency, "kHz") => TWO_PI * 1e3,
        (Dim::Frequency, "MHz") => TWO_PI * 1e6,
        (Dim::Frequency, "GHz") => TWO_PI * 1e9,
        (Dim::Voltage, "V") => 1.0,
        (Dim::Voltage, "mV") => 1e-3,
        (Dim::Voltage, "uV") => 1e-6,
        (Dim::Voltage, "nV") => 1e-9,
        (Dim::Pure, "") => 1.0,
        _ => return None,
    };
    Some(s)
}

fn si_unit(dim: Dim) -> &'static str {
    match dim {
        Dim::Capacitance => "F",
        Dim::Area => "m^2",
        Dim::CurrentDensity => "A/m^2",
        Dim::CapPerArea => "F/m^2",
        Dim::Frequency => "rad/s",
        Dim::Voltage => "V",
        Dim::Pure => "",
    }
}

const CAP_KEYS: [&str; 12] = ["c12", "c13", "c23", "c01", "c02", "c03", "c1b", "c2b", "c3b", "c1d", "c2d", "c3d"];

fn key_dim(section: &str, key: &str) -> Option<Dim> {
    match (section, key) {
        ("capacitance", k) if CAP_KEYS.contains(&k) => Some(Dim::Capacitance),
        ("junction", "jc") => Some(Dim::CurrentDensity),
        ("junction", "alpha") => Some(Dim::Pure),
        ("junction", "area_large") => Some(Dim::Area),
        ("junction", "c_tilde") => Some(Dim::CapPerArea),
        ("cavity", "omega_r") => Some(Dim::Frequency),
        ("cavity", "q_factor") => Some(Dim::Pure),
        ("cavity", "v_rms") => Some(Dim::Voltage),
        ("cavity", "chi") => Some(Dim::Frequency),
        _ => None,
    }
}

/// Cavity block; `chi` is the per-photon qubit shift used by the photon
/// noise model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavityConfig {
    pub params: CavityParams,
    pub chi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviceConfig {
    pub circuit: CircuitParams,
    /// Specific junction capacitance, F/m^2.
    pub c_tilde: f64,
    pub cavity: Option<CavityConfig>,
}

fn perr<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

impl DeviceConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut section = String::new();
        let mut vals: Vec<(String, String, f64, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or(Error::Parse { line: ln, msg: "unterminated section".into() })?;
                let name = name.trim();
                if !["capacitance", "junction", "cavity"].contains(&name) {
                    return perr(ln, format!("unknown section [{name}]"));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse { line: ln, msg: "expected key = value".into() })?;
            let key = key.trim();
            if section.is_empty() {
                return perr(ln, "key outside any section");
            }
            let dim = key_dim(&section, key).ok_or(Error::Parse { line: ln, msg: format!("unknown key {section}.{key}") })?;
            let mut parts = value.split_whitespace();
            let num = parts.next().ok_or(Error::Parse { line: ln, msg: "missing value".into() })?;
            let unit = parts.next().unwrap_or("");
            if parts.next().is_some() {
                return perr(ln, "trailing text after unit");
            }
            let x: f64 = num.parse().map_err(|_| Error::Parse { line: ln, msg: format!("bad number '{num}'") })?;
            if !x.is_finite() {
                return perr(ln, "value must be finite");
            }
            let scale = unit_scale(dim, unit).ok_or(Error::Parse {
                line: ln,
                msg: if unit.is_empty() { format!("{key} needs a unit") } else { format!("unit '{unit}' not valid for {key}") },
            })?;
            if vals.iter().any(|v| v.0 == section && v.1 == key) {
                return perr(ln, format!("duplicate key {key}"));
            }
            vals.push((section.clone(), key.to_string(), x * scale, ln));
        }
        let get = |s: &str, k: &str| vals.iter().find(|v| v.0 == s && v.1 == k).map(|v| v.2);
        let need = |s: &str, k: &str| get(s, k).ok_or(Error::Parse { line: 0, msg: format!("missing {s}.{k}") });
        let mut c = [0.0; 12];
        for (slot, k) in c.iter_mut().zip(CAP_KEYS) {
            *slot = get("capacitance", k).unwrap_or(0.0);
        }
        for k in ["c12", "c13", "c23", "c01", "c02", "c03"] {
            need("capacitance", k)?;
        }
        let caps = CapacitanceSet {
            c12: c[0],
            c13: c[1],
            c23: c[2],
            c01: c[3],
            c02: c[4],
            c03: c[5],
            c1b: c[6],
            c2b: c[7],
            c3b: c[8],
            c1d: c[9],
            c2d: c[10],
            c3d: c[11],
        };
        let circuit = CircuitParams {
            caps,
            jc: need("junction", "jc")?,
            alpha: need("junction", "alpha")?,
            area_large: need("junction", "area_large")?,
        };
        circuit.validate().map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
        let cavity = if vals.iter().any(|v| v.0 == "cavity") {
            Some(CavityConfig {
                params: CavityParams {
                    omega_r: need("cavity", "omega_r")?,
                    q_factor: need("cavity", "q_factor")?,
                    v_rms: get("cavity", "v_rms").unwrap_or(0.0),
                },
                chi: get("cavity", "chi").unwrap_or(0.0),
            })
        } else {
            None
        };
        Ok(Self { circuit, c_tilde: get("junction", "c_tilde").unwrap_or(0.0), cavity })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse { line: 0, msg: format!("{}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    /// Canonical SI text; `parse(emit(x)) == x` exactly.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let line = |s: &mut String, k: &str, v: f64, d: Dim| {
            let u = si_unit(d);
            if u.is_empty() {
                writeln!(s, "{k} = {v:e}").unwrap();
            } else {
                writeln!(s, "{k} = {v:e} {u}").unwrap();
            }
        };
        s.push_str("[capacitance]\n");
        let c = self.circuit.caps.as_array();
        for (k, v) in CAP_KEYS.iter().zip(c) {
            line(&mut s, k, v, Dim::Capacitance);
        }
        s.push_str("\n[junction]\n");
        line(&mut s, "jc", self.circuit.jc, Dim::CurrentDensity);
        line(&mut s, "alpha", self.circuit.alpha, Dim::Pure);
        line(&mut s, "area_large", self.circuit.area_large, Dim::Area);
        line(&mut s, "c_tilde", self.c_tilde, Dim::CapPerArea);
        if let Some(cav) = &self.cavity {
            s.push_str("\n[cavity]\n");
            line(&mut s, "omega_r", cav.params.omega_r, Dim::Frequency);
            line(&mut s, "q_factor", cav.params.q_factor, Dim::Pure);
            line(&mut s, "v_rms", cav.params.v_rms, Dim::Voltage);
            line(&mut s, "chi", cav.chi, Dim::Frequency);
        }
        s
    }
}
