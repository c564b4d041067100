//! Spectroscopy datasets, junction-parameter fitting and Lorentzian line
//! fits.

use rayon::prelude::*;
use std::fmt::Write as _;

use crate::circuit::{diagonalize, BiasPoint, CircuitParams, Truncation};
use crate::constants::to_ghz;
use crate::error::{invalid, Error, Result};
use crate::lsq::least_squares;
use crate::optim::{nelder_mead, NmOptions};

/// Which transition a spectroscopy point belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransitionTag {
    T01,
    T12,
    T02,
    /// Two-photon 0-2 line, observed at omega02 / 2.
    T02TwoPhoton,
}

impl TransitionTag {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "01" => Some(Self::T01),
            "12" => Some(Self::T12),
            "02" => Some(Self::T02),
            "02tp" => Some(Self::T02TwoPhoton),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::T01 => "01",
            Self::T12 => "12",
            Self::T02 => "02",
            Self::T02TwoPhoton => "02tp",
        }
    }

    /// Observed frequency (rad/s) from the three lowest energies.
    pub fn observed(&self, e: &[f64]) -> f64 {
        match self {
            Self::T01 => e[1] - e[0],
            Self::T12 => e[2] - e[1],
            Self::T02 => e[2] - e[0],
            Self::T02TwoPhoton => 0.5 * (e[2] - e[0]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectroPoint {
    pub flux: f64,
    pub freq_ghz: f64,
    pub tag: TransitionTag,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpectroscopyDataset {
    pub points: Vec<SpectroPoint>,
}

impl SpectroscopyDataset {
    /// CSV with header `flux,freq_ghz,transition[,weight]`.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let l = line.trim();
            if l.is_empty() || l.starts_with('#') || (i == 0 && l.starts_with("flux")) {
                continue;
            }
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            let bad = |m: &str| Error::Parse { line: i + 1, msg: m.to_string() };
            if f.len() < 3 || f.len() > 4 {
                return Err(bad("expected 3 or 4 fields"));
            }
            let flux: f64 = f[0].parse().map_err(|_| bad("bad flux"))?;
            let freq_ghz: f64 = f[1].parse().map_err(|_| bad("bad frequency"))?;
            let tag = TransitionTag::parse(f[2]).ok_or_else(|| bad("unknown transition tag"))?;
            let weight: f64 = if f.len() == 4 { f[3].parse().map_err(|_| bad("bad weight"))? } else { 1.0 };
            if !(weight > 0.0) || !flux.is_finite() || !freq_ghz.is_finite() {
                return Err(bad("non-finite value or non-positive weight"));
            }
            points.push(SpectroPoint { flux, freq_ghz, tag, weight });
        }
        Ok(Self { points })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("flux,freq_ghz,transition,weight\n");
        for p in &self.points {
            writeln!(s, "{:e},{:e},{},{:e}", p.flux, p.freq_ghz, p.tag.label(), p.weight).unwrap();
        }
        s
    }

    fn flux_groups(&self) -> Vec<(f64, Vec<usize>)> {
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            match groups.iter_mut().find(|g| g.0 == p.flux) {
                Some(g) => g.1.push(i),
                None => groups.push((p.flux, vec![i])),
            }
        }
        groups
    }
}

/// Model frequencies (GHz) for every point, one diagonalization per flux.
pub fn model_frequencies(params: &CircuitParams, data: &SpectroscopyDataset, trunc: Truncation) -> Result<Vec<f64>> {
    let groups = data.flux_groups();
    let evals: Vec<Vec<(usize, f64)>> = groups
        .par_iter()
        .map(|(flux, idx)| {
            let s = diagonalize(params, &BiasPoint::at_flux(*flux), 3, trunc)?;
            Ok(idx.iter().map(|&i| (i, to_ghz(data.points[i].tag.observed(&s.energies)))).collect())
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; data.points.len()];
    for g in evals {
        for (i, v) in g {
            out[i] = v;
        }
    }
    Ok(out)
}

/// Weighted squared misfit in GHz^2.
pub fn objective(params: &CircuitParams, data: &SpectroscopyDataset, trunc: Truncation) -> Result<f64> {
    let m = model_frequencies(params, data, trunc)?;
    Ok(data.points.iter().zip(m).map(|(p, v)| p.weight * (v - p.freq_ghz).powi(2)).sum())
}

#[derive(Clone, Debug)]
pub struct JunctionBounds {
    pub jc: (f64, f64),
    pub alpha: (f64, f64),
}

impl Default for JunctionBounds {
    fn default() -> Self {
        Self { jc: (1e6, 1e7), alpha: (0.3, 1.0) }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: CircuitParams,
    pub objective: f64,
    pub iterations: u64,
    pub converged: bool,
    pub trace: Vec<f64>,
}

/// Fits critical-current density and junction ratio to a spectroscopy
/// dataset by bounded Nelder-Mead; capacitances and area stay fixed.
pub fn fit_junctions(
    start: &CircuitParams,
    data: &SpectroscopyDataset,
    bounds: &JunctionBounds,
    trunc: Truncation,
    max_iter: u64,
) -> Result<FitResult> {
    if data.points.is_empty() {
        return invalid("empty spectroscopy dataset");
    }
    start.validate()?;
    let scale = start.jc;
    let make = |x: &[f64]| CircuitParams { jc: x[0] * scale, alpha: x[1], ..*start };
    let f = |x: &[f64]| objective(&make(x), data, trunc).unwrap_or(f64::INFINITY);
    let lo = [bounds.jc.0 / scale, bounds.alpha.0];
    let hi = [bounds.jc.1 / scale, bounds.alpha.1];
    let x0 = [1.0f64.clamp(lo[0], hi[0]), start.alpha.clamp(lo[1], hi[1])];
    let r = nelder_mead(&f, &x0, &[0.04, 0.04], &lo, &hi, &NmOptions { max_iter, sd_tolerance: 1e-13 });
    if !r.f.is_finite() {
        return Err(Error::InvalidInput("model undefined over the search box".into()));
    }
    if !r.converged {
        log::warn!("junction fit stopped after {} iterations without converging", r.iterations);
    }
    Ok(FitResult { params: make(&r.x), objective: r.f, iterations: r.iterations, converged: r.converged, trace: r.trace })
}

/// Lorentzian line: offset + amplitude / (1 + ((x - center) / half_width)^2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lorentzian {
    pub center: f64,
    pub half_width: f64,
    pub amplitude: f64,
    pub offset: f64,
}

impl Lorentzian {
    pub fn eval(&self, x: f64) -> f64 {
        self.offset + self.amplitude / (1.0 + ((x - self.center) / self.half_width).powi(2))
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fits one Lorentzian (peak or dip) to a frequency trace.
pub fn lorentzian_fit(x: &[f64], y: &[f64]) -> Result<Lorentzian> {
    let n = x.len();
    if n != y.len() || n < 5 {
        return invalid("need at least 5 points of matching length");
    }
    let mut yy = y.to_vec();
    let base = median(&mut yy);
    let mut d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let noise = 1.4826 * median(&mut d) / std::f64::consts::SQRT_2;
    let (ipk, dev) = y.iter().enumerate().map(|(i, v)| (i, v - base)).max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap()).unwrap();
    if dev.abs() <= 3.0 * noise || dev.abs() <= 1e-12 * base.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::IllConditioned("trace is flat within the noise floor".into()));
    }
    let half = dev.abs() / 2.0;
    let above: Vec<usize> = (0..n).filter(|&i| ((y[i] - base) * dev.signum()) > half).collect();
    let span = x[n - 1] - x[0];
    let width0 = if above.len() >= 2 { (x[*above.last().unwrap()] - x[above[0]]).abs() / 2.0 } else { span.abs() / n as f64 };
    let p0 = [x[ipk], width0.max(span.abs() / (4.0 * n as f64)), dev, base];
    let fit = least_squares(
        |p| {
            let l = Lorentzian { center: p[0], half_width: p[1], amplitude: p[2], offset: p[3] };
            Some(x.iter().zip(y).map(|(xi, yi)| l.eval(*xi) - yi).collect())
        },
        &p0,
    )?;
    let l = Lorentzian { center: fit.params[0], half_width: fit.params[1].abs(), amplitude: fit.params[2], offset: fit.params[3] };
    let (xmin, xmax) = (x[0].min(x[n - 1]), x[0].max(x[n - 1]));
    if !(l.center >= xmin && l.center <= xmax) || !l.half_width.is_finite() {
        return Err(Error::IllConditioned("fitted center outside the trace".into()));
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let text = "flux,freq_ghz,transition,weight\n0.5,1.708,01,1\n0.49,3.2,02tp,0.5\n";
        let d = SpectroscopyDataset::parse_csv(text).unwrap();
        assert_eq!(d.points.len(), 2);
        assert_eq!(d.points[1].tag, TransitionTag::T02TwoPhoton);
        assert_eq!(SpectroscopyDataset::parse_csv(&d.to_csv()).unwrap(), d);
        assert!(matches!(SpectroscopyDataset::parse_csv("0.5,1.7,03\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn lorentzian_noiseless() {
        let l = Lorentzian { center: 5.4, half_width: 0.01, amplitude: -0.3, offset: 1.0 };
        let x: Vec<f64> = (0..200).map(|i| 5.3 + i as f64 * 0.001).collect();
        let y: Vec<f64> = x.iter().map(|&v| l.eval(v)).collect();
        let f = lorentzian_fit(&x, &y).unwrap();
        assert!((f.center - 5.4).abs() < 1e-9);
        assert!((f.half_width - 0.01).abs() < 1e-9);
    }

    #[test]
    fn flat_trace_rejected() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert!(matches!(lorentzian_fit(&x, &[2.0; 50]), Err(Error::IllConditioned(_))));
    }
}
