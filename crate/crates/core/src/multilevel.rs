//! Three-level population dynamics, relaxation-rate fitting, thermal
//! populations, readout calibration and relaxation-plus-dephasing Ramsey
//! envelopes.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64 as C64;

use crate::constants::{HBAR, K_B};
use crate::error::{invalid, Error, Result};
use crate::lsq::least_squares;

pub type PopulationVector = [f64; 3];
pub type DensityMatrix = Matrix3<C64>;

/// Transition rates in 1/s; `gamma[j][k]` moves population from j to k.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateMatrix {
    pub gamma: [[f64; 3]; 3],
}

fn boltzmann(omega: f64, temperature: f64) -> f64 {
    if temperature == 0.0 {
        0.0
    } else {
        (-HBAR * omega / (K_B * temperature)).exp()
    }
}

impl RateMatrix {
    pub fn new(gamma: [[f64; 3]; 3]) -> Result<Self> {
        let r = Self { gamma };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        for j in 0..3 {
            for k in 0..3 {
                let g = self.gamma[j][k];
                if j != k && !(g >= 0.0 && g.is_finite()) {
                    return invalid(format!("rate {j}->{k} must be finite and non-negative"));
                }
            }
        }
        Ok(())
    }

    /// Rates with the 0-1 pair fixed and the upward 1-2, 0-2 rates tied to
    /// the downward ones by Boltzmann factors.
    pub fn constrained(
        gamma10: f64,
        gamma01: f64,
        gamma21: f64,
        gamma20: f64,
        omega12: f64,
        omega02: f64,
        temperature: f64,
    ) -> Result<Self> {
        if !(temperature >= 0.0) {
            return invalid("temperature must be non-negative");
        }
        let mut g = [[0.0; 3]; 3];
        g[1][0] = gamma10;
        g[0][1] = gamma01;
        g[2][1] = gamma21;
        g[1][2] = gamma21 * boltzmann(omega12, temperature);
        g[2][0] = gamma20;
        g[0][2] = gamma20 * boltzmann(omega02, temperature);
        Self::new(g)
    }

    /// Fully thermal rates: every upward rate is the downward one times its
    /// Boltzmann factor, so the stationary state is the Gibbs state.
    pub fn thermal(gamma10: f64, gamma21: f64, gamma20: f64, omega01: f64, omega12: f64, temperature: f64) -> Result<Self> {
        let g01 = gamma10 * boltzmann(omega01, temperature);
        Self::constrained(gamma10, g01, gamma21, gamma20, omega12, omega01 + omega12, temperature)
    }

    /// Total outflow rate of level j.
    pub fn outflow(&self, j: usize) -> f64 {
        (0..3).filter(|&k| k != j).map(|k| self.gamma[j][k]).sum()
    }

    /// G with G[k][j] = gamma_{j->k} and zero column sums.
    pub fn generator(&self) -> Matrix3<f64> {
        let mut g = Matrix3::zeros();
        for j in 0..3 {
            for k in 0..3 {
                if j != k {
                    g[(k, j)] = self.gamma[j][k];
                }
            }
            g[(j, j)] = -self.outflow(j);
        }
        g
    }

    /// Null vector of the generator, normalized to unit sum.
    pub fn stationary(&self) -> Result<PopulationVector> {
        let mut a = self.generator();
        for c in 0..3 {
            a[(2, c)] = 1.0;
        }
        let p = a
            .lu()
            .solve(&Vector3::new(0.0, 0.0, 1.0))
            .ok_or_else(|| Error::Degenerate("generator has no unique stationary state".into()))?;
        Ok([p[0], p[1], p[2]])
    }

    fn detailed_balance_weights(&self) -> Option<[f64; 3]> {
        let p = self.stationary().ok()?;
        if p.iter().any(|&x| !(x > 1e-300)) {
            return None;
        }
        let scale = (0..3).flat_map(|j| (0..3).map(move |k| (j, k))).map(|(j, k)| self.gamma[j][k] * p[j]).fold(0.0, f64::max);
        for j in 0..3 {
            for k in (j + 1)..3 {
                if (self.gamma[j][k] * p[j] - self.gamma[k][j] * p[k]).abs() > 1e-12 * scale {
                    return None;
                }
            }
        }
        Some(p)
    }

    /// exp(G t). Detailed-balance generators are symmetrized and
    /// diagonalized; anything else goes through scaling and squaring.
    /// The back-transform divides by sqrt(p_k), so very unequal weights
    /// would magnify round-off and also take the general path.
    pub fn propagator(&self, t: f64) -> Matrix3<f64> {
        let g = self.generator();
        let spread_ok = |p: &[f64; 3]| p.iter().cloned().fold(f64::INFINITY, f64::min) > 1e-6 * p.iter().cloned().fold(0.0, f64::max);
        if let Some(p) = self.detailed_balance_weights().filter(spread_ok) {
            let s: Vec<f64> = p.iter().map(|x| x.sqrt()).collect();
            let mut sym = Matrix3::zeros();
            for r in 0..3 {
                for c in 0..3 {
                    sym[(r, c)] = g[(r, c)] * s[c] / s[r];
                }
            }
            let sym = (sym + sym.transpose()) * 0.5;
            let eig = sym.symmetric_eigen();
            let d = Matrix3::from_diagonal(&eig.eigenvalues.map(|l| (l * t).exp()));
            let e = &eig.eigenvectors * d * eig.eigenvectors.transpose();
            let mut out = Matrix3::zeros();
            for r in 0..3 {
                for c in 0..3 {
                    out[(r, c)] = e[(r, c)] * s[r] / s[c];
                }
            }
            out
        } else {
            (g * t).exp()
        }
    }
}

pub fn validate_populations(p: &PopulationVector) -> Result<()> {
    if p.iter().any(|&x| !(-1e-12..=1.0 + 1e-12).contains(&x)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return invalid("populations must lie in [0, 1] and sum to 1");
    }
    Ok(())
}

/// p(t) = exp(G t) p(0).
pub fn evolve_populations(rates: &RateMatrix, p0: &PopulationVector, t: f64) -> Result<PopulationVector> {
    if !(t >= 0.0) {
        return invalid("time must be non-negative");
    }
    rates.validate()?;
    validate_populations(p0)?;
    let p = rates.propagator(t) * Vector3::from(*p0);
    Ok([p[0], p[1], p[2]])
}

/// Population traces versus time.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxationTraces {
    pub t: Vec<f64>,
    pub p: Vec<PopulationVector>,
}

impl RelaxationTraces {
    pub fn simulate(rates: &RateMatrix, p0: &PopulationVector, t: &[f64]) -> Result<Self> {
        let p = t.iter().map(|&ti| evolve_populations(rates, p0, ti)).collect::<Result<_>>()?;
        Ok(Self { t: t.to_vec(), p })
    }
}

/// Fixed inputs of a relaxation fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelaxationConstraints {
    pub gamma10: f64,
    pub gamma01: f64,
    pub omega12: f64,
    pub omega02: f64,
    pub temperature: f64,
    /// Populations at the first time point.
    pub initial: PopulationVector,
}

#[derive(Clone, Debug)]
pub struct RelaxationFit {
    pub gamma21: f64,
    pub gamma20: f64,
    pub gamma21_stderr: f64,
    pub gamma20_stderr: f64,
    pub rates: RateMatrix,
    pub ssr: f64,
}

const RATE_STARTS: [f64; 4] = [1e2, 1e3, 1e4, 1e5];

/// Least-squares fit of gamma21 and gamma20 (log-parametrized, multi-start)
/// with the other rates fixed or Boltzmann-tied.
pub fn fit_relaxation(traces: &RelaxationTraces, c: &RelaxationConstraints) -> Result<RelaxationFit> {
    let n = traces.t.len();
    if n < 3 || traces.p.len() != n {
        return invalid("need at least 3 time points with populations for all levels");
    }
    validate_populations(&c.initial)?;
    let t0 = traces.t[0];
    let residuals = |x: &[f64]| -> Option<Vec<f64>> {
        let r = RateMatrix::constrained(c.gamma10, c.gamma01, x[0].exp(), x[1].exp(), c.omega12, c.omega02, c.temperature).ok()?;
        let mut out = Vec::with_capacity(3 * n);
        for (ti, pi) in traces.t.iter().zip(&traces.p) {
            let m = r.propagator(ti - t0) * Vector3::from(c.initial);
            out.extend((0..3).map(|k| m[k] - pi[k]));
        }
        Some(out)
    };
    let mut best: Option<crate::lsq::LsqFit> = None;
    for a in RATE_STARTS {
        for b in RATE_STARTS {
            if let Ok(f) = least_squares(residuals, &[a.ln(), b.ln()]) {
                if f.ssr.is_finite() && f.params.iter().all(|v| v.is_finite()) && best.as_ref().is_none_or(|bf| f.ssr < bf.ssr) {
                    best = Some(f);
                }
            }
        }
    }
    let f = best.ok_or_else(|| Error::ConvergenceFailure("no start converged".into()))?;
    let (g21, g20) = (f.params[0].exp(), f.params[1].exp());
    Ok(RelaxationFit {
        gamma21: g21,
        gamma20: g20,
        gamma21_stderr: g21 * f.stderr(0),
        gamma20_stderr: g20 * f.stderr(1),
        rates: RateMatrix::constrained(c.gamma10, c.gamma01, g21, g20, c.omega12, c.omega02, c.temperature)?,
        ssr: f.ssr,
    })
}

/// Ground-state thermal population from the two Rabi amplitudes.
pub fn thermal_population(a0: f64, a1: f64) -> Result<f64> {
    if !(a0 >= 0.0 && a1 >= 0.0) {
        return invalid("amplitudes must be non-negative");
    }
    if a0 == 0.0 && a1 == 0.0 {
        return Err(Error::BothZero);
    }
    Ok(a0 / (a0 + a1))
}

pub fn effective_temperature(p_th0: f64, omega01: f64) -> Result<f64> {
    if !(p_th0 > 0.5 && p_th0 < 1.0) {
        return Err(Error::OutOfDomain(format!("p_th0 = {p_th0} outside (0.5, 1)")));
    }
    if !(omega01 > 0.0) {
        return invalid("omega01 must be positive");
    }
    Ok(HBAR * omega01 / (K_B * (p_th0 / (1.0 - p_th0)).ln()))
}

/// Two-level thermal state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermalState {
    pub p_th0: f64,
    pub p_th1: f64,
    pub t_eff: f64,
}

impl ThermalState {
    pub fn from_amplitudes(a0: f64, a1: f64, omega01: f64) -> Result<Self> {
        let p = thermal_population(a0, a1)?;
        Ok(Self { p_th0: p, p_th1: 1.0 - p, t_eff: effective_temperature(p, omega01)? })
    }
}

/// Per-state homodyne voltages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutCalibration {
    pub v: [f64; 3],
}

impl ReadoutCalibration {
    pub fn voltage(&self, p: &PopulationVector) -> f64 {
        self.v.iter().zip(p).map(|(v, p)| v * p).sum()
    }
}

/// Solves V = P v for the state voltages, in least squares when
/// over-determined.
pub fn readout_calibrate(preps: &[(PopulationVector, f64)]) -> Result<ReadoutCalibration> {
    if preps.len() < 3 {
        return Err(Error::SingularSystem(format!("{} preparations, need at least 3", preps.len())));
    }
    let m = nalgebra::DMatrix::from_fn(preps.len(), 3, |r, c| preps[r].0[c]);
    let y = nalgebra::DVector::from_iterator(preps.len(), preps.iter().map(|p| p.1));
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    if !(svd.singular_values.min() > 1e-10 * smax) {
        return Err(Error::SingularSystem("preparations are not linearly independent".into()));
    }
    let v = svd.solve(&y, 0.0).map_err(|e| Error::SingularSystem(e.to_string()))?;
    let v = [v[0], v[1], v[2]];
    if v[0] == v[1] && v[1] == v[2] {
        return Err(Error::Degenerate("all state voltages are equal".into()));
    }
    Ok(ReadoutCalibration { v })
}

/// Pure-dephasing envelope C_jk(t).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoherenceShape {
    Unity,
    Gaussian { t_phi: f64 },
    Exponential { t_phi: f64 },
}

impl CoherenceShape {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Self::Unity => 1.0,
            Self::Gaussian { t_phi } => (-(t / t_phi).powi(2)).exp(),
            Self::Exponential { t_phi } => (-t / t_phi).exp(),
        }
    }
}

fn check_density(rho: &DensityMatrix) -> Result<()> {
    let herm = (rho - rho.adjoint()).norm();
    let tr = rho.trace();
    if herm > 1e-9 || (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(Error::UnphysicalInput("density matrix must be Hermitian with unit trace".into()));
    }
    let herm_part = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    if herm_part.symmetric_eigenvalues().min() < -1e-9 {
        return Err(Error::UnphysicalInput("density matrix has a negative eigenvalue".into()));
    }
    Ok(())
}

/// Relaxation followed by dephasing: populations follow the rate equations,
/// off-diagonals decay by C_jk(t) exp(-(Gamma_j + Gamma_k) t / 2) with
/// Gamma_j the total outflow. `coherence(j, k, t)` must satisfy |C| <= 1.
/// Free precession phases are left to the caller.
pub fn multilevel_ramsey<F>(rates: &RateMatrix, coherence: F, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix>
where
    F: Fn(usize, usize, f64) -> f64,
{
    check_density(rho0)?;
    let p0 = [rho0[(0, 0)].re, rho0[(1, 1)].re, rho0[(2, 2)].re];
    let p = evolve_populations(rates, &p0, t)?;
    let mut out = DensityMatrix::zeros();
    for j in 0..3 {
        out[(j, j)] = C64::new(p[j], 0.0);
        for k in (j + 1)..3 {
            let c = coherence(j, k, t);
            if !(c.abs() <= 1.0) {
                return Err(Error::UnphysicalInput(format!("|C_{j}{k}({t})| exceeds 1")));
            }
            let f = c * (-(rates.outflow(j) + rates.outflow(k)) * t / 2.0).exp();
            out[(j, k)] = rho0[(j, k)] * f;
            out[(k, j)] = out[(j, k)].conj();
        }
    }
    Ok(out)
}
