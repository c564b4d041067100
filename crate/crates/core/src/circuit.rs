//! Circuit model: capacitance network, charge-basis Hamiltonian and
//! spectral analysis of the shunted three-junction loop.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::f64::consts::PI;

use crate::constants::{E_CHARGE, FLUX_QUANTUM, HBAR};
use crate::eigen::{lowest_eigenpairs, BandedHermitian, EigenPairs};
use crate::error::{invalid, Error, Result};

/// Lumped capacitances in farads. Node 1 is the pad between the two large
/// junctions; the small junction sits between nodes 2 and 3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapacitanceSet {
    pub c12: f64,
    pub c13: f64,
    pub c23: f64,
    pub c01: f64,
    pub c02: f64,
    pub c03: f64,
    /// Coupling to the cavity line ("b") and the drive line ("d").
    pub c1b: f64,
    pub c2b: f64,
    pub c3b: f64,
    pub c1d: f64,
    pub c2d: f64,
    pub c3d: f64,
}

impl CapacitanceSet {
    pub fn as_array(&self) -> [f64; 12] {
        [self.c12, self.c13, self.c23, self.c01, self.c02, self.c03, self.c1b, self.c2b, self.c3b, self.c1d, self.c2d, self.c3d]
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().any(|c| !c.is_finite() || *c < 0.0) {
            return invalid("capacitances must be finite and non-negative");
        }
        Ok(())
    }

    /// Total ground capacitance of each node (gate lines are AC ground).
    pub fn ground(&self) -> [f64; 3] {
        [self.c01 + self.c1b + self.c1d, self.c02 + self.c2b + self.c2d, self.c03 + self.c3b + self.c3d]
    }

    pub fn gate_b(&self) -> Vector3<f64> {
        Vector3::new(self.c1b, self.c2b, self.c3b)
    }

    pub fn gate_d(&self) -> Vector3<f64> {
        Vector3::new(self.c1d, self.c2d, self.c3d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircuitParams {
    pub caps: CapacitanceSet,
    /// Critical current density, A/m^2.
    pub jc: f64,
    /// Small-to-large junction area ratio.
    pub alpha: f64,
    /// Large-junction area, m^2.
    pub area_large: f64,
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        self.caps.validate()?;
        if !(self.jc > 0.0 && self.jc.is_finite()) {
            return invalid("critical current density must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return invalid(format!("junction ratio {} outside (0, 1]", self.alpha));
        }
        if !(self.area_large > 0.0 && self.area_large.is_finite()) {
            return invalid("junction area must be positive");
        }
        Ok(())
    }

    /// Critical current of a large junction, A.
    pub fn critical_current(&self) -> f64 {
        self.jc * self.area_large
    }

    /// Josephson energy of a large junction divided by hbar (rad/s).
    pub fn ej(&self) -> f64 {
        self.critical_current() / (2.0 * E_CHARGE)
    }

    /// Capacitance matrix in the (gamma21, gamma31, gamma01) coordinates.
    pub fn capacitance_matrix(&self) -> Matrix3<f64> {
        let c = &self.caps;
        let [g1, g2, g3] = c.ground();
        Matrix3::new(c.c12 + c.c23 + g2, -c.c23, g2, -c.c23, c.c13 + c.c23 + g3, g3, g2, g3, g1 + g2 + g3)
    }

    pub fn inverse_capacitance(&self) -> Result<Matrix3<f64>> {
        let m = self.capacitance_matrix();
        let ev = m.symmetric_eigenvalues();
        if !(ev.min() > 1e-12 * ev.max().abs()) {
            return Err(Error::NonPositiveDefinite);
        }
        let chol = m.cholesky().ok_or(Error::NonPositiveDefinite)?;
        Ok(chol.inverse())
    }

    /// Charging block of the two compact coordinates.
    pub fn charging_block(&self) -> Result<Matrix2<f64>> {
        let inv = self.inverse_capacitance()?;
        Ok(inv.fixed_view::<2, 2>(0, 0).into_owned())
    }

    /// Charge-number weights of the voltage coupling through a gate vector.
    pub fn gate_weights(&self, gate: &Vector3<f64>) -> Result<Vector2<f64>> {
        let inv = self.inverse_capacitance()?;
        let v = inv * d_matrix() * gate;
        Ok(Vector2::new(v[0], v[1]))
    }
}

fn d_matrix() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, -1.0, -1.0, -1.0)
}

/// Operating point: reduced flux f = Phi/Phi0, offset charges in units of 2e,
/// and static gate voltages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasPoint {
    pub flux: f64,
    pub ng: [f64; 2],
    pub v_b: f64,
    pub v_d: f64,
}

impl BiasPoint {
    pub fn at_flux(flux: f64) -> Self {
        Self { flux, ng: [0.0, 0.0], v_b: 0.0, v_d: 0.0 }
    }

    pub fn with_ng(mut self, ng: [f64; 2]) -> Self {
        self.ng = ng;
        self
    }
}

/// Charge basis |n1, n2> with n_i in [-nmax, nmax].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Truncation {
    pub nmax: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { nmax: 12 }
    }
}

impl Truncation {
    pub fn side(&self) -> usize {
        2 * self.nmax + 1
    }
    pub fn dim(&self) -> usize {
        self.side() * self.side()
    }
}

/// Effective offset charges (units of 2e) including the gate voltages.
pub fn effective_offsets(params: &CircuitParams, bias: &BiasPoint) -> Result<[f64; 2]> {
    let mut ng = bias.ng;
    if bias.v_b != 0.0 || bias.v_d != 0.0 {
        let inv = params.inverse_capacitance()?;
        let a = inv.fixed_view::<2, 2>(0, 0).into_owned();
        let b = Vector2::new(inv[(0, 2)], inv[(1, 2)]);
        let q = d_matrix() * (params.caps.gate_b() * bias.v_b + params.caps.gate_d() * bias.v_d);
        let ainv = a.try_inverse().ok_or(Error::NonPositiveDefinite)?;
        let off = Vector2::new(q[0], q[1]) + ainv * b * q[2];
        ng[0] += off[0] / (2.0 * E_CHARGE);
        ng[1] += off[1] / (2.0 * E_CHARGE);
    }
    Ok(ng)
}

/// Hamiltonian / hbar in rad/s on the truncated charge basis.
pub fn hamiltonian(params: &CircuitParams, bias: &BiasPoint, trunc: Truncation) -> Result<BandedHermitian> {
    params.validate()?;
    if trunc.nmax == 0 {
        return invalid("charge truncation must be at least 1");
    }
    let a = params.charging_block()?;
    let ng = effective_offsets(params, bias)?;
    let ec = (2.0 * E_CHARGE).powi(2) / (2.0 * HBAR);
    let ej = params.ej();
    let s = trunc.side();
    let nmax = trunc.nmax as f64;
    let mut h = BandedHermitian::zeros(s * s, s);
    let hop = C64::new(-0.5 * ej, 0.0);
    let phase = 2.0 * PI * bias.flux;
    let hop_a = C64::from_polar(0.5 * params.alpha * ej, phase) * -1.0;
    for i in 0..s {
        for j in 0..s {
            let k = i * s + j;
            let x = i as f64 - nmax - ng[0];
            let y = j as f64 - nmax - ng[1];
            let kin = ec * (a[(0, 0)] * x * x + 2.0 * a[(0, 1)] * x * y + a[(1, 1)] * y * y);
            h.set(k, k, C64::new(kin, 0.0));
            if j + 1 < s {
                h.set(k + 1, k, hop);
            }
            if i + 1 < s {
                h.set(k + s, k, hop);
                // |n1+1, n2-1><n1, n2|
                if j >= 1 {
                    h.set(k + s - 1, k, hop_a);
                }
            }
        }
    }
    Ok(h)
}

/// Lowest levels at one bias point, energies / hbar in rad/s.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    pub vectors: Option<Vec<DVector<C64>>>,
    pub bias: BiasPoint,
    pub truncation: Truncation,
}

impl Spectrum {
    pub fn n_levels(&self) -> usize {
        self.energies.len()
    }

    /// omega_jk = E_k - E_j.
    pub fn transition(&self, j: usize, k: usize) -> Result<f64> {
        let n = self.energies.len();
        for idx in [j, k] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, available: n });
            }
        }
        Ok(self.energies[k] - self.energies[j])
    }
}

const EIG_TOL: f64 = 1e-11;

fn solve(params: &CircuitParams, bias: &BiasPoint, n_levels: usize, trunc: Truncation) -> Result<EigenPairs> {
    if n_levels == 0 {
        return invalid("need at least one level");
    }
    let h = hamiltonian(params, bias, trunc)?;
    lowest_eigenpairs(&h, n_levels, EIG_TOL)
}

pub fn diagonalize(params: &CircuitParams, bias: &BiasPoint, n_levels: usize, trunc: Truncation) -> Result<Spectrum> {
    let e = solve(params, bias, n_levels, trunc)?;
    Ok(Spectrum { energies: e.values, vectors: None, bias: *bias, truncation: trunc })
}

pub fn diagonalize_with_vectors(params: &CircuitParams, bias: &BiasPoint, n_levels: usize, trunc: Truncation) -> Result<Spectrum> {
    let e = solve(params, bias, n_levels, trunc)?;
    Ok(Spectrum { energies: e.values, vectors: Some(e.vectors), bias: *bias, truncation: trunc })
}

/// Basis-convergence threshold on omega01 and omega12 (rad/s).
pub const CONVERGENCE_TOL: f64 = 2.0 * PI * 1e3;

/// Compares omega01 and omega12 against a basis enlarged by 4 charges per
/// coordinate and fails when either moves by more than 1 kHz.
pub fn check_convergence(params: &CircuitParams, bias: &BiasPoint, trunc: Truncation) -> Result<f64> {
    let a = diagonalize(params, bias, 3, trunc)?;
    let b = diagonalize(params, bias, 3, Truncation { nmax: trunc.nmax + 4 })?;
    let d01 = (a.transition(0, 1)? - b.transition(0, 1)?).abs();
    let d12 = (a.transition(1, 2)? - b.transition(1, 2)?).abs();
    let worst = d01.max(d12);
    if worst > CONVERGENCE_TOL {
        return Err(Error::ConvergenceFailure(format!(
            "transition moved by {:.3e} Hz when enlarging the basis from +/-{}",
            worst / (2.0 * PI),
            trunc.nmax
        )));
    }
    Ok(worst)
}

/// Convergence-checked diagonalization.
pub fn diagonalize_checked(params: &CircuitParams, bias: &BiasPoint, n_levels: usize, trunc: Truncation) -> Result<Spectrum> {
    check_convergence(params, bias, trunc)?;
    diagonalize(params, bias, n_levels, trunc)
}

/// Transition between `pair` levels across a flux sweep, computed in parallel.
pub fn sweep_flux(params: &CircuitParams, bias: &BiasPoint, fluxes: &[f64], n_levels: usize, trunc: Truncation) -> Result<Vec<Spectrum>> {
    fluxes.par_iter().map(|&f| diagonalize(params, &BiasPoint { flux: f, ..*bias }, n_levels, trunc)).collect()
}

fn omega_pair(params: &CircuitParams, bias: &BiasPoint, pair: (usize, usize), trunc: Truncation) -> Result<f64> {
    let n = pair.0.max(pair.1) + 1;
    diagonalize(params, bias, n, trunc)?.transition(pair.0, pair.1)
}

/// Flux derivative of omega_pair in rad/s per Phi0^order (order 1 or 2).
pub fn flux_sensitivity(params: &CircuitParams, bias: &BiasPoint, pair: (usize, usize), order: u32, trunc: Truncation) -> Result<f64> {
    let at = |f: f64| omega_pair(params, &BiasPoint { flux: f, ..*bias }, pair, trunc);
    match order {
        1 => {
            let h = 1e-4;
            Ok((at(bias.flux + h)? - at(bias.flux - h)?) / (2.0 * h))
        }
        2 => {
            let h = 1e-3;
            Ok((at(bias.flux + h)? - 2.0 * at(bias.flux)? + at(bias.flux - h)?) / (h * h))
        }
        _ => invalid("flux derivative order must be 1 or 2"),
    }
}

/// Offset-charge grid points, with ng and -ng (mod 1) merged since they
/// give identical spectra.
fn charge_grid(grid: usize) -> Vec<[f64; 2]> {
    let mut pts = BTreeSet::new();
    for a in 0..grid {
        for b in 0..grid {
            let m = ((grid - a) % grid, (grid - b) % grid);
            pts.insert((a, b).min(m));
        }
    }
    pts.into_iter().map(|(a, b)| [a as f64 / grid as f64, b as f64 / grid as f64]).collect()
}

/// Peak-to-peak charge modulation (rad/s) of omega01, omega12, omega02 over a
/// grid x grid mesh of offset charges.
pub fn charge_modulation(params: &CircuitParams, flux: f64, grid: usize, trunc: Truncation) -> Result<[f64; 3]> {
    if grid < 2 {
        return invalid("offset-charge grid needs at least 2 points per axis");
    }
    let pts = charge_grid(grid);
    let rows: Vec<[f64; 3]> = pts
        .par_iter()
        .map(|ng| {
            let s = diagonalize(params, &BiasPoint::at_flux(flux).with_ng(*ng), 3, trunc)?;
            Ok([s.transition(0, 1)?, s.transition(1, 2)?, s.transition(0, 2)?])
        })
        .collect::<Result<_>>()?;
    let mut out = [0.0; 3];
    for (p, o) in out.iter_mut().enumerate() {
        let lo = rows.iter().map(|r| r[p]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r[p]).fold(f64::NEG_INFINITY, f64::max);
        *o = hi - lo;
    }
    Ok(out)
}

/// Peak-to-peak charge dispersion of one transition (rad/s).
pub fn charge_dispersion(params: &CircuitParams, flux: f64, grid: usize, pair: (usize, usize), trunc: Truncation) -> Result<f64> {
    let pts = charge_grid(grid.max(2));
    let vals: Vec<f64> =
        pts.par_iter().map(|ng| omega_pair(params, &BiasPoint::at_flux(flux).with_ng(*ng), pair, trunc)).collect::<Result<_>>()?;
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(hi - lo)
}

/// Matrix of the charge-number operator w . n in the eigenbasis.
pub fn charge_operator(spec: &Spectrum, w: Vector2<f64>) -> Result<DMatrix<C64>> {
    let vecs = spec.vectors.as_ref().ok_or_else(|| Error::InvalidInput("spectrum lacks eigenvectors".into()))?;
    let s = spec.truncation.side();
    let nmax = spec.truncation.nmax as f64;
    let diag: Vec<f64> = (0..s * s).map(|k| w[0] * ((k / s) as f64 - nmax) + w[1] * ((k % s) as f64 - nmax)).collect();
    let l = vecs.len();
    Ok(DMatrix::from_fn(l, l, |j, k| vecs[j].iter().zip(vecs[k].iter()).zip(&diag).map(|((a, b), d)| a.conj() * b * *d).sum()))
}

/// |<j| N_drive |k>| for the drive-line charge operator.
pub fn drive_matrix_element(params: &CircuitParams, bias: &BiasPoint, j: usize, k: usize, trunc: Truncation) -> Result<f64> {
    let n = j.max(k) + 1;
    let spec = diagonalize_with_vectors(params, bias, n, trunc)?;
    let w = params.gate_weights(&params.caps.gate_d())?;
    Ok(charge_operator(&spec, w)?[(j, k)].norm())
}

/// Half the flux slope of E1 - E0 (A) at the given bias, signed.
pub fn current_slope(params: &CircuitParams, bias: &BiasPoint, trunc: Truncation) -> Result<f64> {
    let d = flux_sensitivity(params, bias, (0, 1), 1, trunc)?;
    Ok(0.5 * HBAR * d / FLUX_QUANTUM)
}

/// Offset from the symmetry point at which the persistent current is read.
pub const PERSISTENT_CURRENT_OFFSET: f64 = 0.003;

/// Persistent current |I_p| (A), evaluated 0.003 Phi0 above the nearest
/// half-integer flux.
pub fn persistent_current(params: &CircuitParams, bias: &BiasPoint, trunc: Truncation) -> Result<f64> {
    let sym = (bias.flux - 0.5).round() + 0.5;
    let b = BiasPoint { flux: sym + PERSISTENT_CURRENT_OFFSET, ..*bias };
    Ok(current_slope(params, &b, trunc)?.abs())
}

/// Readout resonator parameters. `v_rms` is the zero-point voltage seen by
/// the "b" line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavityParams {
    pub omega_r: f64,
    pub q_factor: f64,
    pub v_rms: f64,
}

impl CavityParams {
    pub fn kappa(&self) -> f64 {
        self.omega_r / self.q_factor
    }
}

/// Circuit levels kept in the coupled circuit-cavity model.
pub const DISPERSIVE_LEVELS: usize = 6;

/// Couplings g_jk (rad/s) between circuit levels through the cavity line.
pub fn cavity_couplings(params: &CircuitParams, spec: &Spectrum, cavity: &CavityParams) -> Result<DMatrix<C64>> {
    let w = params.gate_weights(&params.caps.gate_b())?;
    let n = charge_operator(spec, w)?;
    let scale = 2.0 * E_CHARGE * cavity.v_rms / HBAR;
    Ok(n.map(|x| x * scale))
}

/// Dispersive shift per photon of the `pair` transition from exact
/// diagonalization of circuit levels x cavity Fock states {0, 1, 2}.
pub fn dispersive_shift_levels(energies: &[f64], g: &DMatrix<C64>, omega_r: f64, pair: (usize, usize)) -> Result<f64> {
    let l = energies.len();
    let (j, k) = pair;
    if j >= l || k >= l {
        return Err(Error::IndexOutOfRange { index: j.max(k), available: l });
    }
    for &a in &[j, k] {
        for b in 0..l {
            if a == b {
                continue;
            }
            let det = ((energies[b] - energies[a]).abs() - omega_r).abs();
            if det < 10.0 * g[(a, b)].norm() {
                return Err(Error::DegenerateResonance(format!("{a}-{b}")));
            }
        }
    }
    let nf = 3;
    let dim = l * nf;
    let idx = |q: usize, n: usize| n * l + q;
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    let e0 = energies[0];
    for n in 0..nf {
        for q in 0..l {
            h[(idx(q, n), idx(q, n))] = C64::new(energies[q] - e0 + n as f64 * omega_r, 0.0);
            for p in 0..l {
                if p == q {
                    continue;
                }
                if n + 1 < nf {
                    let amp = g[(p, q)] * ((n + 1) as f64).sqrt();
                    h[(idx(p, n + 1), idx(q, n))] += amp;
                    h[(idx(q, n), idx(p, n + 1))] += amp.conj();
                }
            }
        }
    }
    let eig = h.symmetric_eigen();
    let dressed = |q: usize, n: usize| -> f64 {
        let b = idx(q, n);
        let best =
            (0..dim).max_by(|&x, &y| eig.eigenvectors[(b, x)].norm().partial_cmp(&eig.eigenvectors[(b, y)].norm()).unwrap()).unwrap();
        eig.eigenvalues[best]
    };
    Ok((dressed(k, 1) - dressed(j, 1)) - (dressed(k, 0) - dressed(j, 0)))
}

/// Second-order perturbative counterpart of [`dispersive_shift_levels`].
pub fn dispersive_shift_perturbative(energies: &[f64], g: &DMatrix<C64>, omega_r: f64, pair: (usize, usize)) -> f64 {
    let shift = |q: usize, n: f64| -> f64 {
        (0..energies.len())
            .filter(|&p| p != q)
            .map(|p| {
                let wqp = energies[q] - energies[p];
                let g2 = g[(p, q)].norm_sqr();
                g2 * ((n + 1.0) / (wqp - omega_r) + n / (wqp + omega_r))
            })
            .sum()
    };
    let (j, k) = pair;
    (shift(k, 1.0) - shift(j, 1.0)) - (shift(k, 0.0) - shift(j, 0.0))
}

/// Dispersive shift per photon (rad/s) of the `pair` transition.
pub fn dispersive_shift(
    params: &CircuitParams,
    bias: &BiasPoint,
    cavity: &CavityParams,
    pair: (usize, usize),
    trunc: Truncation,
) -> Result<f64> {
    let spec = diagonalize_with_vectors(params, bias, DISPERSIVE_LEVELS, trunc)?;
    let g = cavity_couplings(params, &spec, cavity)?;
    dispersive_shift_levels(&spec.energies, &g, cavity.omega_r, pair)
}

/// Zero-point voltage that yields the requested 0-1 dispersive shift, found
/// by bisection on the exact coupled model.
pub fn calibrate_cavity_voltage(
    params: &CircuitParams,
    bias: &BiasPoint,
    omega_r: f64,
    q_factor: f64,
    target_chi: f64,
    trunc: Truncation,
) -> Result<f64> {
    let spec = diagonalize_with_vectors(params, bias, DISPERSIVE_LEVELS, trunc)?;
    let chi_at = |v: f64| -> Result<f64> {
        let cav = CavityParams { omega_r, q_factor, v_rms: v };
        let g = cavity_couplings(params, &spec, &cav)?;
        Ok(dispersive_shift_levels(&spec.energies, &g, omega_r, (0, 1))?.abs())
    };
    let target = target_chi.abs();
    let (mut lo, mut hi) = (0.0, 1e-7);
    while chi_at(hi)? < target {
        hi *= 2.0;
        if hi > 1e-2 {
            return Err(Error::Bracketing("dispersive shift target unreachable".into()));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if chi_at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
