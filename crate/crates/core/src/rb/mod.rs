//! Single-qubit Clifford randomized benchmarking on a pulse-driven,
//! dissipative two- or three-level model, plus the decay fit.

mod clifford;
mod lindblad;
mod pulse;

pub use clifford::{
    clifford_group, random_sequence, rotation, same_up_to_phase, CliffordElement, CliffordGroup, Generator, RbSequence, GENERATORS,
};
pub use lindblad::{dephasing_points, DriveFrame, Lindblad, Rho};
pub use pulse::{PulseSpec, RampShape};

use nalgebra::{SMatrix, Vector2};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::circuit::{charge_operator, diagonalize_with_vectors, BiasPoint, CircuitParams, Truncation};
use crate::error::{invalid, Error, Result};
use crate::lsq::least_squares;
use crate::multilevel::RateMatrix;

/// Level structure, drive matrix elements and decoherence of the device.
#[derive(Clone, Debug, PartialEq)]
pub struct RbDevice {
    /// E_k - E_0 (rad/s).
    pub levels: [f64; 3],
    /// |<j|N|k>| / |<0|N|1>|.
    pub coupling: [[f64; 3]; 3],
    pub rates: RateMatrix,
    /// Pure-dephasing rates of the pairs (0,1), (1,2), (0,2).
    pub dephasing: [f64; 3],
}

impl RbDevice {
    /// Levels and drive-line matrix elements from the circuit model.
    pub fn from_circuit(
        params: &CircuitParams,
        bias: &BiasPoint,
        trunc: Truncation,
        rates: RateMatrix,
        dephasing: [f64; 3],
    ) -> Result<Self> {
        let spec = diagonalize_with_vectors(params, bias, 3, trunc)?;
        let w: Vector2<f64> = params.gate_weights(&params.caps.gate_d())?;
        let n = charge_operator(&spec, w)?;
        let d01 = n[(0, 1)].norm();
        if !(d01 > 0.0) {
            return Err(Error::Degenerate("0-1 drive matrix element vanishes".into()));
        }
        let e = &spec.energies;
        Ok(Self {
            levels: [0.0, e[1] - e[0], e[2] - e[0]],
            coupling: std::array::from_fn(|j| std::array::from_fn(|k| if j == k { 0.0 } else { n[(j, k)].norm() / d01 })),
            rates,
            dephasing,
        })
    }

    fn lindblad2(&self, frame: DriveFrame) -> Result<Lindblad<2>> {
        let p = dephasing_points([self.dephasing[0], 0.0, self.dephasing[0]])?;
        let c = SMatrix::<f64, 2, 2>::new(0.0, self.coupling[0][1], self.coupling[1][0], 0.0);
        let g = self.rates.gamma;
        Ok(Lindblad::new([0.0, self.levels[1]], c, [[0.0, g[0][1]], [g[1][0], 0.0]], [p[0], p[1]], frame))
    }

    fn lindblad3(&self, frame: DriveFrame) -> Result<Lindblad<3>> {
        let p = dephasing_points(self.dephasing)?;
        let c = SMatrix::<f64, 3, 3>::from_fn(|j, k| self.coupling[j][k]);
        let mut g = self.rates.gamma;
        for (k, row) in g.iter_mut().enumerate() {
            row[k] = 0.0;
        }
        Ok(Lindblad::new(self.levels, c, g, p, frame))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbConfig {
    pub lengths: Vec<usize>,
    pub randomizations: usize,
    /// 2 or 3.
    pub levels: usize,
    pub frame: DriveFrame,
    pub seed: u64,
    /// Upper bound on the RK4 step (s).
    pub max_step: f64,
}

pub const DEFAULT_LENGTHS: [usize; 8] = [2, 4, 8, 16, 32, 64, 128, 196];

impl Default for RbConfig {
    fn default() -> Self {
        Self { lengths: DEFAULT_LENGTHS.to_vec(), randomizations: 32, levels: 2, frame: DriveFrame::Rwa, seed: 0, max_step: 10e-12 }
    }
}

impl RbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() || self.lengths[0] == 0 || self.lengths.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("lengths must be positive and strictly increasing");
        }
        if self.randomizations == 0 {
            return invalid("need at least one randomization");
        }
        if !(self.levels == 2 || self.levels == 3) {
            return invalid("levels must be 2 or 3");
        }
        if !(self.max_step > 0.0) {
            return invalid("max_step must be positive");
        }
        Ok(())
    }
}

/// What evolves the state through a sequence.
#[derive(Clone, Debug, PartialEq)]
pub enum RbBackend {
    /// Master-equation simulation of the shaped pulse train.
    Pulsed { device: RbDevice, pulses: PulseSpec },
    /// Ideal Cliffords each followed by a depolarizing channel of parameter p.
    Depolarizing { p: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceOutcome {
    /// Ground-state population at the end.
    pub survival: f64,
    /// Level-2 population at the end (zero for two levels).
    pub leakage: f64,
}

/// Largest drive-phase advance per RK4 step (rad).
pub const STEP_PHASE: f64 = 0.05;

/// Leakage above which a warning is logged.
pub const LEAKAGE_WARNING: f64 = 1e-2;

fn run_pulses<const N: usize>(l: &Lindblad<N>, pulses: &PulseSpec, seq: &RbSequence, max_step: f64) -> Result<Rho<N>> {
    let g = clifford_group();
    let h = max_step.min(STEP_PHASE / l.fastest_frequency(pulses.drive_strength));
    let mut rho = Rho::<N>::zeros();
    rho[(0, 0)] = C64::new(1.0, 0.0);
    let mut t = 0.0;
    for c in seq.all() {
        for gen in &g.elements[c].decomposition {
            let angle = gen.angle();
            let d = pulses.duration(angle);
            rho = l.evolve(&rho, t, d, |s| pulses.envelope(angle, s), gen.phase(), h)?;
            t += d;
            rho = l.evolve(&rho, t, pulses.gap, |_| 0.0, 0.0, h)?;
            t += pulses.gap;
        }
    }
    Ok(rho)
}

pub fn simulate_sequence(seq: &RbSequence, backend: &RbBackend, config: &RbConfig) -> Result<SequenceOutcome> {
    match backend {
        RbBackend::Depolarizing { p } => {
            if !(0.0..=1.0).contains(p) {
                return invalid("depolarizing parameter must lie in [0, 1]");
            }
            let n = seq.gates.len() as i32 + 1;
            Ok(SequenceOutcome { survival: 0.5 + 0.5 * p.powi(n), leakage: 0.0 })
        }
        RbBackend::Pulsed { device, pulses } => {
            pulses.validate()?;
            if config.levels == 2 {
                let rho = run_pulses(&device.lindblad2(config.frame)?, pulses, seq, config.max_step)?;
                Ok(SequenceOutcome { survival: rho[(0, 0)].re, leakage: 0.0 })
            } else {
                let rho = run_pulses(&device.lindblad3(config.frame)?, pulses, seq, config.max_step)?;
                let leak = rho[(2, 2)].re;
                if leak > LEAKAGE_WARNING {
                    log::warn!("level-2 population {leak:.3e} at the end of a sequence");
                }
                Ok(SequenceOutcome { survival: rho[(0, 0)].re, leakage: leak })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbRecord {
    pub m: usize,
    pub randomization: usize,
    pub survival: f64,
    pub leakage: f64,
}

/// Every (length, randomization) pair; sequence (li, r) draws from ChaCha
/// stream (li << 32) | r of the seed, so output is independent of threads.
pub fn run_rb(config: &RbConfig, backend: &RbBackend) -> Result<Vec<RbRecord>> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.lengths.len()).flat_map(|li| (0..config.randomizations).map(move |r| (li, r))).collect();
    jobs.par_iter()
        .map(|&(li, r)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(((li as u64) << 32) | r as u64);
            let m = config.lengths[li];
            let seq = clifford::sequence_from_rng(m, &mut rng);
            let o = simulate_sequence(&seq, backend, config)?;
            Ok(RbRecord { m, randomization: r, survival: o.survival, leakage: o.leakage })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbFit {
    pub a0: f64,
    pub b0: f64,
    pub p: f64,
    pub p_stderr: f64,
    pub f_ave: f64,
    pub f_ave_stderr: f64,
}

/// Per-length mean survival and standard error of the mean.
pub fn average_by_length(records: &[RbRecord]) -> Vec<(usize, f64, f64)> {
    let mut acc: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        acc.entry(r.m).or_default().push(r.survival);
    }
    acc.into_iter()
        .map(|(m, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sem = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt() } else { 0.0 };
            (m, mean, sem)
        })
        .collect()
}

/// Fits A0 p^M + B0 to the length-averaged survivals, weighting each
/// length by its standard error when every length has a nonzero one.
pub fn fit_rb(records: &[RbRecord]) -> Result<RbFit> {
    let avg = average_by_length(records);
    if avg.len() < 3 {
        return Err(Error::IllConditioned(format!("{} distinct lengths, need at least 3", avg.len())));
    }
    let mean = avg.iter().map(|a| a.1).sum::<f64>() / avg.len() as f64;
    let spread = avg.iter().map(|a| (a.1 - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * mean.abs().max(1.0) {
        return Ok(RbFit { a0: 0.0, b0: mean, p: 1.0, p_stderr: 0.0, f_ave: 1.0, f_ave_stderr: 0.0 });
    }
    let weighted = avg.iter().all(|a| a.2 > 0.0);
    let w: Vec<f64> = avg.iter().map(|a| if weighted { 1.0 / a.2 } else { 1.0 }).collect();
    // best p on a grid with A0, B0 solved by weighted linear least squares
    let linear = |p: f64| -> (f64, f64, f64) {
        let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&(m, y, _), wi) in avg.iter().zip(&w) {
            let x = p.powi(m as i32);
            let q = wi * wi;
            s += q;
            sx += q * x;
            sy += q * y;
            sxx += q * x * x;
            sxy += q * x * y;
        }
        let det = s * sxx - sx * sx;
        if det.abs() < 1e-300 {
            return (0.0, sy / s, f64::INFINITY);
        }
        let a = (s * sxy - sx * sy) / det;
        let b = (sy - a * sx) / s;
        let ssr = avg.iter().zip(&w).map(|(&(m, y, _), wi)| (wi * (a * p.powi(m as i32) + b - y)).powi(2)).sum();
        (a, b, ssr)
    };
    let mut best = (0.5, f64::INFINITY);
    for i in 1..400 {
        let p = 1.0 - 10f64.powf(-6.0 * i as f64 / 400.0);
        let s = linear(p).2;
        if s < best.1 {
            best = (p, s);
        }
    }
    let (a, b, _) = linear(best.0);
    let fit = least_squares(
        |x| Some(avg.iter().zip(&w).map(|(&(m, y, _), wi)| wi * (x[0] * x[2].powi(m as i32) + x[1] - y)).collect()),
        &[a, b, best.0],
    )?;
    let p = fit.params[2];
    let ps = if avg.len() > 3 { fit.stderr(2) } else { f64::NAN };
    Ok(RbFit { a0: fit.params[0], b0: fit.params[1], p, p_stderr: ps, f_ave: p + (1.0 - p) / 2.0, f_ave_stderr: ps / 2.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::ghz;

    fn quiet_device() -> RbDevice {
        RbDevice {
            levels: [0.0, ghz(1.708), ghz(7.107)],
            coupling: [[0.0, 1.0, 0.0], [1.0, 0.0, 1.2], [0.0, 1.2, 0.0]],
            rates: RateMatrix::new([[0.0; 3]; 3]).unwrap(),
            dephasing: [0.0; 3],
        }
    }

    #[test]
    fn ideal_rwa_sequences_survive() {
        let cfg = RbConfig { lengths: vec![1, 5], randomizations: 3, ..Default::default() };
        let b = RbBackend::Pulsed { device: quiet_device(), pulses: PulseSpec::default() };
        for r in run_rb(&cfg, &b).unwrap() {
            assert!((r.survival - 1.0).abs() < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn depolarizing_round_trip() {
        let cfg = RbConfig { lengths: vec![1, 2, 4, 8, 16, 32], randomizations: 2, ..Default::default() };
        let recs = run_rb(&cfg, &RbBackend::Depolarizing { p: 0.995 }).unwrap();
        let f = fit_rb(&recs).unwrap();
        assert!((f.p - 0.995).abs() < 1e-9);
        assert!((f.a0 - 0.4975).abs() < 1e-9 && (f.b0 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn flat_data_is_perfect() {
        let recs: Vec<RbRecord> = [1, 2, 3].iter().map(|&m| RbRecord { m, randomization: 0, survival: 0.98, leakage: 0.0 }).collect();
        assert_eq!(fit_rb(&recs).unwrap().f_ave, 1.0);
        assert!(matches!(fit_rb(&recs[..2]), Err(Error::IllConditioned(_))));
    }
}
