//! Monte Carlo dephasing: correlated Gaussian flux-noise trajectories from
//! a power-law spectrum, accumulated under Ramsey or CPMG sign functions.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::decoherence::PowerLawPsd;
use crate::error::{invalid, Error, Result};
use crate::quad::integrate;

/// Dynamical-decoupling sequence of total length tau.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sequence {
    Ramsey,
    /// N pi pulses at (k - 1/2) tau / N.
    Cpmg(u32),
}

impl Sequence {
    pub fn pulse_times(&self, tau: f64) -> Vec<f64> {
        match self {
            Self::Ramsey => Vec::new(),
            Self::Cpmg(n) => (1..=*n).map(|k| (k as f64 - 0.5) * tau / *n as f64).collect(),
        }
    }

    /// Integral of the sign function over [a, b] within [0, tau].
    pub fn sign_integral(&self, a: f64, b: f64, tau: f64) -> f64 {
        let (a, b) = (a.max(0.0), b.min(tau));
        if b <= a {
            return 0.0;
        }
        let pulses = self.pulse_times(tau);
        let mut edges = vec![0.0];
        edges.extend(&pulses);
        edges.push(tau);
        let mut s = 0.0;
        for (k, w) in edges.windows(2).enumerate() {
            let (lo, hi) = (w[0].max(a), w[1].min(b));
            if hi > lo {
                s += if k % 2 == 0 { hi - lo } else { lo - hi };
            }
        }
        s
    }

    pub fn label(&self) -> String {
        match self {
            Self::Ramsey => "ramsey".into(),
            Self::Cpmg(n) => format!("cpmg{n}"),
        }
    }
}

/// Integral of u^-alpha cos u over [u0, u1] with u0 <= u1 <= 1, by series.
fn cos_power_series(alpha: f64, u0: f64, u1: f64) -> f64 {
    let mut s = 0.0;
    let mut fact = 1.0;
    for k in 0..30 {
        if k > 0 {
            fact *= (2 * k - 1) as f64 * (2 * k) as f64;
        }
        let p = 2.0 * k as f64 + 1.0 - alpha;
        let term = if p.abs() < 1e-12 { (u1 / u0).ln() } else { (u1.powf(p) - u0.powf(p)) / p };
        let t = term / fact;
        s += if k % 2 == 0 { t } else { -t };
        if t.abs() < 1e-18 * s.abs() {
            break;
        }
    }
    s
}

/// Correlation R(t) = 2 * integral S(omega) cos(omega t) d omega.
pub fn correlation_at(psd: &PowerLawPsd, t: f64) -> Result<f64> {
    psd.validate()?;
    let (a, al, w0, w1) = (psd.a, psd.alpha, psd.omega_min, psd.omega_max);
    let t = t.abs();
    if t == 0.0 {
        let p = 1.0 - al;
        let v = if p.abs() < 1e-12 { (w1 / w0).ln() } else { (w1.powf(p) - w0.powf(p)) / p };
        return Ok(2.0 * a * v);
    }
    let (u0, u1) = (w0 * t, w1 * t);
    let mut j = 0.0;
    if u0 < 1.0 {
        j += cos_power_series(al, u0, u1.min(1.0));
    }
    let mut lo = u0.max(1.0);
    if u1 > lo {
        let f = |u: f64| u.powf(-al) * u.cos();
        let mut k = (lo / PI).floor() + 1.0;
        while lo < u1 {
            let hi = (k * PI).min(u1);
            j += integrate(&f, lo, hi, 1e-300, 1e-11)?;
            lo = hi;
            k += 1.0;
        }
    }
    Ok(2.0 * a * t.powf(al - 1.0) * j)
}

pub fn correlation_from_psd(psd: &PowerLawPsd, dt: f64, n: usize) -> Result<Vec<f64>> {
    if !(dt > 0.0) || n == 0 {
        return invalid("need dt > 0 and n >= 1");
    }
    (0..n).into_par_iter().map(|k| correlation_at(psd, k as f64 * dt)).collect()
}

/// Relative diagonal loading applied before the Cholesky factorization.
pub const REGULARIZATION: f64 = 1e-10;

/// Cholesky factor of the Toeplitz covariance of n samples spaced dt.
#[derive(Clone, Debug)]
pub struct NoiseModel {
    pub dt: f64,
    pub l: DMatrix<f64>,
}

impl NoiseModel {
    pub fn from_correlation(r: &[f64], dt: f64) -> Result<Self> {
        let n = r.len();
        let mut m = DMatrix::from_fn(n, n, |i, j| r[i.abs_diff(j)]);
        for i in 0..n {
            m[(i, i)] += REGULARIZATION * r[0];
        }
        let chol = m.cholesky().ok_or_else(|| Error::FactorizationFailure("covariance not positive definite".into()))?;
        Ok(Self { dt, l: chol.l() })
    }

    pub fn from_psd(psd: &PowerLawPsd, dt: f64, n: usize) -> Result<Self> {
        Self::from_correlation(&correlation_from_psd(psd, dt, n)?, dt)
    }

    /// Identity covariance (white samples), for testing.
    pub fn white(dt: f64, n: usize) -> Self {
        Self { dt, l: DMatrix::identity(n, n) }
    }

    pub fn n_samples(&self) -> usize {
        self.l.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryBatch {
    pub dt: f64,
    pub samples: Vec<Vec<f64>>,
}

/// Independent trajectories; trajectory i uses ChaCha stream i of `seed`, so
/// results do not depend on the thread count.
pub fn sample_trajectories(model: &NoiseModel, n_traj: usize, seed: u64) -> TrajectoryBatch {
    let n = model.n_samples();
    let samples = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            (0..n).map(|r| model.l.row(r).iter().take(r + 1).zip(&z).map(|(a, b)| a * b).sum()).collect()
        })
        .collect();
    TrajectoryBatch { dt: model.dt, samples }
}

/// Frequency shift delta omega = k1 xi or k2 xi^2 (rad/s, xi in Phi0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coupling {
    Linear(f64),
    Quadratic(f64),
}

impl Coupling {
    pub fn shift(&self, xi: f64) -> f64 {
        match self {
            Self::Linear(k) => k * xi,
            Self::Quadratic(k) => k * xi * xi,
        }
    }
}

/// Trajectory count below which estimates are flagged.
pub const MIN_TRAJECTORIES: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DephasingEstimate {
    pub tau: f64,
    pub coherence: f64,
    pub stderr: f64,
    pub n_traj: usize,
    pub low_statistics: bool,
}

/// |<exp(-i phi)>| with phi = sum_i w_i delta omega(xi_i) and w_i the exact
/// integral of the sign function over sample interval i.
pub fn simulate_dephasing(batch: &TrajectoryBatch, coupling: Coupling, seq: Sequence, tau: f64) -> Result<DephasingEstimate> {
    let m = batch.samples.len();
    if m == 0 {
        return invalid("empty trajectory batch");
    }
    let n = batch.samples[0].len();
    if !(tau > 0.0) || tau > batch.dt * n as f64 * (1.0 + 1e-12) {
        return invalid("tau must be positive and covered by the trajectories");
    }
    let w: Vec<f64> = (0..n).map(|i| seq.sign_integral(i as f64 * batch.dt, (i + 1) as f64 * batch.dt, tau)).collect();
    let phases: Vec<f64> = batch.samples.iter().map(|xi| xi.iter().zip(&w).map(|(x, wi)| wi * coupling.shift(*x)).sum()).collect();
    Ok(estimate_from_phases(tau, &phases))
}

/// Coherence magnitude and its standard error from per-trajectory phases;
/// the error is that of the projection onto the mean phasor direction.
pub(crate) fn estimate_from_phases(tau: f64, phases: &[f64]) -> DephasingEstimate {
    let m = phases.len();
    let mean: C64 = phases.iter().map(|p| C64::from_polar(1.0, -p)).sum::<C64>() / m as f64;
    let dir = C64::from_polar(1.0, -mean.arg());
    let proj: Vec<f64> = phases.iter().map(|p| (C64::from_polar(1.0, -p) * dir).re).collect();
    let pm = proj.iter().sum::<f64>() / m as f64;
    let var = proj.iter().map(|v| (v - pm).powi(2)).sum::<f64>() / (m.max(2) - 1) as f64;
    let low = m < MIN_TRAJECTORIES;
    if low {
        log::warn!("only {m} trajectories; coherence estimate is noisy");
    }
    DephasingEstimate { tau, coherence: mean.norm(), stderr: (var / m as f64).sqrt(), n_traj: m, low_statistics: low }
}

/// Monte Carlo coherence for several sequences on a tau grid. Each tau gets
/// its own batch with dt = tau / n_samples and the spectrum cut at the
/// sampling Nyquist frequency pi / dt.
pub fn coherence_curves(
    psd: &PowerLawPsd,
    coupling: Coupling,
    seqs: &[Sequence],
    taus: &[f64],
    n_samples: usize,
    n_traj: usize,
    seed: u64,
) -> Result<Vec<Vec<DephasingEstimate>>> {
    let mut out = vec![Vec::new(); seqs.len()];
    for (it, &tau) in taus.iter().enumerate() {
        let dt = tau / n_samples as f64;
        let model = NoiseModel::from_psd(&psd.band_limited(PI / dt), dt, n_samples)?;
        let batch = sample_trajectories(&model, n_traj, seed.wrapping_add((it as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        for (s, seq) in seqs.iter().enumerate() {
            out[s].push(simulate_dephasing(&batch, coupling, *seq, tau)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct FrequencyHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// sqrt(6 / n) for independent samples.
    pub skewness_stderr: f64,
}

pub fn frequency_histogram(batch: &TrajectoryBatch, coupling: Coupling, bins: usize) -> Result<FrequencyHistogram> {
    if bins == 0 {
        return invalid("need at least one bin");
    }
    let v: Vec<f64> = batch.samples.iter().flatten().map(|x| coupling.shift(*x)).collect();
    if v.is_empty() {
        return invalid("empty trajectory batch");
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for x in &v {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(FrequencyHistogram {
        edges,
        counts,
        mean,
        variance: m2,
        skewness: if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 },
        skewness_stderr: (6.0 / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psd() -> PowerLawPsd {
        PowerLawPsd::new(1e-10, 0.7, 2.0 * PI, 2.0 * PI * 1e8).unwrap()
    }

    #[test]
    fn sign_integral_sums_to_zero_for_echo() {
        for n in 1..8 {
            let s = Sequence::Cpmg(n);
            let tot: f64 = (0..37).map(|i| s.sign_integral(i as f64 * 0.03, (i + 1) as f64 * 0.03, 1.1)).sum();
            assert!(tot.abs() < 1e-14);
        }
        assert!((Sequence::Ramsey.sign_integral(0.0, 2.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn correlation_series_matches_quadrature() {
        let p = psd();
        for &t in &[1e-9, 3e-8, 2e-7] {
            let direct = 2.0 * integrate(&|w: f64| p.density(w) * (w * t).cos(), p.omega_min, 1e3, 0.0, 1e-12).unwrap()
                + 2.0 * {
                    let mut s = 0.0;
                    let mut lo = 1e3;
                    while lo < p.omega_max {
                        let hi = (lo * 1.5).min(p.omega_max);
                        s += integrate(&|w: f64| p.density(w) * (w * t).cos(), lo, hi, 0.0, 1e-12).unwrap();
                        lo = hi;
                    }
                    s
                };
            let r = correlation_at(&p, t).unwrap();
            assert!((r - direct).abs() < 1e-7 * r.abs().max(correlation_at(&p, 0.0).unwrap() * 1e-6), "{t}: {r} {direct}");
        }
    }

    #[test]
    fn static_noise_refocused() {
        let batch = TrajectoryBatch { dt: 0.01, samples: vec![vec![0.3; 100]; 10] };
        let e = simulate_dephasing(&batch, Coupling::Linear(50.0), Sequence::Cpmg(4), 1.0).unwrap();
        assert!((e.coherence - 1.0).abs() < 1e-12);
        let r = simulate_dephasing(&batch, Coupling::Linear(50.0), Sequence::Ramsey, 1.0).unwrap();
        assert!((r.coherence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tau_beyond_batch_rejected() {
        let batch = TrajectoryBatch { dt: 0.01, samples: vec![vec![0.0; 10]; 2] };
        assert!(simulate_dephasing(&batch, Coupling::Linear(1.0), Sequence::Ramsey, 1.0).is_err());
    }
}
