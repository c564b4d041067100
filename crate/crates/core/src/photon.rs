//! Cavity photon-number fluctuations as a two-state telegraph process and
//! the qubit dephasing they cause.

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use std::f64::consts::E;

use crate::constants::{HBAR, K_B, TWO_PI};
use crate::error::{invalid, Error, Result};
use crate::noise::{estimate_from_phases, DephasingEstimate, Sequence};
use crate::optim::{brent_min, brent_root};

/// Mean thermal photon number.
pub fn n_thermal(temperature: f64, omega_r: f64) -> Result<f64> {
    if !(temperature >= 0.0) || !(omega_r > 0.0) {
        return invalid("temperature must be non-negative and omega_r positive");
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (HBAR * omega_r / (K_B * temperature)).exp_m1())
}

/// Inverse of `n_thermal`.
pub fn photon_temperature(n_th: f64, omega_r: f64) -> Result<f64> {
    if !(n_th >= 0.0) || !(omega_r > 0.0) {
        return invalid("n_th must be non-negative and omega_r positive");
    }
    if n_th == 0.0 {
        return Ok(0.0);
    }
    Ok(HBAR * omega_r / (K_B * (1.0 / n_th).ln_1p()))
}

/// Telegraph model; the qubit frequency shifts by `chi` while the cavity
/// holds a photon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotonNoiseParams {
    pub omega_r: f64,
    pub q_factor: f64,
    pub n_th: f64,
    pub chi: f64,
}

impl PhotonNoiseParams {
    pub fn from_temperature(omega_r: f64, q_factor: f64, temperature: f64, chi: f64) -> Result<Self> {
        let p = Self { omega_r, q_factor, n_th: n_thermal(temperature, omega_r)?, chi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_r > 0.0 && self.q_factor > 0.0 && self.n_th >= 0.0 && self.chi >= 0.0)
            || !(self.omega_r.is_finite() && self.q_factor.is_finite() && self.n_th.is_finite() && self.chi.is_finite())
        {
            return invalid("omega_r and q_factor must be positive, n_th and chi non-negative");
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.omega_r / self.q_factor
    }

    pub fn rate_up(&self) -> f64 {
        self.kappa() * self.n_th
    }

    pub fn rate_down(&self) -> f64 {
        self.kappa() * (1.0 + self.n_th)
    }

    /// Stationary probability of the one-photon state.
    pub fn occupancy(&self) -> f64 {
        self.n_th / (1.0 + 2.0 * self.n_th)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RtnTrajectory {
    pub dt: f64,
    pub states: Vec<u8>,
    pub seed: u64,
}

impl RtnTrajectory {
    pub fn occupancy(&self) -> f64 {
        self.states.iter().map(|&s| s as f64).sum::<f64>() / self.states.len().max(1) as f64
    }

    /// Completed dwell lengths (s) in state `s`, excluding the first and
    /// last runs which are cut by the window.
    pub fn dwell_times(&self, s: u8) -> Vec<f64> {
        let mut out = Vec::new();
        let mut run = 0usize;
        let mut first = true;
        for w in self.states.windows(2) {
            run += 1;
            if w[0] != w[1] {
                if w[0] == s && !first {
                    out.push(run as f64 * self.dt);
                }
                first = false;
                run = 0;
            }
        }
        out
    }
}

/// Exact telegraph path on [0, duration] as (switch time, new state) pairs,
/// starting from the stationary distribution.
fn jump_path(p: &PhotonNoiseParams, duration: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, u8)> {
    let mut s = u8::from(rng.random::<f64>() < p.occupancy());
    let mut t = 0.0;
    let mut path = vec![(0.0, s)];
    loop {
        let rate = if s == 0 { p.rate_up() } else { p.rate_down() };
        if rate <= 0.0 {
            break;
        }
        t += Exp::new(rate).expect("positive rate").sample(rng);
        if t >= duration {
            break;
        }
        s ^= 1;
        path.push((t, s));
    }
    path
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_step(p: &PhotonNoiseParams, dt: f64) -> Result<()> {
    let r = p.rate_up().max(p.rate_down());
    if dt * r > 0.1 {
        return Err(Error::StepTooCoarse(format!("dt * rate = {:.3} exceeds 0.1", dt * r)));
    }
    Ok(())
}

/// Telegraph trajectory sampled at t = i dt from an exact jump path.
pub fn simulate_rtn(params: &PhotonNoiseParams, duration: f64, dt: f64, seed: u64) -> Result<RtnTrajectory> {
    params.validate()?;
    if !(dt > 0.0 && duration >= dt) {
        return invalid("need 0 < dt <= duration");
    }
    check_step(params, dt)?;
    let path = jump_path(params, duration, &mut rng_for(seed, 0));
    let n = (duration / dt).floor() as usize;
    let mut states = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let t = i as f64 * dt;
        while k + 1 < path.len() && path[k + 1].0 <= t {
            k += 1;
        }
        states.push(path[k].1);
    }
    Ok(RtnTrajectory { dt, states, seed })
}

/// Monte Carlo |<exp(-i chi int zeta n dt)>| with exact switching times.
pub fn dephasing_decay(params: &PhotonNoiseParams, seq: Sequence, tau: f64, n_traj: usize, seed: u64) -> Result<DephasingEstimate> {
    params.validate()?;
    if !(tau > 0.0) || n_traj == 0 {
        return invalid("tau and the trajectory count must be positive");
    }
    let phases: Vec<f64> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let path = jump_path(params, tau, &mut rng_for(seed, i as u64));
            let mut phi = 0.0;
            for (k, &(t0, s)) in path.iter().enumerate() {
                if s == 1 {
                    let t1 = path.get(k + 1).map_or(tau, |x| x.0);
                    phi += seq.sign_integral(t0, t1, tau);
                }
            }
            params.chi * phi
        })
        .collect();
    Ok(estimate_from_phases(tau, &phases))
}

/// Closed-form telegraph coherence: the two-state generating function is
/// propagated exactly through each constant-sign segment.
pub fn analytic_coherence(params: &PhotonNoiseParams, seq: Sequence, tau: f64) -> Result<f64> {
    params.validate()?;
    if !(tau >= 0.0) {
        return invalid("tau must be non-negative");
    }
    let (up, dn) = (params.rate_up(), params.rate_down());
    let pi1 = params.occupancy();
    let mut g = nalgebra::Vector2::new(C64::new(1.0 - pi1, 0.0), C64::new(pi1, 0.0));
    let mut edges = vec![0.0];
    edges.extend(seq.pulse_times(tau));
    edges.push(tau);
    for (k, w) in edges.windows(2).enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let m = Matrix2::new(C64::new(-up, 0.0), C64::new(dn, 0.0), C64::new(up, 0.0), C64::new(-dn, -sign * params.chi));
        g = (m * C64::new(w[1] - w[0], 0.0)).exp() * g;
    }
    Ok((g[0] + g[1]).norm())
}

/// Inverse of the first time the closed-form coherence falls to 1/e
/// (1/s); zero when it never does within 1e6 s.
pub fn dephasing_rate(params: &PhotonNoiseParams, seq: Sequence) -> Result<f64> {
    let target = 1.0 / E;
    let f = |t: f64| analytic_coherence(params, seq, t).map(|c| c - target);
    let mut lo = 0.0;
    let mut hi = 1e-9;
    while f(hi)? > 0.0 {
        lo = hi;
        hi *= 1.25;
        if hi > 1e6 {
            return Ok(0.0);
        }
    }
    let g = |t: f64| f(t).unwrap_or(f64::NAN);
    let t = brent_root(&g, lo, hi, 1e-12 * hi).ok_or_else(|| Error::Bracketing("1/e crossing".into()))?;
    Ok(1.0 / t)
}

/// Upper temperature of the search in `required_temperature`.
pub const MAX_PHOTON_TEMPERATURE: f64 = 1.0;

/// Lowest photon temperature at which the closed-form dephasing rate of
/// `seq` reaches `target_rate` (1/s); kappa and chi are held fixed.
pub fn required_temperature(target_rate: f64, omega_r: f64, kappa: f64, chi: f64, seq: Sequence) -> Result<f64> {
    if !(target_rate > 0.0) {
        return invalid("target rate must be positive");
    }
    let rate_at = |t: f64| -> Result<f64> { dephasing_rate(&PhotonNoiseParams::from_temperature(omega_r, omega_r / kappa, t, chi)?, seq) };
    let grid: Vec<f64> = (0..=60).map(|i| MAX_PHOTON_TEMPERATURE * 10f64.powf(-3.0 + 3.0 * i as f64 / 60.0)).collect();
    let mut lo = 0.0;
    for &t in &grid {
        if rate_at(t)? >= target_rate {
            let f = |x: f64| rate_at(x).map(|r| r - target_rate).unwrap_or(f64::NAN);
            return brent_root(&f, lo, t, 1e-9 * t).ok_or_else(|| Error::Bracketing("temperature root".into()));
        }
        lo = t;
    }
    Err(Error::Bracketing(format!("rate {target_rate:.4e} /s not reached below {MAX_PHOTON_TEMPERATURE} K")))
}

/// Cavity frequency that makes `required_temperature` most consistent with
/// (rate, temperature) anchors in the log least-squares sense. The search
/// runs over 2 pi x [1, 30] GHz.
pub fn calibrate_cavity_frequency(anchors: &[(f64, f64)], kappa: f64, chi: f64) -> Result<f64> {
    if anchors.is_empty() || anchors.iter().any(|a| !(a.0 > 0.0 && a.1 > 0.0)) {
        return invalid("need positive (rate, temperature) anchors");
    }
    let cost = |lw: f64| -> f64 {
        let w = lw.exp();
        anchors
            .iter()
            .map(|&(rate, temp)| match required_temperature(rate, w, kappa, chi, Sequence::Ramsey) {
                Ok(t) => (t / temp).ln().powi(2),
                Err(_) => 1e6,
            })
            .sum()
    };
    let (lw, _) = brent_min(&cost, (TWO_PI * 1e9).ln(), (TWO_PI * 30e9).ln())
        .ok_or_else(|| Error::ConvergenceFailure("cavity frequency calibration".into()))?;
    Ok(lw.exp())
}
