//! Driven dissipative evolution of an N-level system in the frame rotating
//! with the drive, integrated by fixed-step RK4.

use nalgebra::SMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type Rho<const N: usize> = SMatrix<C64, N, N>;

/// Drive treatment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriveFrame {
    Rwa,
    CounterRotating,
}

#[derive(Clone, Debug)]
pub struct Lindblad<const N: usize> {
    /// E_k - k omega_d.
    detuning: [f64; N],
    /// Real drive matrix elements, |d01| = 1.
    coupling: SMatrix<f64, N, N>,
    omega_d: f64,
    frame: DriveFrame,
    /// Coherence damping: d rho_ab / dt gets -decay_ab rho_ab.
    decay: SMatrix<f64, N, N>,
    /// rates[j][k]: population transfer j -> k.
    rates: [[f64; N]; N],
}

impl<const N: usize> Lindblad<N> {
    /// `levels[k]` = E_k - E_0; `dephasing_points[k]` are the planar
    /// coordinates of the diagonal dephasing operators.
    pub fn new(
        levels: [f64; N],
        coupling: SMatrix<f64, N, N>,
        rates: [[f64; N]; N],
        dephasing_points: [(f64, f64); N],
        frame: DriveFrame,
    ) -> Self {
        let omega_d = levels[1] - levels[0];
        let detuning = std::array::from_fn(|k| levels[k] - levels[0] - k as f64 * omega_d);
        let outflow: [f64; N] = std::array::from_fn(|j| (0..N).filter(|&k| k != j).map(|k| rates[j][k]).sum());
        let decay = SMatrix::from_fn(|a, b| {
            let (pa, pb) = (dephasing_points[a], dephasing_points[b]);
            let kappa = |p: (f64, f64), out: f64| 0.5 * out + 0.5 * (p.0 * p.0 + p.1 * p.1);
            kappa(pa, outflow[a]) + kappa(pb, outflow[b]) - (pa.0 * pb.0 + pa.1 * pb.1)
        });
        Self { detuning, coupling, omega_d, frame, decay, rates }
    }

    pub fn drive_frequency(&self) -> f64 {
        self.omega_d
    }

    /// Fastest phase rotation present in the generator (rad/s).
    pub fn fastest_frequency(&self, peak: f64) -> f64 {
        let det = self.detuning.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let carrier = match self.frame {
            DriveFrame::Rwa => 0.0,
            DriveFrame::CounterRotating => (N as f64) * self.omega_d,
        };
        det.max(carrier).max(peak)
    }

    fn hamiltonian(&self, t: f64, amp: f64, phi: f64) -> Rho<N> {
        let mut h = Rho::<N>::zeros();
        for k in 0..N {
            h[(k, k)] = C64::new(self.detuning[k], 0.0);
        }
        if amp == 0.0 {
            return h;
        }
        for j in 0..N {
            for k in 0..N {
                let d = self.coupling[(j, k)];
                if j == k || d == 0.0 {
                    continue;
                }
                let m = j as f64 - k as f64;
                // lab drive cos(w t + phi) seen through e^{i (j - k) w t}
                let v = match self.frame {
                    DriveFrame::Rwa if m == 1.0 => C64::from_polar(1.0, -phi),
                    DriveFrame::Rwa if m == -1.0 => C64::from_polar(1.0, phi),
                    DriveFrame::Rwa => continue,
                    DriveFrame::CounterRotating => {
                        C64::from_polar(1.0, (m + 1.0) * self.omega_d * t + phi) + C64::from_polar(1.0, (m - 1.0) * self.omega_d * t - phi)
                    }
                };
                h[(j, k)] = v * (0.5 * amp * d);
            }
        }
        h
    }

    fn rhs(&self, rho: &Rho<N>, h: &Rho<N>) -> Rho<N> {
        let comm = h * rho - rho * h;
        let mut out = comm * C64::new(0.0, -1.0);
        for a in 0..N {
            for b in 0..N {
                out[(a, b)] -= rho[(a, b)] * self.decay[(a, b)];
            }
        }
        for j in 0..N {
            let pj = rho[(j, j)].re;
            for k in 0..N {
                if j != k {
                    out[(k, k)] += C64::new(self.rates[j][k] * pj, 0.0);
                }
            }
        }
        out
    }

    /// Evolves over [t0, t0 + duration] with envelope(s) (s measured from
    /// t0) and drive phase phi. Returns the state and the end time.
    pub fn evolve<E: Fn(f64) -> f64>(&self, rho: &Rho<N>, t0: f64, duration: f64, envelope: E, phi: f64, max_step: f64) -> Result<Rho<N>> {
        if duration <= 0.0 {
            return Ok(*rho);
        }
        let n = (duration / max_step).ceil().max(1.0) as usize;
        let dt = duration / n as f64;
        let mut r = *rho;
        for i in 0..n {
            let s = i as f64 * dt;
            let t = t0 + s;
            let h0 = self.hamiltonian(t, envelope(s), phi);
            let hm = self.hamiltonian(t + 0.5 * dt, envelope(s + 0.5 * dt), phi);
            let h1 = self.hamiltonian(t + dt, envelope(s + dt), phi);
            let half = C64::new(0.5 * dt, 0.0);
            let full = C64::new(dt, 0.0);
            let k1 = self.rhs(&r, &h0);
            let k2 = self.rhs(&(r + k1 * half), &hm);
            let k3 = self.rhs(&(r + k2 * half), &hm);
            let k4 = self.rhs(&(r + k3 * full), &h1);
            r += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
        }
        if !r.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::IntegrationFailure("state diverged; reduce the step".into()));
        }
        Ok(r)
    }
}

/// Diagonal dephasing operators as points in the plane whose pairwise
/// squared distances are twice the pure-dephasing rates of (0,1), (1,2),
/// (0,2).
pub fn dephasing_points(rates: [f64; 3]) -> Result<[(f64, f64); 3]> {
    if rates.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::InvalidInput("dephasing rates must be non-negative".into()));
    }
    let d01 = (2.0 * rates[0]).sqrt();
    let d12 = (2.0 * rates[1]).sqrt();
    let d02 = (2.0 * rates[2]).sqrt();
    if d01 == 0.0 {
        if (d12 - d02).abs() > 1e-12 * d12.max(d02).max(1.0) {
            return Err(Error::InvalidInput("with no 0-1 dephasing the 1-2 and 0-2 rates must match".into()));
        }
        return Ok([(0.0, 0.0), (0.0, 0.0), (d02, 0.0)]);
    }
    let x = (d01 * d01 + d02 * d02 - d12 * d12) / (2.0 * d01);
    let y2 = d02 * d02 - x * x;
    if y2 < -1e-12 * d02 * d02 {
        return Err(Error::InvalidInput("dephasing rates violate the triangle inequality of their square roots".into()));
    }
    Ok([(0.0, 0.0), (d01, 0.0), (x, y2.max(0.0).sqrt())])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_points_reproduce_rates() {
        let r = [1.0 / 4.7e-6, 1.0 / 3.4e-6, 1.0 / 5.4e-6];
        let p = dephasing_points(r).unwrap();
        let d = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)) / 2.0;
        assert!((d(p[0], p[1]) / r[0] - 1.0).abs() < 1e-12);
        assert!((d(p[1], p[2]) / r[1] - 1.0).abs() < 1e-12);
        assert!((d(p[0], p[2]) / r[2] - 1.0).abs() < 1e-12);
        assert!(dephasing_points([1.0, 100.0, 1.0]).is_err());
    }

    #[test]
    fn free_decay_matches_rates() {
        let g10 = 2e5;
        let gphi = 1e5;
        let p = dephasing_points([gphi, 0.0, gphi]).unwrap();
        let l = Lindblad::<2>::new(
            [0.0, 1e10],
            SMatrix::<f64, 2, 2>::new(0.0, 1.0, 1.0, 0.0),
            [[0.0, 0.0], [g10, 0.0]],
            [p[0], p[1]],
            DriveFrame::Rwa,
        );
        let mut rho = Rho::<2>::from_element(C64::new(0.5, 0.0));
        rho = l.evolve(&rho, 0.0, 3e-6, |_| 0.0, 0.0, 1e-9).unwrap();
        let t = 3e-6;
        assert!((rho[(1, 1)].re - 0.5 * (-g10 * t).exp()).abs() < 1e-9);
        assert!((rho[(0, 1)].re - 0.5 * (-(g10 / 2.0 + gphi) * t).exp()).abs() < 1e-9);
    }
}
