//! Filter-function dephasing under power-law noise, its small-window
//! approximation, rate scaling with pulse number and decay fits.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::lsq::least_squares;
use crate::quad::integrate;

/// One-sided spectral density S(omega) = a / |omega|^alpha on
/// [omega_min, omega_max] (rad/s) and zero outside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawPsd {
    pub a: f64,
    pub alpha: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl PowerLawPsd {
    pub fn new(a: f64, alpha: f64, omega_min: f64, omega_max: f64) -> Result<Self> {
        let p = Self { a, alpha, omega_min, omega_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return invalid("PSD amplitude must be non-negative");
        }
        if !(0.0..2.0).contains(&self.alpha) {
            return invalid(format!("PSD exponent {} outside [0, 2)", self.alpha));
        }
        if !(self.omega_min > 0.0 && self.omega_max > self.omega_min && self.omega_max.is_finite()) {
            return invalid("need 0 < omega_min < omega_max < inf");
        }
        Ok(())
    }

    pub fn density(&self, w: f64) -> f64 {
        let w = w.abs();
        if w < self.omega_min || w > self.omega_max {
            0.0
        } else {
            self.a * w.powf(-self.alpha)
        }
    }

    /// Same spectrum with the upper cutoff lowered to `omega` if smaller.
    pub fn band_limited(&self, omega: f64) -> Self {
        Self { omega_max: self.omega_max.min(omega), ..*self }
    }
}

/// Squared ratio cos(N t)/cos(t) (odd N) or sin(N t)/cos(t) (even N) at
/// t = X/2N, with the removable singularities handled by a finite sum.
fn lobe_ratio(x: f64, n: u32) -> f64 {
    let t = x / (2.0 * n as f64);
    let c = t.cos();
    if c.abs() > 1e-3 {
        let num = if n % 2 == 1 { (x / 2.0).cos() } else { (x / 2.0).sin() };
        return (num / c).powi(2);
    }
    let mut s = 0.0;
    for k in 0..n {
        let arg = (n as f64 - 1.0 - 2.0 * k as f64) * t;
        let term = if n % 2 == 1 { arg.cos() } else { arg.sin() };
        s += if k % 2 == 0 { term } else { -term };
    }
    s * s
}

/// Dimensionless CPMG-N filter g(X) = F / tau^2 at X = omega tau.
pub fn filter_normalized(x: f64, n: u32) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        return 0.0;
    }
    let s = (x / (4.0 * n as f64)).sin();
    8.0 / (x * x) * s.powi(4) * lobe_ratio(x, n)
}

/// CPMG-N filter function F(X) in s^2 for total time tau.
pub fn filter_function(x: f64, n: u32, tau: f64) -> Result<f64> {
    if n == 0 {
        return invalid("pulse number must be at least 1");
    }
    if !(tau > 0.0) {
        return invalid("tau must be positive");
    }
    Ok(tau * tau * filter_normalized(x, n))
}

/// Half-width of the integration window around the main filter peak.
pub const MOMENT_WINDOW: f64 = 8.0 * PI;

/// Area I and centroid X* of the normalized filter over the main-peak window
/// [N pi - 8 pi, N pi + 8 pi] clipped to [0, 2 N pi].
pub fn filter_moments(n: u32) -> Result<(f64, f64)> {
    if n == 0 {
        return invalid("pulse number must be at least 1");
    }
    let np = n as f64 * PI;
    let lo = (np - MOMENT_WINDOW).max(0.0);
    let hi = (np + MOMENT_WINDOW).min(2.0 * np);
    let mut pts = vec![lo];
    let mut k = (lo / PI).floor() + 1.0;
    while k * PI < hi {
        pts.push(k * PI);
        k += 1.0;
    }
    pts.push(hi);
    let (mut i0, mut i1) = (0.0, 0.0);
    for w in pts.windows(2) {
        i0 += integrate(&|x| filter_normalized(x, n), w[0], w[1], 1e-14, 1e-12)?;
        i1 += integrate(&|x| x * filter_normalized(x, n), w[0], w[1], 1e-12, 1e-12)?;
    }
    Ok((i0, i1 / i0))
}

/// Dephasing exponent 2 * integral S(omega) F(omega tau) d omega over the
/// PSD band. Integrated piecewise up to 40 harmonics of the main peak; the
/// remainder uses the Parseval area of the filter with a 1/X^2 envelope.
pub fn dephasing_exponent(psd: &PowerLawPsd, n: u32, tau: f64) -> Result<f64> {
    psd.validate()?;
    if n == 0 || !(tau > 0.0) {
        return invalid("need n >= 1 and tau > 0");
    }
    let xmin = psd.omega_min * tau;
    let xmax = psd.omega_max * tau;
    let cap = xmax.min(40.0 * n as f64 * PI);
    let g = |x: f64| filter_normalized(x, n);
    let s = |x: f64| psd.a * (x / tau).powf(-psd.alpha);
    let mut pts = vec![xmin];
    let mut k = (xmin / PI).floor() + 1.0;
    while k * PI < cap {
        pts.push(k * PI);
        k += 1.0;
    }
    pts.push(cap);
    let mut body = 0.0;
    let mut mass = integrate(&g, 0.0, xmin.min(cap), 1e-16, 1e-10)?;
    for w in pts.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        body += integrate(&|x| s(x) * g(x), w[0], w[1], 0.0, 1e-10)?;
        mass += integrate(&g, w[0], w[1], 1e-16, 1e-10)?;
    }
    let mut tail = 0.0;
    if xmax > cap {
        let rest = (PI / 2.0 - mass).max(0.0);
        let al = psd.alpha;
        // envelope rest * cap / X^2 beyond cap, cut at xmax
        tail = rest * cap * psd.a * tau.powf(al) * (cap.powf(-1.0 - al) - xmax.powf(-1.0 - al)) / (1.0 + al);
    }
    Ok(2.0 * tau * (body + tail))
}

pub fn coherence_numeric(psd: &PowerLawPsd, n: u32, tau: f64) -> Result<f64> {
    Ok((-dephasing_exponent(psd, n, tau)?).exp())
}

/// Small-window approximation exp(-2 tau I S(X*/tau)).
pub fn coherence_approx(psd: &PowerLawPsd, n: u32, tau: f64) -> Result<f64> {
    psd.validate()?;
    if !(tau > 0.0) {
        return invalid("tau must be positive");
    }
    let (i, xs) = filter_moments(n)?;
    Ok((-2.0 * tau * i * psd.density(xs / tau)).exp())
}

/// Filter area used in the closed-form rate.
pub const FILTER_AREA: f64 = 1.24;

/// Gamma_N = (2 I a)^(1/(1+alpha)) (pi N)^(-alpha/(1+alpha)), so that
/// C = exp[-(Gamma_N tau)^(1+alpha)].
pub fn gamma_n(a: f64, alpha: f64, n: u32) -> f64 {
    let p = 1.0 / (1.0 + alpha);
    (2.0 * FILTER_AREA * a).powf(p) * (PI * n as f64).powf(-alpha * p)
}

/// Inverse of [`gamma_n`] for two rates with different N.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawFit {
    pub a: f64,
    pub alpha: f64,
    pub alpha_stderr: f64,
}

/// Least squares of ln Gamma against ln N.
pub fn fit_powerlaw_psd(points: &[(u32, f64)]) -> Result<PowerLawFit> {
    if points.iter().any(|p| p.0 == 0 || !(p.1 > 0.0)) {
        return invalid("rates must be positive with N >= 1");
    }
    let x: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = x.len() as f64;
    let xb = x.iter().sum::<f64>() / m;
    let yb = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - xb).powi(2)).sum();
    if sxx < 1e-12 {
        return Err(Error::Degenerate("all rates share one pulse number".into()));
    }
    let slope = x.iter().zip(&y).map(|(a, b)| (a - xb) * (b - yb)).sum::<f64>() / sxx;
    let icpt = yb - slope * xb;
    if !(slope > -1.0 && slope <= 0.0) {
        return Err(Error::Degenerate(format!("slope {slope:.3} outside (-1, 0]")));
    }
    let alpha = -slope / (1.0 + slope);
    let a = ((icpt - slope * PI.ln()) * (1.0 + alpha)).exp() / (2.0 * FILTER_AREA);
    let resid: f64 = x.iter().zip(&y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let se_slope = if m > 2.0 { (resid / (m - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(PowerLawFit { a, alpha, alpha_stderr: se_slope / (1.0 + slope).powi(2) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayTrace {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayShape {
    Exponential,
    Gaussian,
    /// exp[-(r t)^beta]
    Stretched(f64),
}

impl DecayShape {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Exponential => (-x).exp(),
            Self::Gaussian => (-x * x).exp(),
            Self::Stretched(b) => (-x.powf(*b)).exp(),
        }
    }
}

/// Decay shape, optionally with a known e^(-t/2T1) factor divided out first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayModel {
    pub shape: DecayShape,
    pub t1: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub rate_stderr: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub rms: f64,
    pub r_squared: f64,
}

/// Fits y = A shape(r t) + B.
pub fn fit_decay(trace: &DecayTrace, model: DecayModel) -> Result<DecayFit> {
    let n = trace.t.len();
    if n != trace.y.len() || n < 5 {
        return invalid("need at least 5 points of matching length");
    }
    let y: Vec<f64> = match model.t1 {
        Some(t1) if t1 > 0.0 => trace.t.iter().zip(&trace.y).map(|(t, y)| y / (-t / (2.0 * t1)).exp()).collect(),
        Some(_) => return invalid("T1 must be positive"),
        None => trace.y.clone(),
    };
    let t = &trace.t;
    let ymax = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = ymax - ymin;
    if !(spread > 1e-12 * ymax.abs().max(ymin.abs()).max(1e-300)) {
        return Err(Error::IllConditioned("trace is constant".into()));
    }
    let b0 = y[n - 1].min(ymin);
    let a0 = y[0] - b0;
    let target = b0 + a0 / std::f64::consts::E;
    let t_e = t.iter().zip(&y).find(|(_, v)| **v <= target).map(|(t, _)| *t).unwrap_or(t[n - 1]);
    let r0 = 1.0 / t_e.max(t[1] - t[0]).max(1e-300);
    let scale = r0;
    let resid = |p: &[f64]| -> Option<Vec<f64>> {
        let r = p[1] * scale;
        Some(t.iter().zip(&y).map(|(t, v)| p[0] * model.shape.eval(r.abs() * t) + p[2] - v).collect())
    };
    let fit = least_squares(resid, &[a0, 1.0, b0])?;
    let rate = fit.params[1].abs() * scale;
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(DecayFit {
        rate,
        rate_stderr: fit.stderr(1) * scale,
        amplitude: fit.params[0],
        offset: fit.params[2],
        rms: (fit.ssr / n as f64).sqrt(),
        r_squared: 1.0 - fit.ssr / sst,
    })
}

/// First time at which a decreasing coherence curve crosses 1/e, by
/// log-linear interpolation between samples.
pub fn one_over_e_time(t: &[f64], c: &[f64]) -> Option<f64> {
    let target = -1.0;
    for i in 1..t.len() {
        if c[i] <= (-1.0f64).exp() {
            let (l0, l1) = (c[i - 1].max(1e-300).ln(), c[i].max(1e-300).ln());
            if l1 == l0 {
                return Some(t[i]);
            }
            return Some(t[i - 1] + (target - l0) / (l1 - l0) * (t[i] - t[i - 1]));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    /// |integral of the CPMG sign function times e^{iXs}| over s in [0, 1],
    /// summed exactly segment by segment.
    fn filter_time_domain(x: f64, n: u32) -> f64 {
        let mut edges = vec![0.0];
        for k in 1..=n {
            edges.push((k as f64 - 0.5) / n as f64);
        }
        edges.push(1.0);
        let (mut re, mut im) = (0.0, 0.0);
        for (k, w) in edges.windows(2).enumerate() {
            let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
            re += sgn * ((x * w[1]).sin() - (x * w[0]).sin()) / x;
            im += sgn * (-(x * w[1]).cos() + (x * w[0]).cos()) / x;
        }
        0.5 * (re * re + im * im)
    }

    #[test]
    fn closed_form_matches_time_domain() {
        for n in 1..=12u32 {
            for i in 1..400 {
                let x = i as f64 * 0.173 * n as f64;
                let a = filter_normalized(x, n);
                let b = filter_time_domain(x, n);
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-6), "n={n} x={x}: {a} {b}");
            }
        }
    }

    #[test]
    fn singular_points_are_finite() {
        for n in [1u32, 2, 5, 10] {
            for m in 0..5 {
                let x = (2 * m + 1) as f64 * n as f64 * PI;
                let v = filter_normalized(x, n);
                assert!((v - filter_time_domain(x, n)).abs() < 1e-9 * v.max(1e-9));
            }
        }
    }

    #[test]
    fn parseval_area() {
        let n = 3;
        let mut s = 0.0;
        for k in 0..6000 {
            s += integrate(&|x| filter_normalized(x, n), k as f64 * PI, (k + 1) as f64 * PI, 1e-15, 1e-12).unwrap();
        }
        let tail = (2 * n + 1) as f64 / (6000.0 * PI);
        assert!((s + tail - PI / 2.0).abs() < 1e-4, "{}", s + tail);
    }

    #[test]
    fn rate_fit_inverts_gamma() {
        let pts: Vec<(u32, f64)> = [1, 10, 100].iter().map(|&n| (n, gamma_n(3e10, 0.7, n))).collect();
        let f = fit_powerlaw_psd(&pts).unwrap();
        assert!((f.alpha - 0.7).abs() < 1e-10);
        assert!((f.a / 3e10 - 1.0).abs() < 1e-9);
        assert!(matches!(fit_powerlaw_psd(&[(5, 1e5), (5, 2e5)]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let t: Vec<f64> = (0..60).map(|i| i as f64 * 0.2e-6).collect();
        let y: Vec<f64> = t.iter().map(|t| 0.9 * (-(t / 3e-6f64).powi(2)).exp() + 0.05).collect();
        let f = fit_decay(&DecayTrace { t, y }, DecayModel { shape: DecayShape::Gaussian, t1: None }).unwrap();
        assert!((f.rate * 3e-6 - 1.0).abs() < 1e-6);
    }
}
