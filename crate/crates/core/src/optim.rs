//! Box-bounded Nelder-Mead on top of argmin.

use argmin::core::observers::{Observe, ObserverMode};
use argmin::core::{CostFunction, Error as ArgminError, Executor, State, TerminationReason, TerminationStatus, KV};
use argmin::solver::brent::{BrentOpt, BrentRoot};
use argmin::solver::neldermead::NelderMead;
use std::sync::{Arc, Mutex};

#[derive(Clone, Debug)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: u64,
    pub converged: bool,
    /// Best objective after each iteration (non-increasing).
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct NmOptions {
    pub max_iter: u64,
    /// Standard deviation of simplex values at which the search stops.
    pub sd_tolerance: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self { max_iter: 500, sd_tolerance: 1e-12 }
    }
}

struct Boxed<'a, F> {
    f: &'a F,
    lo: &'a [f64],
    hi: &'a [f64],
}

/// Objective outside the box: value at the clamped point plus a wall.
fn boxed_eval<F: Fn(&[f64]) -> f64>(f: &F, lo: &[f64], hi: &[f64], x: &[f64]) -> f64 {
    let mut excess = 0.0;
    let clamped: Vec<f64> = x
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| {
            let span = (h - l).abs().max(1e-300);
            if v < l {
                excess += ((l - v) / span).powi(2);
                l
            } else if v > h {
                excess += ((v - h) / span).powi(2);
                h
            } else {
                v
            }
        })
        .collect();
    let base = f(&clamped);
    if excess > 0.0 {
        base.abs().max(1.0) * (1.0 + 1e3 * excess) + base.max(0.0)
    } else {
        base
    }
}

impl<F: Fn(&[f64]) -> f64> CostFunction for Boxed<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, x: &Vec<f64>) -> Result<f64, ArgminError> {
        let v = boxed_eval(self.f, self.lo, self.hi, x);
        Ok(if v.is_finite() { v } else { f64::MAX })
    }
}

struct Trace(Arc<Mutex<Vec<f64>>>);

impl<I: State<Float = f64>> Observe<I> for Trace {
    fn observe_iter(&mut self, state: &I, _kv: &KV) -> Result<(), ArgminError> {
        self.0.lock().unwrap().push(state.get_best_cost());
        Ok(())
    }
}

/// Minimizes `f` inside the box [lo, hi] from `x0`, using an initial simplex
/// with edge `step[i]` along each axis (pointing inward at the bounds).
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], step: &[f64], lo: &[f64], hi: &[f64], opts: &NmOptions) -> NmResult {
    let n = x0.len();
    let mut simplex = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] = if x0[i] + step[i] <= hi[i] { x0[i] + step[i] } else { x0[i] - step[i] };
        simplex.push(v);
    }
    let trace = Arc::new(Mutex::new(Vec::new()));
    let solver = NelderMead::new(simplex).with_sd_tolerance(opts.sd_tolerance).expect("valid tolerance");
    let problem = Boxed { f, lo, hi };
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(opts.max_iter))
        .add_observer(Trace(trace.clone()), ObserverMode::Always)
        .run();
    let trace = trace.lock().unwrap().clone();
    match res {
        Ok(r) => {
            let st = r.state();
            let x = st.get_best_param().cloned().unwrap_or_else(|| x0.to_vec());
            let x: Vec<f64> = x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect();
            let converged = matches!(st.get_termination_status(), TerminationStatus::Terminated(TerminationReason::SolverConverged));
            NmResult { f: f(&x), x, iterations: st.get_iter(), converged, trace }
        }
        Err(_) => NmResult { f: f(x0), x: x0.to_vec(), iterations: 0, converged: false, trace },
    }
}

struct Scalar<'a, F>(&'a F);

impl<F: Fn(f64) -> f64> CostFunction for Scalar<'_, F> {
    type Param = f64;
    type Output = f64;
    fn cost(&self, x: &f64) -> Result<f64, ArgminError> {
        Ok((self.0)(*x))
    }
}

/// Root of `f` in [lo, hi]; f(lo) and f(hi) must differ in sign.
pub fn brent_root<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> Option<f64> {
    if f(lo) * f(hi) > 0.0 {
        return None;
    }
    let r = Executor::new(Scalar(f), BrentRoot::new(lo, hi, tol)).configure(|s| s.max_iters(200)).run().ok()?;
    r.state().get_best_param().copied()
}

/// Minimum of `f` on [lo, hi].
pub fn brent_min<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let r = Executor::new(Scalar(f), BrentOpt::new(lo, hi)).configure(|s| s.max_iters(200)).run().ok()?;
    let x = *r.state().get_best_param()?;
    Some((x, f(x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_in_box() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(&f, &[-1.0, 1.5], &[0.2, 0.2], &[-2.0, -2.0], &[2.0, 2.0], &NmOptions { max_iter: 2000, sd_tolerance: 1e-14 });
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn brent_wrappers() {
        let r = brent_root(&|x: f64| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        assert!(brent_root(&|x: f64| x * x + 1.0, 0.0, 2.0, 1e-12).is_none());
        let (x, _) = brent_min(&|x: f64| (x - 0.3).powi(2), -1.0, 1.0).unwrap();
        assert!((x - 0.3).abs() < 1e-6);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| (x[0] - 5.0).powi(2);
        let r = nelder_mead(&f, &[0.0], &[0.5], &[-1.0], &[1.0], &NmOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-5);
    }
}
