//! Nonlinear least squares on top of the `levenberg-marquardt` crate, with
//! central-difference Jacobians and a Gauss-Newton covariance estimate.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub struct LsqFit {
    pub params: Vec<f64>,
    /// Sum of squared residuals at the solution.
    pub ssr: f64,
    pub n_residuals: usize,
    /// Parameter covariance s^2 (J^T J)^-1 with s^2 = ssr / (m - n).
    pub covariance: DMatrix<f64>,
    pub converged: bool,
}

impl LsqFit {
    pub fn stderr(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }
}

struct Problem<'a, F: Fn(&[f64]) -> Option<Vec<f64>>> {
    f: &'a F,
    p: DVector<f64>,
    m: usize,
}

fn jacobian<F: Fn(&[f64]) -> Option<Vec<f64>>>(f: &F, p: &[f64], m: usize) -> Option<DMatrix<f64>> {
    let n = p.len();
    let mut j = DMatrix::zeros(m, n);
    let mut x = p.to_vec();
    for c in 0..n {
        let h = 1e-6 * p[c].abs().max(1e-8);
        x[c] = p[c] + h;
        let up = f(&x)?;
        x[c] = p[c] - h;
        let dn = f(&x)?;
        x[c] = p[c];
        if up.len() != m || dn.len() != m {
            return None;
        }
        for r in 0..m {
            j[(r, c)] = (up[r] - dn[r]) / (2.0 * h);
        }
    }
    Some(j)
}

impl<F: Fn(&[f64]) -> Option<Vec<f64>>> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, F> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = (self.f)(self.p.as_slice())?;
        if r.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(DVector::from_vec(r))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        jacobian(self.f, self.p.as_slice(), self.m)
    }
}

/// Minimizes the squared norm of `residuals(p)` starting from `p0`.
pub fn least_squares<F>(residuals: F, p0: &[f64]) -> Result<LsqFit>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let r0 = residuals(p0).ok_or_else(|| Error::InvalidInput("residuals undefined at the initial point".into()))?;
    let m = r0.len();
    let n = p0.len();
    if m < n {
        return Err(Error::Degenerate(format!("{m} residuals for {n} parameters")));
    }
    let problem = Problem { f: &residuals, p: DVector::from_column_slice(p0), m };
    let (solved, report) = LevenbergMarquardt::new().with_patience(200).minimize(problem);
    let p = solved.p.as_slice().to_vec();
    let r = residuals(&p).ok_or_else(|| Error::IllConditioned("residuals undefined at the solution".into()))?;
    let ssr: f64 = r.iter().map(|x| x * x).sum();
    let j = jacobian(&residuals, &p, m).ok_or_else(|| Error::IllConditioned("Jacobian undefined".into()))?;
    let jtj = j.transpose() * &j;
    let dof = (m - n).max(1) as f64;
    let covariance = match jtj.clone().try_inverse() {
        Some(inv) => inv * (ssr / dof),
        None => DMatrix::from_element(n, n, f64::INFINITY),
    };
    Ok(LsqFit { params: p, ssr, n_residuals: m, covariance, converged: report.termination.was_successful() })
}
