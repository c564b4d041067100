//! Hermitian band matrices and a shift-invert Lanczos solver for the lowest
//! few eigenpairs, plus a dense reference path.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Hermitian matrix stored by its lower band: entry (i, j) with i - kd <= j <= i.
#[derive(Clone, Debug)]
pub struct BandedHermitian {
    n: usize,
    kd: usize,
    data: Vec<C64>,
}

impl BandedHermitian {
    pub fn zeros(n: usize, kd: usize) -> Self {
        Self { n, kd, data: vec![C64::new(0.0, 0.0); n * (kd + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.kd
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.kd + 1) + (j + self.kd - i)
    }

    /// Sets A[i][j] (and implicitly A[j][i] = conj). Requires |i - j| <= kd.
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        let (r, c, v) = if i >= j { (i, j, v) } else { (j, i, v.conj()) };
        assert!(r - c <= self.kd, "entry outside band");
        let k = self.idx(r, c);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (r, c, conj) = if i >= j { (i, j, false) } else { (j, i, true) };
        if r - c > self.kd {
            return C64::new(0.0, 0.0);
        }
        let v = self.data[self.idx(r, c)];
        if conj {
            v.conj()
        } else {
            v
        }
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        let kd = self.kd;
        for v in y.iter_mut() {
            *v = C64::new(0.0, 0.0);
        }
        for i in 0..self.n {
            let base = i * (kd + 1);
            let j0 = i.saturating_sub(kd);
            let mut acc = self.data[base + kd] * x[i];
            for j in j0..i {
                let a = self.data[base + j + kd - i];
                acc += a * x[j];
                y[j] += a.conj() * x[i];
            }
            y[i] += acc;
        }
    }

    /// Gershgorin lower bound on the spectrum.
    pub fn lower_bound(&self) -> f64 {
        let mut off = vec![0.0; self.n];
        let mut diag = vec![0.0; self.n];
        for i in 0..self.n {
            diag[i] = self.get(i, i).re;
            for j in i.saturating_sub(self.kd)..i {
                let a = self.get(i, j).norm();
                off[i] += a;
                off[j] += a;
            }
        }
        (0..self.n).map(|i| diag[i] - off[i]).fold(f64::INFINITY, f64::min)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

/// Banded Cholesky factor L with A - sigma = L L^H.
struct BandCholesky {
    n: usize,
    kd: usize,
    l: Vec<C64>,
}

impl BandCholesky {
    fn factor(a: &BandedHermitian, sigma: f64) -> Option<Self> {
        let n = a.n;
        let kd = a.kd;
        let w = kd + 1;
        let mut l = a.data.clone();
        for i in 0..n {
            l[i * w + kd] -= C64::new(sigma, 0.0);
        }
        for j in 0..n {
            let j0 = j.saturating_sub(kd);
            let row_j = j * w + kd - j;
            let d = l[j * w + kd].re - l[row_j + j0..row_j + j].iter().map(|x| x.norm_sqr()).sum::<f64>();
            if !(d > 0.0) {
                return None;
            }
            let djj = d.sqrt();
            l[j * w + kd] = C64::new(djj, 0.0);
            let imax = (j + kd).min(n - 1);
            for i in j + 1..=imax {
                let k0 = i.saturating_sub(kd);
                let row_i = i * w + kd - i;
                let mut s = l[row_i + j];
                if k0 < j {
                    let ri = &l[row_i + k0..row_i + j];
                    let rj = &l[row_j + k0..row_j + j];
                    s -= ri.iter().zip(rj).map(|(a, b)| a * b.conj()).sum::<C64>();
                }
                l[row_i + j] = s / djj;
            }
        }
        Some(Self { n, kd, l })
    }

    fn solve(&self, b: &mut [C64]) {
        let (n, kd, w) = (self.n, self.kd, self.kd + 1);
        for i in 0..n {
            let k0 = i.saturating_sub(kd);
            let row = i * w + kd - i;
            let acc: C64 = self.l[row + k0..row + i].iter().zip(&b[k0..i]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - acc) / self.l[row + i].re;
        }
        for i in (0..n).rev() {
            let k0 = i.saturating_sub(kd);
            let row = i * w + kd - i;
            let xi = b[i] / self.l[row + i].re;
            b[i] = xi;
            for (bk, a) in b[k0..i].iter_mut().zip(&self.l[row + k0..row + i]) {
                *bk -= a.conj() * xi;
            }
        }
    }
}

/// Lowest eigenpairs of a Hermitian operator, ascending.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<DVector<C64>>,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng, basis: &[Vec<C64>]) -> Vec<C64> {
    loop {
        let mut v: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        for _ in 0..2 {
            for q in basis {
                let c = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

/// Krylov run on (A - sigma)^-1; returns the basis and the top-k Ritz
/// coefficients once their residuals fall below `tol` relative to the
/// largest Ritz value.
fn lanczos_run(chol: &BandCholesky, n: usize, k: usize, tol: f64) -> Option<(Vec<Vec<C64>>, Vec<f64>, DMatrix<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q: Vec<Vec<C64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut v = random_unit(n, &mut rng, &q);
    let mut w = vec![C64::new(0.0, 0.0); n];
    for m in 0..n {
        q.push(v.clone());
        w.copy_from_slice(&v);
        chol.solve(&mut w);
        let am = dot(&v, &w).re;
        alpha.push(am);
        // full reorthogonalization; a second pass only after heavy cancellation
        let mut b = norm(&w);
        for _ in 0..2 {
            for qi in &q {
                let c = dot(qi, &w);
                for (wi, qv) in w.iter_mut().zip(qi) {
                    *wi -= c * qv;
                }
            }
            let nb = norm(&w);
            let done = nb > 0.7 * b;
            b = nb;
            if done {
                break;
            }
        }
        let size = m + 1;
        if size >= k && (size % 3 == 0 || size == n || b < 1e-12 * am.abs()) {
            let t = DMatrix::from_fn(size, size, |i, j| {
                if i == j {
                    alpha[i]
                } else if i + 1 == j {
                    beta[i]
                } else if j + 1 == i {
                    beta[j]
                } else {
                    0.0
                }
            });
            let eig = nalgebra::SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..size).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].partial_cmp(&eig.eigenvalues[x]).unwrap());
            let top = &order[..k];
            let mu_max = eig.eigenvalues[order[0]].abs();
            let ok = top.iter().all(|&i| (b * eig.eigenvectors[(size - 1, i)]).abs() <= tol * mu_max);
            if ok || size == n {
                let vals: Vec<f64> = top.iter().map(|&i| eig.eigenvalues[i]).collect();
                let vecs = DMatrix::from_fn(size, k, |r, c| eig.eigenvectors[(r, top[c])]);
                return Some((q, vals, vecs));
            }
        }
        if b < 1e-12 * am.abs().max(1e-300) {
            // invariant subspace: continue in the orthogonal complement
            beta.push(0.0);
            v = random_unit(n, &mut rng, &q);
        } else {
            beta.push(b);
            v = w.iter().map(|x| x / b).collect();
        }
    }
    None
}

/// Shift-invert Lanczos for the `k` lowest eigenpairs.
///
/// A first pass shifts below the Gershgorin bound. A second pass moves the
/// shift just under the first-pass estimate of the ground level; a
/// successful Cholesky factorization certifies it is still below the
/// spectrum. Exactly degenerate levels are reported once.
pub fn lowest_eigenpairs(a: &BandedHermitian, k: usize, tol: f64) -> Result<EigenPairs> {
    let n = a.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("requested {k} eigenpairs of a {n}-dim operator")));
    }
    if n <= 64 {
        return dense_lowest(&a.to_dense(), k);
    }
    let lb = a.lower_bound();
    let mut sigma = lb - 1e-3 * lb.abs().max(1.0);
    let chol = loop {
        match BandCholesky::factor(a, sigma) {
            Some(c) => break c,
            None => sigma -= lb.abs().max(1.0),
        }
    };
    let exhausted = || Error::ConvergenceFailure("Lanczos exhausted the space".into());
    let (_, mu, _) = lanczos_run(&chol, n, k, 1e-2).ok_or_else(exhausted)?;
    let lam: Vec<f64> = mu.iter().map(|m| sigma + 1.0 / m).collect();
    let spread = (lam[k - 1] - lam[0]).max(1e-6 * lam[0].abs().max(1.0));
    let tight = lam[0] - 0.5 * spread;
    let chol = match BandCholesky::factor(a, tight) {
        Some(c) if tight > sigma => c,
        _ => chol,
    };
    let (q, _, s) = lanczos_run(&chol, n, k, tol).ok_or_else(exhausted)?;
    let mut pairs: Vec<(f64, DVector<C64>)> = Vec::with_capacity(k);
    let mut hx = vec![C64::new(0.0, 0.0); n];
    for c in 0..k {
        let mut x = vec![C64::new(0.0, 0.0); n];
        for (r, qr) in q.iter().enumerate() {
            let coef = s[(r, c)];
            for (xi, qi) in x.iter_mut().zip(qr) {
                *xi += qi * coef;
            }
        }
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        a.matvec(&x, &mut hx);
        let lam = dot(&x, &hx).re;
        pairs.push((lam, DVector::from_vec(x)));
    }
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    Ok(EigenPairs { values: pairs.iter().map(|p| p.0).collect(), vectors: pairs.into_iter().map(|p| p.1).collect() })
}

/// Dense Hermitian reference solver.
pub fn dense_lowest(a: &DMatrix<C64>, k: usize) -> Result<EigenPairs> {
    let n = a.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("requested {k} eigenpairs of a {n}-dim operator")));
    }
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].partial_cmp(&eig.eigenvalues[y]).unwrap());
    Ok(EigenPairs {
        values: order[..k].iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: order[..k].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect(),
    })
}
