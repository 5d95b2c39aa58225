use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::CsrMatrix;
use crate::{Error, Real, Result};

/// Stopping parameters shared by the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative residual tolerance (energy-norm estimate for GKB).
    pub tol: f64,
    pub max_iter: usize,
    /// GMRES restart length.
    pub restart: usize,
    /// Tolerance of the inner CG solves inside GKB.
    pub inner_tol: f64,
    /// Number of terms in the GKB error estimate.
    pub delay: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::with_tol(1e-8)
    }
}

impl SolverConfig {
    /// Tolerance `tol` with the inner tolerance one decade tighter.
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, max_iter: 20_000, restart: 60, inner_tol: tol * 0.1, delay: 5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) || !(self.inner_tol > 0.0 && self.inner_tol < 1.0) {
            return Err(Error::invalid(format!("solver tolerances must lie in (0,1): {self:?}")));
        }
        if self.max_iter == 0 || self.restart == 0 || self.delay == 0 {
            return Err(Error::invalid("solver iteration counts must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of a linear solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    /// Final relative residual (for GKB: relative energy-norm error estimate).
    pub residual: f64,
    pub converged: bool,
    /// Seconds.
    pub wall_time: f64,
    /// Total inner iterations (GKB inner CG solves).
    #[serde(default)]
    pub inner_iterations: usize,
}

impl SolverReport {
    pub(crate) fn trivial(start: Instant) -> Self {
        Self { converged: true, wall_time: start.elapsed().as_secs_f64(), ..Default::default() }
    }
}

/// Square linear map `y = A x`.
pub trait LinearOperator<T> {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[T], y: &mut [T]);
}

impl<T: Real> LinearOperator<T> for CsrMatrix<T> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        self.mul_vec_into(x, y)
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn inverse_diagonal<T: Real>(a: &CsrMatrix<T>) -> Result<Vec<T>> {
    a.diagonal()
        .into_iter()
        .enumerate()
        .map(|(row, d)| if d > T::zero() { Ok(T::one() / d) } else { Err(Error::ZeroDiagonal { row }) })
        .collect()
}

/// Jacobi-preconditioned conjugate gradient from a zero initial guess.
pub fn cg_jacobi<T: Real>(a: &CsrMatrix<T>, b: &[T], config: &SolverConfig) -> Result<(Vec<T>, SolverReport)> {
    cg_jacobi_with(a, b, None, config, |_, _| {})
}

/// CG with an optional initial guess; `monitor(k, x_k)` is called after every iteration.
pub fn cg_jacobi_with<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x0: Option<&[T]>,
    config: &SolverConfig,
    mut monitor: impl FnMut(usize, &[T]),
) -> Result<(Vec<T>, SolverReport)> {
    let start = Instant::now();
    let n = a.nrows();
    assert_eq!(b.len(), n);
    let inv_d = inverse_diagonal(a)?;
    let bnorm = norm(b);
    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok((x, SolverReport::trivial(start)));
    }
    let tol = T::of(config.tol);
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = a.mul_vec(&x);
        r.iter_mut().zip(&ax).for_each(|(ri, ai)| *ri -= *ai);
    }
    let mut rel = norm(&r) / bnorm;
    let mut z: Vec<T> = r.iter().zip(&inv_d).map(|(ri, di)| *ri * *di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    let mut k = 0;
    while rel > tol && k < config.max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) || !pap.is_finite() {
            return Err(Error::Breakdown { solver: "cg", iteration: k + 1 });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * inv_d[i];
        }
        k += 1;
        monitor(k, &x);
        rel = norm(&r) / bnorm;
        if !rel.is_finite() {
            return Err(Error::Breakdown { solver: "cg", iteration: k });
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let report = SolverReport {
        iterations: k,
        residual: rel.as_f64(),
        converged: rel <= tol,
        wall_time: start.elapsed().as_secs_f64(),
        inner_iterations: 0,
    };
    Ok((x, report))
}

/// Restarted GMRES with Jacobi right preconditioning. Rows with a zero diagonal
/// are left unscaled.
pub fn gmres<T: Real>(a: &CsrMatrix<T>, b: &[T], config: &SolverConfig) -> Result<(Vec<T>, SolverReport)> {
    let inv_d: Vec<T> =
        a.diagonal().into_iter().map(|d| if d != T::zero() { T::one() / d } else { T::one() }).collect();
    gmres_with(a, &inv_d, b, None, config)
}

/// Restarted GMRES on an arbitrary operator with diagonal right preconditioner `inv_diag`.
pub fn gmres_with<T: Real, A: LinearOperator<T> + ?Sized>(
    a: &A,
    inv_diag: &[T],
    b: &[T],
    x0: Option<&[T]>,
    config: &SolverConfig,
) -> Result<(Vec<T>, SolverReport)> {
    assert_eq!(inv_diag.len(), a.dim());
    let diag = |v: &[T], z: &mut [T]| -> Result<()> {
        for ((zi, vi), di) in z.iter_mut().zip(v).zip(inv_diag) {
            *zi = *vi * *di;
        }
        Ok(())
    };
    gmres_preconditioned(a, diag, b, x0, config)
}

/// Restarted GMRES with a linear right preconditioner `precond(v, z)`: `z = M⁻¹ v`.
pub fn gmres_preconditioned<T: Real, A: LinearOperator<T> + ?Sized>(
    a: &A,
    mut precond: impl FnMut(&[T], &mut [T]) -> Result<()>,
    b: &[T],
    x0: Option<&[T]>,
    config: &SolverConfig,
) -> Result<(Vec<T>, SolverReport)> {
    let start = Instant::now();
    let n = a.dim();
    assert_eq!(b.len(), n);
    let bnorm = norm(b);
    if bnorm == T::zero() {
        return Ok((vec![T::zero(); n], SolverReport::trivial(start)));
    }
    let tol = T::of(config.tol);
    let m = config.restart.min(n).max(1);
    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    let mut w = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let residual = |x: &[T], w: &mut [T]| -> Vec<T> {
        a.apply(x, w);
        b.iter().zip(w.iter()).map(|(bi, wi)| *bi - *wi).collect()
    };
    let mut r = residual(&x, &mut w);
    let mut beta = norm(&r);
    let mut iters = 0;
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![T::zero(); m]; m + 1];
    let (mut cs, mut sn) = (vec![T::zero(); m], vec![T::zero(); m]);
    while beta / bnorm > tol && iters < config.max_iter {
        basis.clear();
        basis.push(r.iter().map(|v| *v / beta).collect());
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            precond(&basis[j], &mut z)?;
            a.apply(&z, &mut w);
            for i in 0..=j {
                let hij = dot(&w, &basis[i]);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&basis[i]) {
                    *wk -= hij * *vk;
                }
            }
            let hn = norm(&w);
            if !hn.is_finite() {
                return Err(Error::Breakdown { solver: "gmres", iteration: iters + 1 });
            }
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let rho = h[j][j].hypot(h[j + 1][j]);
            if rho == T::zero() {
                return Err(Error::Breakdown { solver: "gmres", iteration: iters + 1 });
            }
            cs[j] = h[j][j] / rho;
            sn[j] = h[j + 1][j] / rho;
            h[j][j] = rho;
            h[j + 1][j] = T::zero();
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            iters += 1;
            used = j + 1;
            if hn > T::zero() {
                basis.push(w.iter().map(|v| *v / hn).collect());
            }
            if (g[j + 1]).abs() / bnorm <= tol || hn == T::zero() || iters >= config.max_iter {
                break;
            }
        }
        let mut y = vec![T::zero(); used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        let mut v = vec![T::zero(); n];
        for (k, yk) in y.iter().enumerate() {
            for i in 0..n {
                v[i] += *yk * basis[k][i];
            }
        }
        precond(&v, &mut z)?;
        for i in 0..n {
            x[i] += z[i];
        }
        r = residual(&x, &mut w);
        beta = norm(&r);
        if !beta.is_finite() {
            return Err(Error::Breakdown { solver: "gmres", iteration: iters });
        }
    }
    let rel = beta / bnorm;
    let report = SolverReport {
        iterations: iters,
        residual: rel.as_f64(),
        converged: rel <= tol,
        wall_time: start.elapsed().as_secs_f64(),
        inner_iterations: 0,
    };
    Ok((x, report))
}
