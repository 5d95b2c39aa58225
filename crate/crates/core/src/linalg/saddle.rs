//! Solvers for `[A Bᵀ; B 0] [u; p] = [f; g]`.

use std::time::Instant;

use super::iterative::{dot, gmres_with, norm, LinearOperator};
use super::{cg_jacobi_with, CsrMatrix, SolverConfig, SolverReport};
use crate::{Error, Real, Result};

/// Whether constant pressures lie in the kernel of `Bᵀ`.
pub(crate) fn has_constant_pressure_kernel<T: Real>(b: &CsrMatrix<T>) -> bool {
    if b.nrows() == 0 {
        return false;
    }
    let bt1 = b.transpose_mul(&vec![T::one(); b.nrows()]);
    let scale: T = b.values().iter().map(|v| v.abs()).sum();
    norm(&bt1) <= T::of(1e-12) * scale.max(T::min_positive_value())
}

/// Removes the plain mean (consistency of a right-hand side with the constant kernel).
pub(crate) fn remove_sum<T: Real>(v: &mut [T]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().copied().sum::<T>() / T::of_usize(v.len());
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Removes the `w`-weighted mean.
pub(crate) fn remove_weighted_mean<T: Real>(v: &mut [T], w: &[T]) {
    let total: T = w.iter().copied().sum();
    if v.is_empty() || total == T::zero() {
        return;
    }
    let mean = dot(v, w) / total;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Golub–Kahan bidiagonalization for a symmetric saddle-point system with SPD `A`.
///
/// The velocity is shifted by `A⁻¹ f` so that only the constraint right-hand side
/// remains; the bidiagonalization is then run in the `A` and `N = diag(pressure_mass)`
/// inner products. Iteration stops when the relative energy-norm error estimate
/// built from the last `config.delay` coefficients drops below `config.tol`.
/// Inner solves with `A` use Jacobi CG at `config.inner_tol`. When constant
/// pressures are in the kernel of `Bᵀ`, the constraint right-hand side is
/// projected onto their orthogonal complement and the returned pressure has zero
/// `pressure_mass`-weighted mean.
pub fn gkb_saddle<T: Real>(
    a: &CsrMatrix<T>,
    b: &CsrMatrix<T>,
    rhs_u: &[T],
    rhs_p: &[T],
    pressure_mass: &[T],
    config: &SolverConfig,
) -> Result<(Vec<T>, Vec<T>, SolverReport)> {
    let start = Instant::now();
    let (n, m) = (a.nrows(), b.nrows());
    check_shapes(a, b, rhs_u, rhs_p, pressure_mass)?;
    let inner = SolverConfig { tol: config.inner_tol, ..*config };
    let mut inner_iters = 0usize;
    let mut solve_a = |rhs: &[T], guess: Option<&[T]>| -> Result<Vec<T>> {
        let (x, rep) = cg_jacobi_with(a, rhs, guess, &inner, |_, _| {})?;
        inner_iters += rep.iterations;
        if !rep.converged {
            return Err(Error::StepSolve { step: 0, message: "GKB inner CG did not converge".into(), report: rep });
        }
        Ok(x)
    };

    let mut u = solve_a(rhs_u, None)?;
    let deflate = has_constant_pressure_kernel(b);
    let mut g: Vec<T> = b.mul_vec(&u).iter().zip(rhs_p).map(|(bu, gp)| *gp - *bu).collect();
    if deflate {
        remove_sum(&mut g);
    }
    let mut p = vec![T::zero(); m];
    let inv_n: Vec<T> = pressure_mass.iter().map(|w| T::one() / *w).collect();
    let n_norm = |v: &[T]| -> T { v.iter().zip(pressure_mass).map(|(x, w)| *x * *x * *w).sum::<T>().sqrt() };

    let mut v: Vec<T> = g.iter().zip(&inv_n).map(|(x, w)| *x * *w).collect();
    let beta1 = n_norm(&v);
    let gnorm = norm(&g);
    if m == 0 || gnorm <= T::epsilon() * norm(rhs_u).max(T::one()) * T::of(1e-3) || beta1 == T::zero() {
        let mut report = SolverReport::trivial(start);
        report.inner_iterations = inner_iters;
        return Ok((u, p, report));
    }
    v.iter_mut().for_each(|x| *x /= beta1);

    // q_1 = A⁻¹ Bᵀ v_1 / α_1; `aq` holds A q.
    let mut btv = b.transpose_mul(&v);
    let mut w = solve_a(&btv, None)?;
    let mut alpha = dot(&w, &btv).sqrt();
    if !(alpha > T::zero()) {
        return Err(Error::Breakdown { solver: "gkb", iteration: 1 });
    }
    let mut q: Vec<T> = w.iter().map(|x| *x / alpha).collect();
    let mut aq: Vec<T> = btv.iter().map(|x| *x / alpha).collect();
    let mut y = beta1 / alpha;
    let mut d: Vec<T> = v.iter().map(|x| *x / alpha).collect();
    for i in 0..n {
        u[i] += y * q[i];
    }
    for i in 0..m {
        p[i] -= y * d[i];
    }
    let mut energy = y * y;
    let mut window: std::collections::VecDeque<T> = std::collections::VecDeque::from([y * y]);
    let tol = T::of(config.tol);
    let mut k = 1;
    let mut estimate = T::one();
    let mut converged = false;
    while k < config.max_iter {
        // β v_{k+1} = N⁻¹ B q_k − α v_k
        let bq = b.mul_vec(&q);
        let mut s: Vec<T> = (0..m).map(|i| bq[i] * inv_n[i] - alpha * v[i]).collect();
        if deflate {
            remove_weighted_mean(&mut s, pressure_mass);
        }
        let beta = n_norm(&s);
        if beta <= T::epsilon() * beta1 {
            estimate = T::zero();
            converged = true;
            break;
        }
        s.iter_mut().for_each(|x| *x /= beta);
        v = s;
        // α q_{k+1} = A⁻¹ Bᵀ v_{k+1} − β q_k
        btv = b.transpose_mul(&v);
        let guess: Vec<T> = q.iter().map(|x| *x * beta).collect();
        w = solve_a(&btv, Some(&guess))?;
        let mut aw = btv.clone();
        for i in 0..n {
            w[i] -= beta * q[i];
            aw[i] -= beta * aq[i];
        }
        alpha = dot(&w, &aw).sqrt();
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::Breakdown { solver: "gkb", iteration: k + 1 });
        }
        for i in 0..n {
            q[i] = w[i] / alpha;
            aq[i] = aw[i] / alpha;
        }
        y = -beta * y / alpha;
        for i in 0..m {
            d[i] = (v[i] - beta * d[i]) / alpha;
            p[i] -= y * d[i];
        }
        for i in 0..n {
            u[i] += y * q[i];
        }
        k += 1;
        energy += y * y;
        window.push_back(y * y);
        if window.len() > config.delay {
            window.pop_front();
        }
        estimate = (window.iter().copied().sum::<T>() / energy).sqrt();
        if window.len() == config.delay && estimate <= tol {
            converged = true;
            break;
        }
    }
    if deflate {
        remove_weighted_mean(&mut p, pressure_mass);
    }
    let report = SolverReport {
        iterations: k,
        residual: estimate.as_f64(),
        converged,
        wall_time: start.elapsed().as_secs_f64(),
        inner_iterations: inner_iters,
    };
    Ok((u, p, report))
}

fn check_shapes<T: Real>(
    a: &CsrMatrix<T>,
    b: &CsrMatrix<T>,
    rhs_u: &[T],
    rhs_p: &[T],
    pressure_mass: &[T],
) -> Result<()> {
    let (n, m) = (a.nrows(), b.nrows());
    if a.ncols() != n || b.ncols() != n || rhs_u.len() != n || rhs_p.len() != m || pressure_mass.len() != m {
        return Err(Error::invalid("saddle-point block shapes are inconsistent"));
    }
    if pressure_mass.iter().any(|w| !(*w > T::zero())) {
        return Err(Error::invalid("pressure mass must be positive"));
    }
    Ok(())
}

struct SaddleOperator<'a, T> {
    a: &'a CsrMatrix<T>,
    b: &'a CsrMatrix<T>,
}

impl<T: Real> LinearOperator<T> for SaddleOperator<'_, T> {
    fn dim(&self) -> usize {
        self.a.nrows() + self.b.nrows()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        let n = self.a.nrows();
        let (xu, xp) = x.split_at(n);
        let (yu, yp) = y.split_at_mut(n);
        self.a.mul_vec_into(xu, yu);
        self.b.transpose_mul_add(xp, T::one(), yu);
        self.b.mul_vec_into(xu, yp);
    }
}

/// GMRES on the full block system (any `A`), block-Jacobi preconditioned with
/// `diag(A)` and `diag(B diag(A)⁻¹ Bᵀ)`. Constant pressures are deflated as in
/// [`gkb_saddle`].
pub fn saddle_gmres<T: Real>(
    a: &CsrMatrix<T>,
    b: &CsrMatrix<T>,
    rhs_u: &[T],
    rhs_p: &[T],
    pressure_mass: &[T],
    guess: Option<(&[T], &[T])>,
    config: &SolverConfig,
) -> Result<(Vec<T>, Vec<T>, SolverReport)> {
    check_shapes(a, b, rhs_u, rhs_p, pressure_mass)?;
    let n = a.nrows();
    let diag = a.diagonal();
    let mut inv = Vec::with_capacity(n + b.nrows());
    for (row, d) in diag.iter().enumerate() {
        if *d == T::zero() {
            return Err(Error::ZeroDiagonal { row });
        }
        inv.push(T::one() / *d);
    }
    for r in 0..b.nrows() {
        let s: T = b.row(r).map(|(c, v)| v * v / diag[c].abs()).sum();
        inv.push(if s > T::zero() { T::one() / s } else { T::one() });
    }
    let deflate = has_constant_pressure_kernel(b);
    let mut rhs = rhs_u.to_vec();
    let mut g = rhs_p.to_vec();
    if deflate {
        remove_sum(&mut g);
    }
    rhs.extend(g);
    let x0 = guess.map(|(u, p)| {
        let mut x = u.to_vec();
        x.extend_from_slice(p);
        x
    });
    let (mut x, report) = gmres_with(&SaddleOperator { a, b }, &inv, &rhs, x0.as_deref(), config)?;
    let mut p = x.split_off(n);
    if deflate {
        remove_weighted_mean(&mut p, pressure_mass);
    }
    Ok((x, p, report))
}
