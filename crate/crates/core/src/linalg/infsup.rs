use nalgebra::{DMatrix, SymmetricEigen};

use super::iterative::{dot, norm};
use super::saddle::has_constant_pressure_kernel;
use super::{CsrMatrix, DirectSolver};
use crate::{Error, Real, Result};

/// Pressure-space size up to which the dense eigenvalue path is used.
const DENSE_LIMIT: usize = 2500;

/// Smallest nonzero generalized singular value of `B` measured in the norms
/// induced by `gram_v` (velocity) and `gram_p` (pressure):
/// `β² = min nonzero eig(gram_p⁻¹ B gram_v⁻¹ Bᵀ)`.
///
/// Small systems use a dense symmetric eigensolver and drop eigenvalues below
/// `1e-10` of the largest. Larger systems use inverse iteration restricted to the
/// `gram_p`-orthogonal complement of constant pressures (which requires constants
/// to be the only kernel). An identically zero operator is an error.
pub fn infsup_estimate<T: Real>(b: &CsrMatrix<T>, gram_v: &CsrMatrix<T>, gram_p: &CsrMatrix<T>) -> Result<f64> {
    let (m, n) = (b.nrows(), b.ncols());
    if gram_v.nrows() != n || gram_v.ncols() != n || gram_p.nrows() != m || gram_p.ncols() != m {
        return Err(Error::invalid("inf-sup Gram matrices do not match the coupling shape"));
    }
    if m == 0 || n == 0 {
        return Err(Error::Undefined("inf-sup constant undefined: empty space".into()));
    }
    let b = b.cast::<f64>();
    let gv = DirectSolver::new(&gram_v.cast::<f64>())?;
    if m <= DENSE_LIMIT {
        dense_path(&b, &gv, &gram_p.cast::<f64>())
    } else {
        iterative_path(&b, &gv, &gram_p.cast::<f64>())
    }
}

fn dense_path(b: &CsrMatrix<f64>, gv: &DirectSolver, gp: &CsrMatrix<f64>) -> Result<f64> {
    let m = b.nrows();
    let bt = b.transpose();
    // Columns of gram_v⁻¹ Bᵀ, then S = B (gram_v⁻¹ Bᵀ).
    let mut s = DMatrix::<f64>::zeros(m, m);
    let mut e = vec![0.0; m];
    for j in 0..m {
        e[j] = 1.0;
        let col = gv.solve(&bt.mul_vec(&e))?;
        e[j] = 0.0;
        let sj = b.mul_vec(&col);
        for i in 0..m {
            s[(i, j)] = sj[i];
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let gp_dense = DMatrix::from_fn(m, m, |i, j| gp.get(i, j));
    let chol = nalgebra::Cholesky::new(gp_dense)
        .ok_or_else(|| Error::invalid("pressure Gram matrix is not positive definite"))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid("pressure Gram factor is singular"))?;
    let c = &linv * s * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(*v));
    if !(max > 0.0) {
        return Err(Error::Undefined("inf-sup constant undefined: coupling operator vanishes".into()));
    }
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .filter(|v| *v > 1e-10 * max)
        .fold(f64::INFINITY, f64::min);
    Ok(min.sqrt())
}

fn iterative_path(b: &CsrMatrix<f64>, gv: &DirectSolver, gp: &CsrMatrix<f64>) -> Result<f64> {
    let m = b.nrows();
    let deflate = has_constant_pressure_kernel(b);
    let ones = vec![1.0; m];
    let gp1 = gp.mul_vec(&ones);
    let one_gp1 = dot(&ones, &gp1);
    // Removes the gram_p-projection onto constants.
    let project = |v: &mut Vec<f64>| {
        if deflate {
            let c = dot(v, &gp1) / one_gp1;
            v.iter_mut().for_each(|x| *x -= c);
        }
    };
    let apply_s = |x: &[f64]| -> Result<Vec<f64>> { Ok(b.mul_vec(&gv.solve(&b.transpose_mul(x))?)) };
    let solve_s = |rhs: &[f64]| -> Result<Vec<f64>> {
        // Plain CG on the semidefinite S; rhs is orthogonal to constants.
        let mut x = vec![0.0; m];
        let mut r = rhs.to_vec();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let target = 1e-12 * rr.sqrt();
        for _ in 0..10 * m {
            if rr.sqrt() <= target {
                break;
            }
            let sp = apply_s(&p)?;
            let alpha = rr / dot(&p, &sp);
            for i in 0..m {
                x[i] += alpha * p[i];
                r[i] -= alpha * sp[i];
            }
            let rr_new = dot(&r, &r);
            for i in 0..m {
                p[i] = r[i] + rr_new / rr * p[i];
            }
            rr = rr_new;
        }
        Ok(x)
    };
    let mut v: Vec<f64> = (0..m).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    project(&mut v);
    let mut lambda = f64::INFINITY;
    for _ in 0..500 {
        let mut x = solve_s(&gp.mul_vec(&v))?;
        project(&mut x);
        let gx = gp.mul_vec(&x);
        let nx = dot(&x, &gx).sqrt();
        if !(nx > 0.0) || !nx.is_finite() {
            return Err(Error::Undefined("inf-sup inverse iteration broke down".into()));
        }
        v = x.iter().map(|t| t / nx).collect();
        let next = dot(&v, &apply_s(&v)?);
        let done = (next - lambda).abs() <= 1e-10 * next;
        lambda = next;
        if done {
            break;
        }
    }
    if !(lambda > 0.0) || norm(&v) == 0.0 {
        return Err(Error::Undefined("inf-sup constant undefined".into()));
    }
    Ok(lambda.sqrt())
}
