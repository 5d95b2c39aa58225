use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, LdltRef, SymbolicCholesky, SymmetricOrdering};
use faer::{Conj, MatMut, Par, Side};

use super::saddle::{has_constant_pressure_kernel, remove_sum, remove_weighted_mean};
use super::CsrMatrix;
use crate::{Error, Real, Result};

/// Sparse direct factorization (faer backend, computed in `f64`): LU, or
/// Cholesky for matrices declared SPD. The symbolic analysis is kept so that
/// matrices with the same pattern refactor cheaply.
pub struct DirectSolver {
    n: usize,
    pattern: (Vec<usize>, Vec<usize>),
    factor: Factorization,
}

enum Factorization {
    Lu(SymbolicLu<usize>, Lu<usize, f64>),
    Llt(SymbolicLlt<usize>, Llt<usize, f64>),
}

impl std::fmt::Debug for DirectSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.factor {
            Factorization::Lu(..) => "lu",
            Factorization::Llt(..) => "llt",
        };
        f.debug_struct("DirectSolver").field("n", &self.n).field("kind", &kind).finish()
    }
}

fn to_faer<T: Real>(a: &CsrMatrix<T>) -> Result<SparseColMat<usize, f64>> {
    let mut triplets = Vec::with_capacity(a.nnz());
    for r in 0..a.nrows() {
        for (c, v) in a.row(r) {
            triplets.push(Triplet::new(r, c, v.as_f64()));
        }
    }
    SparseColMat::try_new_from_triplets(a.nrows(), a.ncols(), &triplets)
        .map_err(|e| Error::Direct(format!("{e:?}")))
}

fn direct_err(e: impl std::fmt::Debug) -> Error {
    Error::Direct(format!("{e:?}"))
}

fn lu(mat: &SparseColMat<usize, f64>, symbolic: Option<SymbolicLu<usize>>) -> Result<Factorization> {
    let symbolic = match symbolic {
        Some(s) => s,
        None => SymbolicLu::try_new(mat.symbolic()).map_err(direct_err)?,
    };
    let lu = Lu::try_new_with_symbolic(symbolic.clone(), mat.as_ref()).map_err(direct_err)?;
    Ok(Factorization::Lu(symbolic, lu))
}

/// `None` when the matrix is not numerically positive definite.
fn llt(mat: &SparseColMat<usize, f64>, symbolic: Option<SymbolicLlt<usize>>) -> Result<Option<Factorization>> {
    let symbolic = match symbolic {
        Some(s) => s,
        None => SymbolicLlt::try_new(mat.symbolic(), Side::Lower).map_err(direct_err)?,
    };
    Ok(Llt::try_new_with_symbolic(symbolic.clone(), mat.as_ref(), Side::Lower)
        .ok()
        .map(|l| Factorization::Llt(symbolic, l)))
}

impl DirectSolver {
    pub fn new<T: Real>(a: &CsrMatrix<T>) -> Result<Self> {
        let mat = Self::check(a)?;
        Ok(Self::with(a, lu(&mat, None)?))
    }

    /// Cholesky factorization of a symmetric positive definite matrix (only the
    /// lower triangle is read), falling back to LU when a pivot is not positive.
    pub fn new_spd<T: Real>(a: &CsrMatrix<T>) -> Result<Self> {
        let mat = Self::check(a)?;
        let factor = match llt(&mat, None)? {
            Some(f) => f,
            None => {
                log::debug!("Cholesky failed on a matrix declared SPD, using LU");
                lu(&mat, None)?
            }
        };
        Ok(Self::with(a, factor))
    }

    fn check<T: Real>(a: &CsrMatrix<T>) -> Result<SparseColMat<usize, f64>> {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid("direct solver needs a square matrix"));
        }
        to_faer(a)
    }

    fn with<T: Real>(a: &CsrMatrix<T>, factor: Factorization) -> Self {
        Self { n: a.nrows(), pattern: (a.offsets().to_vec(), a.indices().to_vec()), factor }
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self.factor, Factorization::Llt(..))
    }

    /// Refactors with new values, reusing the symbolic analysis when the pattern
    /// matches and keeping the factorization kind.
    pub fn refactor<T: Real>(&mut self, a: &CsrMatrix<T>) -> Result<()> {
        if a.offsets() != self.pattern.0.as_slice() || a.indices() != self.pattern.1.as_slice() {
            *self = if self.is_cholesky() { Self::new_spd(a)? } else { Self::new(a)? };
            return Ok(());
        }
        let mat = to_faer(a)?;
        self.factor = match &self.factor {
            Factorization::Lu(s, _) => lu(&mat, Some(s.clone()))?,
            Factorization::Llt(s, _) => match llt(&mat, Some(s.clone()))? {
                Some(f) => f,
                None => lu(&mat, None)?,
            },
        };
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve<T: Real>(&self, b: &[T]) -> Result<Vec<T>> {
        assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = b.iter().map(|v| v.as_f64()).collect();
        let rhs = MatMut::from_column_major_slice_mut(&mut x, self.n, 1);
        match &self.factor {
            Factorization::Lu(_, f) => f.solve_in_place(rhs),
            Factorization::Llt(_, f) => f.solve_in_place(rhs),
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Direct("non-finite solution (singular matrix?)".into()));
        }
        Ok(x.into_iter().map(T::of).collect())
    }
}

/// Direct solver for `[A Bᵀ; B 0]`. When constant pressures are in the kernel of
/// `Bᵀ`, the first pressure is pinned to zero (its equation is redundant once the
/// constraint right-hand side has zero sum) and the result is shifted to zero
/// weighted mean. Pinning keeps the factorization sparse, unlike bordering with
/// a dense mean constraint.
#[derive(Debug)]
pub struct SaddleDirect<T> {
    n: usize,
    deflate: bool,
    b: CsrMatrix<T>,
    weights: Vec<T>,
    solver: DirectSolver,
}

impl<T: Real> SaddleDirect<T> {
    pub fn new(a: &CsrMatrix<T>, b: &CsrMatrix<T>, pressure_mass: &[T]) -> Result<Self> {
        let deflate = has_constant_pressure_kernel(b);
        let k = Self::block(a, b, deflate);
        Ok(Self {
            n: a.nrows(),
            deflate,
            b: b.clone(),
            weights: pressure_mass.to_vec(),
            solver: DirectSolver::new(&k)?,
        })
    }

    /// New leading block with the same coupling.
    pub fn refactor(&mut self, a: &CsrMatrix<T>) -> Result<()> {
        let k = Self::block(a, &self.b, self.deflate);
        self.solver.refactor(&k)
    }

    fn block(a: &CsrMatrix<T>, b: &CsrMatrix<T>, deflate: bool) -> CsrMatrix<T> {
        let (n, m) = (a.nrows(), b.nrows());
        let size = n + m;
        let mut t = super::TripletBuilder::with_capacity(size, size, a.nnz() + 2 * b.nnz() + 1);
        for r in 0..n {
            for (c, v) in a.row(r) {
                t.push(r, c, v);
            }
        }
        for r in 0..m {
            if deflate && r == 0 {
                t.push(n, n, T::one());
                continue;
            }
            for (c, v) in b.row(r) {
                t.push(n + r, c, v);
                t.push(c, n + r, v);
            }
        }
        t.build()
    }

    pub fn solve(&self, rhs_u: &[T], rhs_p: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let mut rhs = rhs_u.to_vec();
        let mut g = rhs_p.to_vec();
        if self.deflate {
            remove_sum(&mut g);
            g[0] = T::zero();
        }
        rhs.extend(g);
        let mut x = self.solver.solve(&rhs)?;
        let mut p = x.split_off(self.n);
        if self.deflate {
            remove_weighted_mean(&mut p, &self.weights);
        }
        Ok((x, p))
    }
}

/// Relative size of the pressure regularization of [`SaddleLdlt`].
const REGULARIZATION: f64 = 1e-8;

/// `LDLᵀ` factorization of the regularized saddle matrix `[A Bᵀ; B −εW]`, with
/// `A` symmetric positive definite and `W = diag(pressure_mass)`. The
/// regularized matrix is quasi-definite, so any symmetric fill-reducing
/// ordering is admissible. Its solves approximate those of `[A Bᵀ; B 0]` to
/// `O(ε)`; the exact system is meant to be solved by a Krylov method
/// preconditioned with it.
pub struct SaddleLdlt<T> {
    n: usize,
    deflate: bool,
    b: CsrMatrix<T>,
    weights: Vec<T>,
    pattern: (Vec<usize>, Vec<usize>),
    signs: Vec<i8>,
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
}

impl<T> std::fmt::Debug for SaddleLdlt<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SaddleLdlt").field("n", &self.n).field("m", &self.weights.len()).finish()
    }
}

impl<T: Real> SaddleLdlt<T> {
    pub fn new(a: &CsrMatrix<T>, b: &CsrMatrix<T>, pressure_mass: &[T]) -> Result<Self> {
        let (n, m) = (a.nrows(), b.nrows());
        if a.ncols() != n || b.ncols() != n || pressure_mass.len() != m {
            return Err(Error::invalid("saddle blocks have inconsistent shapes"));
        }
        let k = Self::block(a, b, pressure_mass);
        let mat = to_faer(&k)?;
        let symbolic = factorize_symbolic_cholesky(
            mat.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            Default::default(),
        )
        .map_err(direct_err)?;
        let mut signs = vec![1i8; n];
        signs.resize(n + m, -1);
        let mut out = Self {
            n,
            deflate: has_constant_pressure_kernel(b),
            b: b.clone(),
            weights: pressure_mass.to_vec(),
            pattern: (k.offsets().to_vec(), k.indices().to_vec()),
            signs,
            values: vec![0.0; symbolic.len_val()],
            symbolic,
        };
        out.factor(&mat)?;
        Ok(out)
    }

    /// New leading block with the same coupling.
    pub fn refactor(&mut self, a: &CsrMatrix<T>) -> Result<()> {
        let k = Self::block(a, &self.b, &self.weights);
        if k.offsets() != self.pattern.0.as_slice() || k.indices() != self.pattern.1.as_slice() {
            *self = Self::new(a, &self.b, &self.weights)?;
            return Ok(());
        }
        self.factor(&to_faer(&k)?)
    }

    fn factor(&mut self, mat: &SparseColMat<usize, f64>) -> Result<()> {
        let par = Par::Seq;
        let params = Default::default();
        let mut buf = MemBuffer::new(self.symbolic.factorize_numeric_ldlt_scratch::<f64>(par, params));
        let scale = mat.val().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let regularization = LdltRegularization {
            dynamic_regularization_signs: Some(&self.signs),
            dynamic_regularization_delta: scale * 1e-10,
            dynamic_regularization_epsilon: scale * 1e-14,
        };
        self.symbolic
            .factorize_numeric_ldlt(
                &mut self.values,
                mat.as_ref(),
                Side::Lower,
                regularization,
                par,
                MemStack::new(&mut buf),
                params,
            )
            .map_err(direct_err)?;
        Ok(())
    }

    /// Lower triangle of `[A Bᵀ; B −εW]`, where `ε W` is `REGULARIZATION` times
    /// the diagonal of `B diag(A)⁻¹ Bᵀ` in the mean.
    fn block(a: &CsrMatrix<T>, b: &CsrMatrix<T>, pressure_mass: &[T]) -> CsrMatrix<T> {
        let (n, m) = (a.nrows(), b.nrows());
        let diag = a.diagonal();
        let mut schur = T::zero();
        for r in 0..m {
            for (c, v) in b.row(r) {
                schur += v * v / diag[c];
            }
        }
        let total: T = pressure_mass.iter().copied().sum();
        let eps = T::of(REGULARIZATION) * schur / total.max(T::min_positive_value());
        let mut t = super::TripletBuilder::with_capacity(n + m, n + m, a.nnz() / 2 + n + b.nnz() + m);
        for r in 0..n {
            for (c, v) in a.row(r).filter(|(c, _)| *c >= r) {
                t.push(c, r, v);
            }
        }
        for r in 0..m {
            for (c, v) in b.row(r) {
                t.push(n + r, c, v);
            }
            t.push(n + r, n + r, -eps * pressure_mass[r]);
        }
        t.build()
    }

    /// Solve with the regularized matrix. With a constant pressure kernel, the
    /// constraint right-hand side is made consistent first and the pressure is
    /// returned with zero weighted mean.
    pub fn solve(&self, rhs_u: &[T], rhs_p: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let mut g = rhs_p.to_vec();
        if self.deflate {
            remove_sum(&mut g);
        }
        let mut x: Vec<f64> = rhs_u.iter().chain(&g).map(|v| v.as_f64()).collect();
        let len = x.len();
        let ldlt = LdltRef::new(&self.symbolic, &self.values);
        let mut buf = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        ldlt.solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(&mut x, len, 1),
            Par::Seq,
            MemStack::new(&mut buf),
        );
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Direct("non-finite solution (singular matrix?)".into()));
        }
        let mut u: Vec<T> = x.into_iter().map(T::of).collect();
        let mut p = u.split_off(self.n);
        if self.deflate {
            remove_weighted_mean(&mut p, &self.weights);
        }
        Ok((u, p))
    }

    /// Whether constant pressures are in the kernel of `Bᵀ`.
    pub fn deflates(&self) -> bool {
        self.deflate
    }

    pub fn pressure_mass(&self) -> &[T] {
        &self.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense_solve;

    #[test]
    fn matches_dense_oracle_and_refactors() {
        let dense = vec![vec![4.0, 1.0, 0.0], vec![2.0, 5.0, 1.0], vec![0.0, -1.0, 3.0]];
        let a = CsrMatrix::from_dense(&dense);
        let mut s = DirectSolver::new(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x: Vec<f64> = s.solve(&b).unwrap();
        let y = dense_solve(&dense, &b).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-14);
        }
        s.refactor(&a.scaled(2.0)).unwrap();
        let x2: Vec<f64> = s.solve(&b).unwrap();
        for (u, v) in x2.iter().zip(&y) {
            assert!((2.0 * u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn saddle_example() {
        let a = CsrMatrix::<f64>::identity(2);
        let b = CsrMatrix::from_dense(&[vec![1.0, -1.0]]);
        let s = SaddleDirect::new(&a, &b, &[1.0]).unwrap();
        let (u, p) = s.solve(&[1.0, 0.0], &[0.0]).unwrap();
        assert!((u[0] - 0.5).abs() < 1e-14 && (u[1] - 0.5).abs() < 1e-14 && (p[0] - 0.5).abs() < 1e-14);
    }
}
