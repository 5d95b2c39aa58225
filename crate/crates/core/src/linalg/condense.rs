use super::{CsrMatrix, TripletBuilder};
use crate::Real;

/// Elimination of the trailing unknowns `[split, n)` of a square system whose
/// trailing diagonal block is diagonal:
/// `[A_FF A_FC; A_CF D] [x_F; x_C] = [f_F; f_C]` reduces to
/// `(A_FF − A_FC D⁻¹ A_CF) x_F = f_F − A_FC D⁻¹ f_C`.
#[derive(Debug, Clone)]
pub struct DiagonalCondensation<T> {
    split: usize,
    fc: CsrMatrix<T>,
    cf: CsrMatrix<T>,
    inv_diag: Vec<T>,
    reduced: CsrMatrix<T>,
}

impl<T: Real> DiagonalCondensation<T> {
    /// `None` when the trailing block has a nonzero off-diagonal entry or a
    /// zero diagonal entry.
    pub fn new(a: &CsrMatrix<T>, split: usize) -> Option<Self> {
        let n = a.nrows();
        assert!(split <= n && a.ncols() == n);
        let mut inv_diag = vec![T::zero(); n - split];
        for r in split..n {
            for (c, v) in a.row(r) {
                if c == r {
                    inv_diag[r - split] = v;
                } else if c >= split && v != T::zero() {
                    return None;
                }
            }
        }
        if inv_diag.iter().any(|d| *d == T::zero() || !d.is_finite()) {
            return None;
        }
        inv_diag.iter_mut().for_each(|d| *d = T::one() / *d);
        let ff = a.block(0..split, 0..split);
        let fc = a.block(0..split, split..n);
        let cf = a.block(split..n, 0..split);
        let mut t = TripletBuilder::with_capacity(split, split, 4 * fc.nnz());
        for i in 0..split {
            for (j, v) in fc.row(i) {
                let s = v * inv_diag[j];
                for (k, w) in cf.row(j) {
                    t.push(i, k, s * w);
                }
            }
        }
        let reduced = CsrMatrix::linear_combination(T::one(), &ff, -T::one(), &t.build());
        Some(Self { split, fc, cf, inv_diag, reduced })
    }

    pub fn reduced(&self) -> &CsrMatrix<T> {
        &self.reduced
    }

    pub fn split(&self) -> usize {
        self.split
    }

    /// `f_F − A_FC D⁻¹ f_C`.
    pub fn reduce_rhs(&self, f: &[T]) -> Vec<T> {
        let (ff, fc) = f.split_at(self.split);
        let scaled: Vec<T> = fc.iter().zip(&self.inv_diag).map(|(v, d)| *v * *d).collect();
        let corr = self.fc.mul_vec(&scaled);
        ff.iter().zip(corr).map(|(a, b)| *a - b).collect()
    }

    /// Full solution from `x_F`: `x_C = D⁻¹ (f_C − A_CF x_F)`.
    pub fn recover(&self, x_f: &[T], f: &[T]) -> Vec<T> {
        let cx = self.cf.mul_vec(x_f);
        let mut x = x_f.to_vec();
        x.extend(f[self.split..].iter().zip(cx).zip(&self.inv_diag).map(|((fi, c), d)| (*fi - c) * *d));
        x
    }
}
