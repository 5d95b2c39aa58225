use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::{Error, Result};

/// Field over which Gaussian elimination with partial pivoting is performed.
pub trait PivotField: Clone + Zero + std::ops::Sub<Output = Self> + std::ops::Mul<Output = Self> + std::ops::Div<Output = Self> {
    /// Magnitude used to rank pivot candidates.
    fn magnitude(&self) -> f64;
    /// Whether `pivot` is numerically zero given the largest entry magnitude `scale`.
    fn negligible(pivot: &Self, scale: f64, n: usize) -> bool;
}

impl PivotField for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn negligible(pivot: &Self, scale: f64, n: usize) -> bool {
        pivot.abs() <= f64::EPSILON * n as f64 * scale
    }
}

impl PivotField for f32 {
    fn magnitude(&self) -> f64 {
        f64::from(self.abs())
    }
    fn negligible(pivot: &Self, scale: f64, n: usize) -> bool {
        f64::from(pivot.abs()) <= f64::from(f32::EPSILON) * n as f64 * scale
    }
}

impl PivotField for BigRational {
    fn magnitude(&self) -> f64 {
        use num_traits::ToPrimitive;
        self.abs().to_f64().unwrap_or(f64::INFINITY)
    }
    fn negligible(pivot: &Self, _scale: f64, _n: usize) -> bool {
        pivot.is_zero()
    }
}

/// Solves `A x = b` by LU with partial pivoting. `a` is row-major.
pub fn dense_solve<F: PivotField>(a: &[Vec<F>], b: &[F]) -> Result<Vec<F>> {
    let n = a.len();
    if a.iter().any(|row| row.len() != n) || b.len() != n {
        return Err(Error::invalid("dense_solve needs a square matrix and matching right-hand side"));
    }
    let mut m: Vec<Vec<F>> = a.to_vec();
    let mut x: Vec<F> = b.to_vec();
    let scale = m.iter().flatten().map(PivotField::magnitude).fold(0.0, f64::max);
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].magnitude().total_cmp(&m[j][k].magnitude()))
            .unwrap();
        if F::negligible(&m[p][k], scale, n) {
            return Err(Error::Singular { column: k, pivot: m[p][k].magnitude() });
        }
        m.swap(k, p);
        x.swap(k, p);
        for i in k + 1..n {
            let l = m[i][k].clone() / m[k][k].clone();
            if l.is_zero() {
                continue;
            }
            for j in k..n {
                let t = l.clone() * m[k][j].clone();
                m[i][j] = m[i][j].clone() - t;
            }
            x[i] = x[i].clone() - l * x[k].clone();
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k].clone();
        for j in k + 1..n {
            s = s - m[k][j].clone() * x[j].clone();
        }
        x[k] = s / m[k][k].clone();
    }
    Ok(x)
}

/// `n × n` Hilbert matrix over the rationals.
pub fn hilbert(n: usize) -> Vec<Vec<BigRational>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| BigRational::new(BigInt::from(1), BigInt::from((i + j + 1) as u64)))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn identity_returns_rhs() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(dense_solve(&a, &[3.0, -4.0]).unwrap(), vec![3.0, -4.0]);
    }

    #[test]
    fn singular_detected() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(matches!(dense_solve(&a, &[1.0, 1.0]), Err(Error::Singular { .. })));
        let q = vec![
            vec![BigRational::one(), BigRational::one()],
            vec![BigRational::one(), BigRational::one()],
        ];
        assert!(dense_solve(&q, &[BigRational::one(), BigRational::zero()]).is_err());
    }

    #[test]
    fn hilbert_inverse_row_sums() {
        // Row sums of inv(H_4) are A·1 solved from H x = 1: known values -4, 60, -180, 140.
        let h = hilbert(4);
        let ones = vec![BigRational::one(); 4];
        let x = dense_solve(&h, &ones).unwrap();
        let expected = [-4i64, 60, -180, 140].map(|v| BigRational::from_integer(BigInt::from(v)));
        assert_eq!(x, expected.to_vec());
        // The same system in floating point agrees to conditioning-limited accuracy.
        let hf: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| 1.0 / (i + j + 1) as f64).collect()).collect();
        let xf = dense_solve(&hf, &[1.0; 4]).unwrap();
        for (a, b) in xf.iter().zip([-4.0, 60.0, -180.0, 140.0]) {
            assert!((a - b).abs() < 1e-9 * 180.0);
        }
    }
}
