//! Fixed-size point and tensor helpers. Points always carry three coordinates;
//! in 2D the third one is zero.

use crate::Real;

pub type Point<T> = [T; 3];
pub type Tensor<T> = [[T; 3]; 3];

#[inline]
pub fn zero<T: Real>() -> Point<T> {
    [T::zero(); 3]
}

#[inline]
pub fn zero_tensor<T: Real>() -> Tensor<T> {
    [[T::zero(); 3]; 3]
}

#[inline]
pub fn add<T: Real>(a: &Point<T>, b: &Point<T>) -> Point<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub<T: Real>(a: &Point<T>, b: &Point<T>) -> Point<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale<T: Real>(a: &Point<T>, s: T) -> Point<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn axpy<T: Real>(y: &mut Point<T>, s: T, x: &Point<T>) {
    y[0] += s * x[0];
    y[1] += s * x[1];
    y[2] += s * x[2];
}

#[inline]
pub fn dot<T: Real>(a: &Point<T>, b: &Point<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<T: Real>(a: &Point<T>, b: &Point<T>) -> Point<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm<T: Real>(a: &Point<T>) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist<T: Real>(a: &Point<T>, b: &Point<T>) -> T {
    norm(&sub(a, b))
}

/// `M v` for the leading `dim` block.
#[inline]
pub fn mat_vec<T: Real>(m: &Tensor<T>, v: &Point<T>, dim: usize) -> Point<T> {
    let mut out = zero();
    for i in 0..dim {
        for j in 0..dim {
            out[i] += m[i][j] * v[j];
        }
    }
    out
}

/// Frobenius inner product of the leading `dim` blocks.
#[inline]
pub fn frobenius<T: Real>(a: &Tensor<T>, b: &Tensor<T>, dim: usize) -> T {
    let mut s = T::zero();
    for i in 0..dim {
        for j in 0..dim {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

pub fn cast_point<T: Real>(p: &[f64]) -> Point<T> {
    let mut out = zero();
    for (o, v) in out.iter_mut().zip(p) {
        *o = T::of(*v);
    }
    out
}
