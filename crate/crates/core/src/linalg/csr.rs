use std::io::{BufRead, Write};
use std::path::Path;

use crate::{Error, Real, Result};

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed on build.
#[derive(Debug, Clone)]
pub struct TripletBuilder<T> {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Real> TripletBuilder<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// Sums duplicates; entries that sum to exactly zero are kept so that the
    /// sparsity pattern only depends on the pushed positions.
    pub fn build(mut self) -> CsrMatrix<T> {
        self.entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut offsets = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut values: Vec<T> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            offsets[r + 1] += offsets[r];
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, offsets, indices, values }
    }
}

impl<T: Real> CsrMatrix<T> {
    /// Builds from raw arrays, checking the structural invariants.
    pub fn try_from_parts(
        nrows: usize,
        ncols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if offsets.len() != nrows + 1 || offsets[0] != 0 || *offsets.last().unwrap() != indices.len() {
            return Err(Error::invalid("row offsets inconsistent with shape"));
        }
        if indices.len() != values.len() {
            return Err(Error::invalid("index and value arrays differ in length"));
        }
        for r in 0..nrows {
            if offsets[r] > offsets[r + 1] {
                return Err(Error::invalid(format!("row offsets decrease at row {r}")));
            }
            let row = &indices[offsets[r]..offsets[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= ncols) {
                return Err(Error::invalid(format!("row {r} has unsorted or out-of-range columns")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite matrix entry"));
        }
        Ok(Self { nrows, ncols, offsets, indices, values })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, offsets: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); n])
    }

    pub fn from_diagonal(d: &[T]) -> Self {
        Self {
            nrows: d.len(),
            ncols: d.len(),
            offsets: (0..=d.len()).collect(),
            indices: (0..d.len()).collect(),
            values: d.to_vec(),
        }
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut b = TripletBuilder::new(rows.len(), ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let span = self.offsets[r]..self.offsets[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = T::zero();
            for k in self.offsets[r]..self.offsets[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *yr = s;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y += s Aᵀ x`.
    pub fn transpose_mul_add(&self, x: &[T], s: T, y: &mut [T]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        for r in 0..self.nrows {
            let xr = s * x[r];
            if xr == T::zero() {
                continue;
            }
            for k in self.offsets[r]..self.offsets[r + 1] {
                y[self.indices[k]] += self.values[k] * xr;
            }
        }
    }

    pub fn transpose_mul(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.ncols];
        self.transpose_mul_add(x, T::one(), &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for r in 0..self.nrows {
            for k in self.offsets[r]..self.offsets[r + 1] {
                let c = self.indices[k];
                indices[next[c]] = r;
                values[next[c]] = self.values[k];
                next[c] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, offsets: counts, indices, values }
    }

    /// `a A + b B` (union of patterns).
    pub fn linear_combination(a: T, lhs: &Self, b: T, rhs: &Self) -> Self {
        assert_eq!((lhs.nrows, lhs.ncols), (rhs.nrows, rhs.ncols));
        let mut offsets = Vec::with_capacity(lhs.nrows + 1);
        offsets.push(0);
        let mut indices = Vec::with_capacity(lhs.nnz() + rhs.nnz());
        let mut values = Vec::with_capacity(lhs.nnz() + rhs.nnz());
        for r in 0..lhs.nrows {
            let (mut i, ie) = (lhs.offsets[r], lhs.offsets[r + 1]);
            let (mut j, je) = (rhs.offsets[r], rhs.offsets[r + 1]);
            while i < ie || j < je {
                let ci = if i < ie { lhs.indices[i] } else { usize::MAX };
                let cj = if j < je { rhs.indices[j] } else { usize::MAX };
                if ci == cj {
                    indices.push(ci);
                    values.push(a * lhs.values[i] + b * rhs.values[j]);
                    i += 1;
                    j += 1;
                } else if ci < cj {
                    indices.push(ci);
                    values.push(a * lhs.values[i]);
                    i += 1;
                } else {
                    indices.push(cj);
                    values.push(b * rhs.values[j]);
                    j += 1;
                }
            }
            offsets.push(indices.len());
        }
        Self { nrows: lhs.nrows, ncols: lhs.ncols, offsets, indices, values }
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Rows `rows` and columns `cols` as a new matrix.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in rows.clone() {
            for (c, v) in self.row(r) {
                if cols.contains(&c) {
                    indices.push(c - cols.start);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        Self { nrows: rows.len(), ncols: cols.len(), offsets, indices, values }
    }

    /// Largest `|A_ij - A_ji|` relative to the largest `|A_ij|`.
    pub fn symmetry_defect(&self) -> T {
        if self.nrows != self.ncols {
            return T::infinity();
        }
        let t = self.transpose();
        let diff = Self::linear_combination(T::one(), self, -T::one(), &t);
        let max = self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let dmax = diff.values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if max == T::zero() {
            T::zero()
        } else {
            dmax / max
        }
    }

    pub fn cast<U: Real>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            offsets: self.offsets.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Writes Matrix Market coordinate format (general, real).
    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "%%MatrixMarket matrix coordinate real general").map_err(io)?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz()).map_err(io)?;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                writeln!(w, "{} {} {:.17e}", r + 1, c + 1, v.as_f64()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Reads Matrix Market coordinate format (`general` or `symmetric`, real).
    pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let parse = |line: usize, message: String| Error::Parse {
            location: format!("{}:{line}", path.display()),
            message,
        };
        let mut lines = std::io::BufReader::new(file).lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| parse(1, "empty file".into()))?;
        let header = header.map_err(|e| Error::io(path, e))?.to_lowercase();
        if !header.starts_with("%%matrixmarket matrix coordinate") {
            return Err(parse(1, "expected a coordinate Matrix Market header".into()));
        }
        let symmetric = header.contains("symmetric");
        let mut builder: Option<TripletBuilder<T>> = None;
        for (k, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('%') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match builder.as_mut() {
                None => {
                    let dims: Vec<usize> = fields
                        .iter()
                        .map(|s| s.parse().map_err(|_| parse(k + 1, format!("bad size field {s:?}"))))
                        .collect::<Result<_>>()?;
                    if dims.len() != 3 {
                        return Err(parse(k + 1, "size line needs rows, cols, nnz".into()));
                    }
                    builder = Some(TripletBuilder::with_capacity(dims[0], dims[1], dims[2]));
                }
                Some(b) => {
                    if fields.len() != 3 {
                        return Err(parse(k + 1, "entry needs row, col, value".into()));
                    }
                    let r: usize = fields[0].parse().map_err(|_| parse(k + 1, "bad row".into()))?;
                    let c: usize = fields[1].parse().map_err(|_| parse(k + 1, "bad column".into()))?;
                    let v: f64 = fields[2].parse().map_err(|_| parse(k + 1, "bad value".into()))?;
                    if r == 0 || c == 0 || r > b.nrows || c > b.ncols {
                        return Err(parse(k + 1, format!("entry ({r}, {c}) out of range")));
                    }
                    b.push(r - 1, c - 1, T::of(v));
                    if symmetric && r != c {
                        b.push(c - 1, r - 1, T::of(v));
                    }
                }
            }
        }
        builder.map(TripletBuilder::build).ok_or_else(|| parse(0, "missing size line".into()))
    }
}
