//! Symmetric sparse storage and the operator abstraction the eigensolvers run on.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Entries with magnitude below this are dropped after products.
pub const DROP_TOL: f64 = 1e-14;

/// A real symmetric linear operator `R^n -> R^n`.
pub trait SymOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = Op x`. `y` is fully overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn quad_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        dot(x, &y)
    }

    /// Materializes the operator column by column.
    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            e[j] = 0.0;
            out.column_mut(j).copy_from_slice(&col);
        }
        // Column-wise materialization of a matrix-free product can pick up
        // rounding asymmetry; average it away.
        let t = out.transpose();
        (out + t) * 0.5
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric matrix in compressed-row form with cached row l1 norms.
///
/// Construction guarantees bit-identical `(i, j)` and `(j, i)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    row_l1: Vec<f64>,
}

impl SparseSymMatrix {
    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_upper(diag.len(), diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_upper(n, std::iter::empty())
    }

    /// Builds from entries with `i <= j`; each is mirrored. Repeated
    /// coordinates are summed, near-zero results dropped.
    pub fn from_upper<I>(n: usize, entries: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, v) in entries {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            trip.push((a, b, v));
        }
        trip.sort_unstable_by_key(|&(a, b, _)| (a, b));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(trip.len());
        for (a, b, v) in trip {
            match merged.last_mut() {
                Some(last) if last.0 == a && last.1 == b => last.2 += v,
                _ => merged.push((a, b, v)),
            }
        }
        let mut full = Vec::with_capacity(2 * merged.len());
        for (a, b, v) in merged {
            if v.abs() < DROP_TOL {
                continue;
            }
            full.push((a, b, v));
            if a != b {
                full.push((b, a, v));
            }
        }
        Self::from_sorted_triplets(n, full)
    }

    /// Builds from arbitrary triplets and insists on exact symmetry.
    pub fn from_triplets<I>(n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut trip: Vec<(usize, usize, f64)> = entries.into_iter().collect();
        for &(i, j, _) in &trip {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!("entry ({i}, {j}) out of range")));
            }
        }
        trip.sort_unstable_by_key(|&(a, b, _)| (a, b));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(trip.len());
        for (a, b, v) in trip {
            match merged.last_mut() {
                Some(last) if last.0 == a && last.1 == b => last.2 += v,
                _ => merged.push((a, b, v)),
            }
        }
        merged.retain(|e| e.2.abs() >= DROP_TOL);
        let m = Self::from_sorted_triplets(n, merged);
        for i in 0..n {
            let (cols, vals) = m.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if m.get(j, i) != v {
                    return Err(Error::NonSymmetric { row: i, col: j });
                }
            }
        }
        Ok(m)
    }

    fn from_sorted_triplets(n: usize, mut full: Vec<(usize, usize, f64)>) -> Self {
        full.sort_unstable_by_key(|&(a, b, _)| (a, b));
        let mut row_ptr = vec![0usize; n + 1];
        for &(a, _, _) in &full {
            row_ptr[a + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let cols: Vec<usize> = full.iter().map(|e| e.1).collect();
        let vals: Vec<f64> = full.iter().map(|e| e.2).collect();
        let row_l1 = (0..n)
            .map(|i| vals[row_ptr[i]..row_ptr[i + 1]].iter().map(|v| v.abs()).sum())
            .collect();
        SparseSymMatrix {
            n,
            row_ptr,
            cols,
            vals,
            row_l1,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    pub fn row_l1_norms(&self) -> &[f64] {
        &self.row_l1
    }

    pub fn max_row_l1(&self) -> f64 {
        self.row_l1.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_exactly_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).all(|(&j, &v)| self.get(j, i) == v)
        })
    }

    /// Copy with row and column `i` set to zero.
    pub fn zero_row_col(&self, i: usize) -> Self {
        let mut entries = Vec::with_capacity(self.nnz());
        for a in 0..self.n {
            if a == i {
                continue;
            }
            let (cols, vals) = self.row(a);
            for (&b, &v) in cols.iter().zip(vals) {
                if b != i {
                    entries.push((a, b, v));
                }
            }
        }
        Self::from_sorted_triplets(self.n, entries)
    }

    /// Sparse product `self * other` without a symmetry guarantee, as
    /// row-major `(col, val)` lists.
    pub(crate) fn mul_rows(&self, other: &SparseSymMatrix) -> Vec<Vec<(usize, f64)>> {
        let n = self.n;
        let mut acc = vec![0.0; n];
        let mut touched = vec![false; n];
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut idx = Vec::new();
            let (ca, va) = self.row(i);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(k);
                for (&j, &b) in cb.iter().zip(vb) {
                    if !touched[j] {
                        touched[j] = true;
                        idx.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            idx.sort_unstable();
            let mut row = Vec::with_capacity(idx.len());
            for j in idx {
                if acc[j].abs() >= DROP_TOL {
                    row.push((j, acc[j]));
                }
                acc[j] = 0.0;
                touched[j] = false;
            }
            out.push(row);
        }
        out
    }

    /// `left * self * left` for symmetric `left`; the upper triangle of the
    /// result is mirrored so the output is exactly symmetric.
    pub fn congruence(&self, left: &SparseSymMatrix) -> SparseSymMatrix {
        let right = self.mul_rows(left);
        let right = SparseSymMatrix::from_sorted_triplets(
            self.n,
            right
                .into_iter()
                .enumerate()
                .flat_map(|(i, row)| row.into_iter().map(move |(j, v)| (i, j, v)))
                .collect(),
        );
        let prod = left.mul_rows(&right);
        SparseSymMatrix::from_upper(
            self.n,
            prod.into_iter()
                .enumerate()
                .flat_map(|(i, row)| row.into_iter().filter(move |&(j, _)| j >= i).map(move |(j, v)| (i, j, v))),
        )
    }

    /// Linear combination `a*self + b*other`.
    pub fn add_scaled(&self, a: f64, other: &SparseSymMatrix, b: f64) -> SparseSymMatrix {
        let mut entries = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            let (c, v) = self.row(i);
            entries.extend(c.iter().zip(v).filter(|(&j, _)| j >= i).map(|(&j, &x)| (i, j, a * x)));
            let (c, v) = other.row(i);
            entries.extend(c.iter().zip(v).filter(|(&j, _)| j >= i).map(|(&j, &x)| (i, j, b * x)));
        }
        SparseSymMatrix::from_upper(self.n, entries)
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                out[(i, j)] = x;
            }
        }
        out
    }
}

impl SymOperator for SparseSymMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.dense()
    }
}

impl SymOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

impl<T: SymOperator + ?Sized> SymOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        (**self).to_dense()
    }
}

/// `P Op P` where `P` zeroes a set of coordinates: the operator with the
/// masked rows and columns set to zero.
pub struct Masked<'a> {
    inner: &'a dyn SymOperator,
    removed: &'a [bool],
}

impl<'a> Masked<'a> {
    pub fn new(inner: &'a dyn SymOperator, removed: &'a [bool]) -> Self {
        assert_eq!(inner.dim(), removed.len());
        Masked { inner, removed }
    }
}

impl SymOperator for Masked<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xm: Vec<f64> = x
            .iter()
            .zip(self.removed)
            .map(|(&v, &r)| if r { 0.0 } else { v })
            .collect();
        self.inner.apply(&xm, y);
        for (yi, &r) in y.iter_mut().zip(self.removed) {
            if r {
                *yi = 0.0;
            }
        }
    }
}

/// `-Op`, used to turn largest-eigenvalue queries into smallest ones.
pub struct Negated<'a>(pub &'a dyn SymOperator);

impl SymOperator for Negated<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply(x, y);
        for v in y.iter_mut() {
            *v = -*v;
        }
    }
}
