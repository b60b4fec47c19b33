//! Symmetric eigensolvers, inertia counts, spectral projectors, the
//! nonbacktracking spectrum and the Ihara-Bass determinant check.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::graphmat::{bethe_hessian, NbMatrix};
use crate::matrix::SymOperator;
use crate::seeded_rng;

/// Largest dimension for which counts come from a dense `L D L^T`.
pub const DENSE_LIMIT: usize = 2000;
/// Largest dimension for which eigenvectors come from a dense eigensolve.
pub const DENSE_EIG_LIMIT: usize = 400;
/// Largest vertex count accepted by the Ihara-Bass determinant check.
pub const IHARA_LIMIT: usize = 40;
/// Pivot threshold, relative to the largest entry, below which a shifted
/// factorization is declared singular.
pub const PIVOT_TOL: f64 = 1e-13;
const JITTER: f64 = 1e-9;
const MAX_JITTER_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Count(usize),
    /// Every eigenvalue strictly below (for `Side::Low`) or above the value.
    Threshold(f64),
}

#[derive(Debug, Clone)]
pub struct EigResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub residual_norms: Vec<f64>,
    pub converged: bool,
}

impl EigResult {
    fn empty(n: usize) -> Self {
        EigResult {
            eigenvalues: Vec::new(),
            vectors: DMatrix::zeros(n, 0),
            residual_norms: Vec::new(),
            converged: true,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Orthogonal projector onto the span of `basis`'s orthonormal columns.
#[derive(Debug, Clone)]
pub struct Projector {
    pub basis: DMatrix<f64>,
}

impl Projector {
    pub fn new(basis: DMatrix<f64>) -> Self {
        Projector { basis }
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn trace(&self) -> f64 {
        self.basis.norm_squared()
    }

    /// `Pi_ii` for every `i`.
    pub fn diagonal(&self) -> Vec<f64> {
        self.basis.row_iter().map(|r| r.norm_squared()).collect()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let coef = self.basis.tr_mul(&xv);
        (&self.basis * coef).as_slice().to_vec()
    }

    /// `<x, Pi x>`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.basis.tr_mul(&DVector::from_column_slice(x)).norm_squared()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// All eigenvalues of a dense symmetric matrix, ascending.
pub fn dense_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Full eigendecomposition, eigenvalues ascending with matching columns.
pub fn dense_eigh(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(a.nrows(), a.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Number of eigenvalues of `a` strictly below `shift`, from the signs of
/// the block-diagonal factor of a Bunch-Kaufman `L D L^T` of `a - shift I`.
///
/// Only the lower triangle of `a` is read.
pub fn inertia_below(a: &DMatrix<f64>, shift: f64) -> Result<usize> {
    let n = a.nrows();
    // row-major lower triangle of a - shift I
    let mut w = vec![0.0; n * n];
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            let v = a[(i, j)] - if i == j { shift } else { 0.0 };
            w[i * n + j] = v;
            scale = scale.max(v.abs());
        }
    }
    let tol = PIVOT_TOL * scale.max(f64::MIN_POSITIVE);
    let alpha = (1.0 + 17f64.sqrt()) / 8.0;
    let at = |w: &[f64], i: usize, j: usize| if i >= j { w[i * n + j] } else { w[j * n + i] };
    let mut neg = 0;
    let mut k = 0;
    let mut col = vec![0.0; n];
    let mut col2 = vec![0.0; n];
    while k < n {
        let akk = w[k * n + k].abs();
        let (imax, colmax) = ((k + 1)..n)
            .map(|i| (i, w[i * n + k].abs()))
            .fold((k, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if akk.max(colmax) <= tol {
            return Err(Error::SingularShift { shift });
        }
        let mut two_by_two = false;
        let mut pivot = k;
        if akk < alpha * colmax {
            let rowmax = (k..n)
                .filter(|&j| j != imax)
                .map(|j| at(&w, imax, j).abs())
                .fold(0.0, f64::max);
            if akk * rowmax >= alpha * colmax * colmax {
                // keep the 1x1 pivot at k
            } else if w[imax * n + imax].abs() >= alpha * rowmax {
                pivot = imax;
            } else {
                two_by_two = true;
                pivot = imax;
            }
        }
        let target = if two_by_two { k + 1 } else { k };
        if pivot != target {
            sym_swap(&mut w, n, k, target, pivot);
        }
        if !two_by_two {
            let d = w[k * n + k];
            if d < 0.0 {
                neg += 1;
            }
            for i in (k + 1)..n {
                col[i] = w[i * n + k];
            }
            for i in (k + 1)..n {
                let li = col[i] / d;
                if li == 0.0 {
                    continue;
                }
                let row = &mut w[i * n + k + 1..=i * n + i];
                for (x, c) in row.iter_mut().zip(&col[k + 1..=i]) {
                    *x -= li * c;
                }
            }
            k += 1;
        } else {
            let (d11, d21, d22) = (w[k * n + k], w[(k + 1) * n + k], w[(k + 1) * n + k + 1]);
            let det = d11 * d22 - d21 * d21;
            if det < 0.0 {
                neg += 1;
            } else if d11 + d22 < 0.0 {
                neg += 2;
            }
            for i in (k + 2)..n {
                col[i] = w[i * n + k];
                col2[i] = w[i * n + k + 1];
            }
            for i in (k + 2)..n {
                // [l0 l1] = [c0 c1] D^{-1}
                let l0 = (col[i] * d22 - col2[i] * d21) / det;
                let l1 = (col2[i] * d11 - col[i] * d21) / det;
                let row = &mut w[i * n + k + 2..=i * n + i];
                for ((x, c0), c1) in row.iter_mut().zip(&col[k + 2..=i]).zip(&col2[k + 2..=i]) {
                    *x -= l0 * c0 + l1 * c1;
                }
            }
            k += 2;
        }
    }
    Ok(neg)
}

/// Symmetric swap of rows/columns `p < q` in the trailing block `>= k` of a
/// row-major lower triangle.
fn sym_swap(w: &mut [f64], n: usize, k: usize, p: usize, q: usize) {
    let (p, q) = (p.min(q), p.max(q));
    w.swap(p * n + p, q * n + q);
    for j in k..p {
        w.swap(p * n + j, q * n + j);
    }
    for j in (p + 1)..q {
        w.swap(j * n + p, q * n + j);
    }
    for i in (q + 1)..n {
        w.swap(i * n + p, i * n + q);
    }
}

fn jittered(thresh: f64, scale: f64, attempt: usize) -> f64 {
    if attempt == 0 {
        return thresh;
    }
    let sign = if attempt % 2 == 1 { 1.0 } else { -1.0 };
    thresh + sign * attempt.div_ceil(2) as f64 * JITTER * thresh.abs().max(scale)
}

/// Number of eigenvalues strictly below `thresh`.
///
/// Exact inertia up to `DENSE_LIMIT`; beyond that the count comes from a
/// thresholded Lanczos run and is heuristic.
pub fn count_below(op: &dyn SymOperator, thresh: f64) -> Result<usize> {
    if op.dim() <= DENSE_LIMIT {
        count_below_dense(&op.to_dense(), thresh)
    } else {
        Ok(lanczos(op, Target::Threshold(thresh), 0, &LanczosOptions::default())?.len())
    }
}

/// Dense inertia count with up to three jittered retries when the
/// threshold sits on an eigenvalue.
pub fn count_below_dense(a: &DMatrix<f64>, thresh: f64) -> Result<usize> {
    let scale = a.amax().max(1e-300);
    let mut last = Err(Error::SingularShift { shift: thresh });
    for attempt in 0..=MAX_JITTER_RETRIES {
        last = inertia_below(a, jittered(thresh, scale, attempt));
        if last.is_ok() {
            return last;
        }
    }
    last
}

/// Extreme eigenpairs, either a fixed count or everything past a threshold.
pub fn eig_extreme(op: &dyn SymOperator, side: Side, target: Target, seed: u64) -> Result<EigResult> {
    match side {
        Side::Low => eig_low(op, target, seed),
        Side::High => {
            let neg = crate::matrix::Negated(op);
            let target = match target {
                Target::Threshold(v) => Target::Threshold(-v),
                c => c,
            };
            let mut res = eig_low(&neg, target, seed)?;
            res.eigenvalues.iter_mut().for_each(|v| *v = -*v);
            Ok(res)
        }
    }
}

fn eig_low(op: &dyn SymOperator, target: Target, seed: u64) -> Result<EigResult> {
    let n = op.dim();
    if n == 0 {
        return Ok(EigResult::empty(0));
    }
    if n <= DENSE_EIG_LIMIT {
        let a = op.to_dense();
        let (vals, vecs) = dense_eigh(&a);
        let m = match target {
            Target::Count(c) => c.min(n),
            Target::Threshold(th) => {
                let m = vals.iter().take_while(|&&v| v < th).count();
                // the factorization count is the ground truth; a disagreement
                // means the threshold sits within rounding of an eigenvalue
                if let Ok(exact) = count_below_dense(&a, th) {
                    if exact != m && !near_threshold(&vals, th, a.amax()) {
                        return Err(Error::InvariantViolation(format!(
                            "eigensolver found {m} eigenvalues below {th}, inertia says {exact}"
                        )));
                    }
                }
                m
            }
        };
        let vectors = vecs.columns(0, m).into_owned();
        let residual_norms = residuals(op, &vals[..m], &vectors);
        return Ok(EigResult {
            eigenvalues: vals[..m].to_vec(),
            vectors,
            residual_norms,
            converged: true,
        });
    }
    let opts = LanczosOptions::default();
    let res = lanczos(op, target, seed, &opts)?;
    if let Target::Threshold(th) = target {
        if n <= DENSE_LIMIT {
            let exact = count_below_dense(&op.to_dense(), th)?;
            if exact != res.len() {
                return lanczos(op, Target::Count(exact), seed ^ 1, &opts);
            }
        }
    }
    Ok(res)
}

fn near_threshold(vals: &[f64], th: f64, scale: f64) -> bool {
    vals.iter().any(|v| (v - th).abs() <= 1e-8 * scale.max(th.abs()))
}

fn residuals(op: &dyn SymOperator, vals: &[f64], vecs: &DMatrix<f64>) -> Vec<f64> {
    let n = op.dim();
    let mut y = vec![0.0; n];
    vals.iter()
        .enumerate()
        .map(|(j, &l)| {
            let v = vecs.column(j);
            op.apply(v.as_slice(), &mut y);
            y.iter().zip(v.iter()).map(|(a, b)| (a - l * b).powi(2)).sum::<f64>().sqrt()
        })
        .collect()
}

/// Orthonormal basis of the eigenspace with eigenvalues strictly below `thresh`.
pub fn projector_below(op: &dyn SymOperator, thresh: f64, seed: u64) -> Result<Projector> {
    let res = eig_extreme(op, Side::Low, Target::Threshold(thresh), seed)?;
    Ok(Projector::new(res.vectors))
}

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// Krylov steps per pass before an explicit restart.
    pub max_steps: usize,
    pub max_passes: usize,
    /// Residual tolerance relative to the largest Ritz magnitude seen.
    pub rel_tol: f64,
    pub check_every: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            max_steps: 300,
            max_passes: 60,
            rel_tol: 1e-10,
            check_every: 10,
        }
    }
}

/// Lowest eigenpairs by Lanczos with full reorthogonalization and locking.
///
/// Each pass runs in the orthogonal complement of the pairs locked so far
/// and locks the converged lowest Ritz pairs. In threshold mode the search
/// stops once the lowest remaining Ritz value has settled above the
/// threshold; multiplicities are picked up by the fresh start vector of the
/// next pass.
pub fn lanczos(op: &dyn SymOperator, target: Target, seed: u64, opts: &LanczosOptions) -> Result<EigResult> {
    let n = op.dim();
    let mut rng = seeded_rng(seed, 7);
    let mut locked: Vec<DVector<f64>> = Vec::new();
    let mut locked_vals: Vec<f64> = Vec::new();
    let mut norm_est = 0.0f64;
    let wanted = |locked: usize| match target {
        Target::Count(c) => locked < c.min(n),
        Target::Threshold(_) => locked < n,
    };
    let mut start: Option<DVector<f64>> = None;
    let mut done = false;
    for _pass in 0..opts.max_passes {
        if !wanted(locked.len()) {
            done = true;
            break;
        }
        let mut q = match start.take() {
            Some(v) => v,
            None => DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
        };
        orthogonalize(&mut q, &locked);
        orthogonalize(&mut q, &locked);
        let qn = q.norm();
        if qn < 1e-10 {
            // complement of the locked space exhausted
            done = true;
            break;
        }
        let budget = opts.max_steps.min(n - locked.len());
        let mut basis: Vec<DVector<f64>> = vec![q / qn];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut y = vec![0.0; n];
        loop {
            let j = basis.len() - 1;
            op.apply(basis[j].as_slice(), &mut y);
            let mut w = DVector::from_column_slice(&y);
            let a = w.dot(&basis[j]);
            alphas.push(a);
            for _ in 0..2 {
                orthogonalize(&mut w, &locked);
                orthogonalize(&mut w, &basis);
            }
            let b = w.norm();
            let m = alphas.len();
            norm_est = norm_est.max(a.abs());
            let at_budget = m >= budget;
            let breakdown = b <= 1e-12 * norm_est.max(1e-300);
            if !m.is_multiple_of(opts.check_every) && !at_budget && !breakdown {
                betas.push(b);
                basis.push(w / b);
                continue;
            }
            let (theta, s) = tridiag_eigh(&alphas, &betas);
            norm_est = norm_est.max(theta[0].abs()).max(theta[m - 1].abs());
            let tol = opts.rel_tol * norm_est;
            let resid: Vec<f64> = (0..m)
                .map(|i| if breakdown { 0.0 } else { (b * s[(m - 1, i)]).abs() })
                .collect();
            let limit = match target {
                Target::Count(c) => c.min(n) - locked.len(),
                Target::Threshold(_) => m,
            };
            let below = |i: usize| match target {
                Target::Threshold(th) => theta[i] < th,
                Target::Count(_) => true,
            };
            let mut take = 0;
            while take < limit.min(m) && resid[take] <= tol && below(take) {
                take += 1;
            }
            let complete = match target {
                Target::Count(c) => locked.len() + take >= c.min(n),
                Target::Threshold(th) => {
                    // the next Ritz value is an upper bound on the next
                    // eigenvalue; accept it once settled or out of steps
                    take == m
                        || (theta[take] >= th
                            && (resid[take] <= tol
                                || at_budget
                                || breakdown
                                || (m >= 40 && theta[take] - resid[take] >= th)))
                }
            };
            if take == 0 && !complete && !at_budget && !breakdown {
                betas.push(b);
                basis.push(w / b);
                continue;
            }
            for (i, &th) in theta.iter().enumerate().take(take) {
                let mut v = ritz_vector(&basis, &s, i, n);
                orthogonalize(&mut v, &locked);
                let vn = v.norm();
                locked.push(v / vn);
                locked_vals.push(th);
            }
            if complete {
                done = true;
            } else if take == 0 && at_budget {
                start = Some(ritz_vector(&basis, &s, 0, n));
            }
            break;
        }
        if done {
            break;
        }
    }
    if !done {
        let requested = match target {
            Target::Count(c) => c,
            Target::Threshold(_) => locked.len() + 1,
        };
        return Err(Error::NoConvergence {
            converged: locked.len(),
            requested,
        });
    }
    let mut order: Vec<usize> = (0..locked.len()).collect();
    order.sort_by(|&a, &b| locked_vals[a].total_cmp(&locked_vals[b]));
    let mut vectors = DMatrix::zeros(n, order.len());
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &locked[i]);
    }
    let eigenvalues: Vec<f64> = order.iter().map(|&i| locked_vals[i]).collect();
    let residual_norms = residuals(op, &eigenvalues, &vectors);
    Ok(EigResult {
        eigenvalues,
        vectors,
        residual_norms,
        converged: true,
    })
}

fn ritz_vector(basis: &[DVector<f64>], s: &DMatrix<f64>, i: usize, n: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    for (j, bj) in basis.iter().enumerate() {
        v.axpy(s[(j, i)], bj, 1.0);
    }
    v
}

fn orthogonalize(v: &mut DVector<f64>, against: &[DVector<f64>]) {
    for u in against {
        let c = u.dot(v);
        v.axpy(-c, u, 1.0);
    }
}

fn tridiag_eigh(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = alphas.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j || j + 1 == i {
            betas[i.min(j)]
        } else {
            0.0
        }
    });
    dense_eigh(&t)
}

/// Largest-magnitude eigenvalues of `B`, by magnitude descending.
#[derive(Debug, Clone)]
pub struct NbSpectrum {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Leading entries of `eigenvalues` that met the convergence test.
    pub converged: usize,
}

/// Block subspace iteration with Rayleigh-Ritz on the nonbacktracking
/// operator. The first `count` Ritz values must stabilize; the rest of the
/// block is returned as-is.
pub fn nb_spectrum(b: &NbMatrix, count: usize, seed: u64) -> Result<NbSpectrum> {
    let m = b.dim();
    if count > m {
        return Err(Error::InvalidInput(format!("{count} eigenvalues requested of a {m}-dim operator")));
    }
    if m == 0 || count == 0 {
        return Ok(NbSpectrum {
            eigenvalues: Vec::new(),
            converged: 0,
        });
    }
    if m <= 400 {
        let mut ev: Vec<Complex<f64>> = b.to_dense().complex_eigenvalues().iter().copied().collect();
        sort_by_magnitude(&mut ev);
        return Ok(NbSpectrum {
            converged: ev.len(),
            eigenvalues: ev,
        });
    }
    let p = (count + 10).max(12).min(m);
    let mut rng = seeded_rng(seed, 11);
    let mut q = DMatrix::from_fn(m, p, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
    let mut prev: Option<Vec<Complex<f64>>> = None;
    let mut stable = 0;
    let mut z = DMatrix::zeros(m, p);
    for it in 0..5000 {
        let mut out = vec![0.0; m];
        for c in 0..p {
            b.apply(q.column(c).as_slice(), &mut out);
            z.column_mut(c).copy_from_slice(&out);
        }
        if it % 5 == 4 {
            let h = q.tr_mul(&z);
            let mut ev: Vec<Complex<f64>> = h.complex_eigenvalues().iter().copied().collect();
            sort_by_magnitude(&mut ev);
            if let Some(pv) = &prev {
                let settled = (0..count).all(|i| (ev[i] - pv[i]).norm() <= 1e-9 * ev[i].norm().max(1.0));
                stable = if settled { stable + 1 } else { 0 };
                if stable >= 3 {
                    return Ok(NbSpectrum {
                        eigenvalues: ev,
                        converged: count,
                    });
                }
            }
            prev = Some(ev);
        }
        q = z.clone().qr().q();
    }
    Err(Error::NoConvergence {
        converged: 0,
        requested: count,
    })
}

fn sort_by_magnitude(ev: &mut [Complex<f64>]) {
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.re.total_cmp(&a.re)));
}

/// `|det(I - tB) - det(H(t)) (1 - t^2)^(m - n)| / max(1, |det(I - tB)|)`.
pub fn ihara_bass_residual(g: &SparseGraph, t: f64) -> Result<f64> {
    let n = g.n();
    if n > IHARA_LIMIT {
        return Err(Error::TooLarge { n, limit: IHARA_LIMIT });
    }
    if (1.0 - t * t).abs() <= 1e-6 {
        return Err(Error::InvalidInput(format!("t = {t} too close to +-1")));
    }
    let b = crate::graphmat::nb_matrix(g).to_dense();
    let lhs = (DMatrix::identity(b.nrows(), b.nrows()) - b * t).determinant();
    let h = bethe_hessian(g, t).dense().determinant();
    let rhs = h * (1.0 - t * t).powi(g.num_edges() as i32 - n as i32);
    Ok((lhs - rhs).abs() / lhs.abs().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphmat::nb_matrix;
    use crate::matrix::SparseSymMatrix;
    use approx::assert_relative_eq;
    use proptest::prelude::ProptestConfig;
    use proptest::{prop_assert_eq, prop_assume, proptest};

    fn random_sym(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = seeded_rng(seed, 99);
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&a + a.transpose()) * 0.5
    }

    fn diag3() -> SparseSymMatrix {
        SparseSymMatrix::from_diagonal(&[-1.0, 0.5, 2.0])
    }

    #[test]
    fn eig_extreme_diagonal() {
        let r = eig_extreme(&diag3(), Side::Low, Target::Count(1), 0).unwrap();
        assert_relative_eq!(r.eigenvalues[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(r.vectors[(0, 0)].abs(), 1.0, epsilon = 1e-12);
        let h = eig_extreme(&diag3(), Side::High, Target::Count(1), 0).unwrap();
        assert_relative_eq!(h.eigenvalues[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn laplacian_null_vector() {
        let g = SparseGraph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]).unwrap();
        let lap = bethe_hessian(&g, 1.0);
        let r = eig_extreme(&lap, Side::Low, Target::Count(1), 0).unwrap();
        assert!(r.eigenvalues[0].abs() < 1e-12);
        for i in 0..6 {
            assert_relative_eq!(r.vectors[(i, 0)].abs(), 1.0 / 6f64.sqrt(), epsilon = 1e-10);
        }
    }

    #[test]
    fn count_below_examples() {
        assert_eq!(count_below(&diag3(), -0.1).unwrap(), 1);
        let k3 = SparseGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(count_below(&bethe_hessian(&k3, 1.0), -1e-6).unwrap(), 0);
        // threshold exactly on an eigenvalue: jitter resolves it
        let c = count_below(&diag3(), 0.5).unwrap();
        assert!(c == 1 || c == 2);
        assert!(matches!(inertia_below(&diag3().dense(), 0.5), Err(Error::SingularShift { .. })));
    }

    #[test]
    fn inertia_matches_dense_oracle() {
        for seed in 0..30 {
            let n = 5 + (seed as usize * 7) % 60;
            let a = random_sym(n, seed);
            let ev = dense_eigenvalues(&a);
            for th in [-1.5, -0.3, 0.0, 0.7, 2.0] {
                let expect = ev.iter().filter(|&&v| v < th).count();
                assert_eq!(count_below_dense(&a, th).unwrap(), expect, "seed {seed} th {th}");
            }
        }
    }

    #[test]
    fn inertia_needs_two_by_two_pivots() {
        // zero diagonal forces 2x2 blocks
        let a = DMatrix::from_row_slice(4, 4, &[
            0.0, 1.0, 2.0, 0.0, //
            1.0, 0.0, 0.0, 3.0, //
            2.0, 0.0, 0.0, 1.0, //
            0.0, 3.0, 1.0, 0.0,
        ]);
        let ev = dense_eigenvalues(&a);
        for th in [-2.0, -0.1, 0.1, 1.0] {
            assert_eq!(inertia_below(&a, th).unwrap(), ev.iter().filter(|&&v| v < th).count());
        }
    }

    #[test]
    fn projector_examples() {
        let a = SparseSymMatrix::from_diagonal(&[-1.0, -2.0, 3.0]);
        let p = projector_below(&a, -0.5, 0).unwrap();
        assert_eq!(p.rank(), 2);
        assert_relative_eq!(p.trace(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(p.diagonal()[2], 0.0, epsilon = 1e-12);
        let psd = SparseSymMatrix::from_diagonal(&[1.0, 2.0]);
        assert_eq!(projector_below(&psd, 0.0, 0).unwrap().rank(), 0);
    }

    #[test]
    fn projector_matches_dense_truncation() {
        for seed in 0..20 {
            let a = random_sym(100, seed);
            let th = -0.5;
            let p = projector_below(&a, th, seed).unwrap();
            let (vals, vecs) = dense_eigh(&a);
            let m = vals.iter().filter(|&&v| v < th).count();
            assert_eq!(p.rank(), m);
            let pd = p.dense();
            assert!((&pd * &pd - &pd).amax() < 1e-8);
            let trunc = vecs.columns(0, m) * DMatrix::from_diagonal(&DVector::from_vec(vals[..m].to_vec())) * vecs.columns(0, m).transpose();
            assert!((&pd * &a * &pd - trunc).norm() < 1e-6);
        }
    }

    fn sparse_random(n: usize, deg: f64, seed: u64) -> SparseSymMatrix {
        let mut rng = seeded_rng(seed, 3);
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, i, rng.sample::<f64, _>(StandardNormal)));
            for j in (i + 1)..n {
                if rng.random::<f64>() < deg / n as f64 {
                    entries.push((i, j, rng.sample::<f64, _>(StandardNormal)));
                }
            }
        }
        SparseSymMatrix::from_upper(n, entries)
    }

    #[test]
    fn lanczos_matches_dense() {
        let a = sparse_random(200, 6.0, 1);
        let ev = dense_eigenvalues(&a.dense());
        let low = lanczos(&a, Target::Count(5), 0, &LanczosOptions::default()).unwrap();
        for (x, e) in low.eigenvalues.iter().zip(&ev) {
            assert_relative_eq!(*x, *e, epsilon = 1e-8);
        }
        assert!(low.residual_norms.iter().all(|&r| r < 1e-7));
        let vtv = low.vectors.tr_mul(&low.vectors);
        assert!((vtv - DMatrix::identity(5, 5)).amax() < 1e-8);
        let th = ev[7] + 0.5 * (ev[8] - ev[7]);
        let below = lanczos(&a, Target::Threshold(th), 3, &LanczosOptions::default()).unwrap();
        assert_eq!(below.len(), 8);
    }

    #[test]
    fn lanczos_finds_repeated_eigenvalues() {
        let mut d: Vec<f64> = (0..300).map(|i| i as f64 / 100.0).collect();
        d[0] = -2.0;
        d[1] = -2.0;
        d[2] = -2.0;
        let a = SparseSymMatrix::from_diagonal(&d);
        let r = lanczos(&a, Target::Threshold(-1.0), 0, &LanczosOptions::default()).unwrap();
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn interlacing_under_zeroing() {
        for seed in 0..10 {
            let a = sparse_random(60, 5.0, seed);
            let base = count_below(&a, -0.3).unwrap();
            for i in [0, 17, 59] {
                assert!(count_below(&a.zero_row_col(i), -0.3).unwrap() <= base);
            }
        }
    }

    #[test]
    fn nb_spectrum_small_graphs() {
        let k3 = SparseGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let s = nb_spectrum(&nb_matrix(&k3), 6, 0).unwrap();
        assert!(s.eigenvalues.iter().any(|z| (z - Complex::new(1.0, 0.0)).norm() < 1e-8));
        // det(I - tB) = prod (1 - t mu) = (1 - t^3)^2
        let t = 0.3;
        let det = s.eigenvalues.iter().fold(Complex::new(1.0, 0.0), |acc, z| acc * (Complex::new(1.0, 0.0) - z * t));
        assert_relative_eq!(det.re, (1.0f64 - t.powi(3)).powi(2), epsilon = 1e-10);
        let tree = SparseGraph::from_edges(5, [(0, 1), (1, 2), (1, 3), (3, 4)]).unwrap();
        let s = nb_spectrum(&nb_matrix(&tree), 3, 0).unwrap();
        assert!(s.eigenvalues.iter().all(|z| z.norm() < 1e-6));
    }

    #[test]
    fn ihara_bass_examples() {
        let k3 = SparseGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!(ihara_bass_residual(&k3, 0.5).unwrap() < 1e-10);
        let b = nb_matrix(&k3).to_dense();
        let lhs = (DMatrix::identity(6, 6) - b * 0.5).determinant();
        assert_relative_eq!(lhs, 0.765625, epsilon = 1e-12);
        let tree = SparseGraph::from_edges(6, [(0, 1), (0, 2), (2, 3), (2, 4), (4, 5)]).unwrap();
        for t in [-0.7, 0.2, 0.9] {
            assert!(ihara_bass_residual(&tree, t).unwrap() < 1e-12);
        }
        assert!(matches!(
            ihara_bass_residual(&SparseGraph::empty(41), 0.5),
            Err(Error::TooLarge { .. })
        ));
        assert!(ihara_bass_residual(&k3, 1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn inertia_agrees_with_eigenvalues(seed in 0u64..10_000, n in 1usize..40, th in -2.0f64..2.0) {
            let a = random_sym(n, seed);
            let ev = dense_eigenvalues(&a);
            prop_assume!(ev.iter().all(|v| (v - th).abs() > 1e-9));
            prop_assert_eq!(count_below_dense(&a, th).unwrap(), ev.iter().filter(|&&v| v < th).count());
        }
    }
}
