//! Recovery scores: Psi-correlation, its expansion through the confusion
//! matrix, partition advantage and plug-in mutual information.
//!
//! Every quantity reduces to `k x k` matrices; nothing `n x n` is formed.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Assignment, TransitionSpec};

const ZERO_NORM_TOL: f64 = 1e-12;

/// Psi-correlation between an estimate (or its expectation `W`) and the truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryScore {
    pub rho: f64,
    pub raw_inner: f64,
    pub frob_w: f64,
    pub frob_x: f64,
    /// `confusion[(q, j)] = Pr[estimate = q | truth = j]`.
    #[serde(skip)]
    pub confusion: DMatrix<f64>,
}

/// Flat record written by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub rho: f64,
    pub raw_inner: f64,
    pub frob_w: f64,
    pub frob_x: f64,
    pub advantage: f64,
    pub mi_per_vertex: f64,
}

/// `n x k` one-hot matrix of an assignment.
pub fn one_hot_matrix(x: &Assignment) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(x.n(), x.k());
    for (v, &c) in x.labels().iter().enumerate() {
        m[(v, c)] = 1.0;
    }
    m
}

/// `W^T X` as a `k x k` matrix, accumulated row by row.
fn cross(w: &DMatrix<f64>, x: &Assignment) -> DMatrix<f64> {
    let k = x.k();
    let mut c = DMatrix::zeros(w.ncols(), k);
    for (v, &j) in x.labels().iter().enumerate() {
        for q in 0..w.ncols() {
            c[(q, j)] += w[(v, q)];
        }
    }
    c
}

pub fn weak_recovery_corr(w: &DMatrix<f64>, x: &Assignment, spec: &TransitionSpec) -> Result<RecoveryScore> {
    let k = spec.k();
    if w.nrows() != x.n() {
        return Err(Error::SizeMismatch { left: w.nrows(), right: x.n() });
    }
    if w.ncols() != k || x.k() != k {
        return Err(Error::SizeMismatch { left: w.ncols(), right: k });
    }
    let psi = &spec.psi;
    let wx = cross(w, x);
    let ww = w.transpose() * w;
    let counts = x.counts();
    let xx = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k, counts.iter().map(|&c| c as f64)));

    let raw_inner = (psi.transpose() * &wx * psi).norm_squared();
    let frob_w = (psi.transpose() * ww * psi).norm();
    let frob_x = (psi.transpose() * xx * psi).norm();
    let n2 = (x.n() as f64).powi(2);
    if frob_w <= ZERO_NORM_TOL * n2 || frob_x <= ZERO_NORM_TOL * n2 {
        return Err(Error::ZeroNorm);
    }
    let rho = raw_inner / (frob_w * frob_x);
    if rho > 1.0 + 1e-9 {
        return Err(Error::InvariantViolation(format!("rho = {rho} exceeds 1")));
    }

    let mut confusion = wx;
    for (j, &nj) in counts.iter().enumerate() {
        if nj > 0 {
            confusion.column_mut(j).unscale_mut(nj as f64);
        }
    }
    Ok(RecoveryScore {
        rho,
        raw_inner,
        frob_w,
        frob_x,
        confusion,
    })
}

/// Confusion-matrix form of the inner product, next to the direct value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationExpansion {
    pub expansion: f64,
    pub direct: f64,
}

/// `n^2 (sum_ij pi_j P_ij^2 / pi_i - sum_i q_i^2 / pi_i)` with `P` the
/// empirical confusion matrix and `q` the empirical marginal of `xhat`.
///
/// The exact identity has two more terms, `1 - sum_j qhat_j^2 / pi_j` with
/// `qhat` the empirical truth marginal; they cancel up to sampling error.
pub fn correlation_expansion(xhat: &Assignment, x: &Assignment, spec: &TransitionSpec) -> Result<CorrelationExpansion> {
    let n = x.n();
    if xhat.n() != n {
        return Err(Error::SizeMismatch { left: xhat.n(), right: n });
    }
    let k = spec.k();
    let pi = &spec.pi;
    let p = confusion(xhat, x);
    let q: Vec<f64> = xhat.counts().iter().map(|&c| c as f64 / n as f64).collect();
    let mut s = 0.0;
    for i in 0..k {
        for j in 0..k {
            s += pi[j] * p[(i, j)].powi(2) / pi[i];
        }
        s -= q[i] * q[i] / pi[i];
    }
    let expansion = (n as f64).powi(2) * s;
    let direct = weak_recovery_corr(&one_hot_matrix(xhat), x, spec)?.raw_inner;
    Ok(CorrelationExpansion { expansion, direct })
}

/// Empirical `Pr[xhat = q | x = j]`; empty truth communities give zero columns.
pub fn confusion(xhat: &Assignment, x: &Assignment) -> DMatrix<f64> {
    let k = x.k().max(xhat.k());
    let mut p = DMatrix::zeros(k, k);
    for (&q, &j) in xhat.labels().iter().zip(x.labels()) {
        p[(q, j)] += 1.0;
    }
    for (j, nj) in x.counts().into_iter().enumerate() {
        if nj > 0 {
            p.column_mut(j).unscale_mut(nj as f64);
        }
    }
    p
}

/// `max_{i,j} |Omega_i cap S|/|Omega_i| - |Omega_j cap S|/|Omega_j|`.
pub fn partition_advantage(s: &[bool], x: &Assignment) -> Result<f64> {
    if s.len() != x.n() {
        return Err(Error::SizeMismatch { left: s.len(), right: x.n() });
    }
    let counts = x.counts();
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyCommunity(c));
    }
    let mut hits = vec![0usize; x.k()];
    for (v, &inside) in s.iter().enumerate() {
        if inside {
            hits[x.label(v)] += 1;
        }
    }
    let frac: Vec<f64> = hits.iter().zip(&counts).map(|(&h, &c)| h as f64 / c as f64).collect();
    let hi = frac.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = frac.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(hi - lo)
}

/// Vertices carrying the most frequent estimated label.
pub fn majority_set(xhat: &Assignment) -> Vec<bool> {
    let counts = xhat.counts();
    let top = (0..counts.len()).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0);
    xhat.labels().iter().map(|&c| c == top).collect()
}

/// `n` times the plug-in mutual information (nats) of the empirical joint
/// law of `(x_v, xhat_v)`.
pub fn mutual_information(xhat: &Assignment, x: &Assignment) -> f64 {
    let n = x.n();
    if n == 0 {
        return 0.0;
    }
    let (ka, kb) = (xhat.k(), x.k());
    let mut joint = DMatrix::<f64>::zeros(ka, kb);
    for (&a, &b) in xhat.labels().iter().zip(x.labels()) {
        joint[(a, b)] += 1.0;
    }
    joint /= n as f64;
    let pa: Vec<f64> = joint.row_iter().map(|r| r.sum()).collect();
    let pb: Vec<f64> = joint.column_iter().map(|c| c.sum()).collect();
    let mut mi = 0.0;
    for a in 0..ka {
        for b in 0..kb {
            let p = joint[(a, b)];
            if p > 0.0 {
                mi += p * (p / (pa[a] * pb[b])).ln();
            }
        }
    }
    n as f64 * mi.max(0.0)
}

/// Scores a labelling against the truth; `w` is the rounding weight matrix
/// when available, otherwise the one-hot estimate is used.
pub fn score(w: Option<&DMatrix<f64>>, xhat: &Assignment, x: &Assignment, spec: &TransitionSpec) -> Result<ScoreRecord> {
    let one_hot;
    let w = match w {
        Some(w) => w,
        None => {
            one_hot = one_hot_matrix(xhat);
            &one_hot
        }
    };
    let s = weak_recovery_corr(w, x, spec)?;
    let advantage = partition_advantage(&majority_set(xhat), x)?;
    Ok(ScoreRecord {
        rho: s.rho,
        raw_inner: s.raw_inner,
        frob_w: s.frob_w,
        frob_x: s.frob_x,
        advantage,
        mi_per_vertex: mutual_information(xhat, x) / x.n() as f64,
    })
}
