//! Rounding a recovered subspace to a labelling: a random `r'`-dimensional
//! slice of `U`, scaled into the hull of the community embeddings, sampled
//! vertex by vertex.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lp::{maximize, LpOutcome};
use crate::model::{Assignment, TransitionSpec};
use crate::robustpca::RecoveredSubspace;
use crate::seeded_rng;

/// Global scale clamp, in units of `sqrt(n)`.
pub const SCALE_CLAMP: f64 = 1e6;
/// Tolerated mismatch between `W phi` and `c M'` per row.
pub const HULL_TOL: f64 = 1e-7;

/// `n x r'` matrix with orthonormal columns spanning `U' in U`.
#[derive(Debug, Clone)]
pub struct VertexEmbedding {
    pub mprime: DMatrix<f64>,
}

/// Haar-random `r'`-frame of `U`.
pub fn random_subspace(u: &RecoveredSubspace, rprime: usize, seed: u64) -> Result<VertexEmbedding> {
    let dim = u.dim();
    if rprime > dim || rprime == 0 {
        return Err(Error::DimensionTooSmall { dim, wanted: rprime });
    }
    let mut rng = seeded_rng(seed, 3);
    let g = DMatrix::from_fn(dim, rprime, |_, _| rng.sample::<f64, _>(StandardNormal));
    let frame = g.qr().q();
    Ok(VertexEmbedding {
        mprime: &u.basis * frame,
    })
}

/// Largest `c` with `c * row` in `conv(phi)`, and convex weights realizing it.
///
/// A zero row is inside at every scale; it returns `+inf` with weights `pi`.
pub fn max_inscribe_scale(row: &[f64], phis: &[Vec<f64>], pi: &[f64]) -> Result<(f64, Vec<f64>)> {
    let k = phis.len();
    let dim = row.len();
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok((f64::INFINITY, pi.to_vec()));
    }
    // solved on the unit row so tiny entries stay above the pivot tolerance
    // variables (w_1..w_k, c); rows: sum_j w_j phi_j - c row = 0, sum w = 1
    let mut a = DMatrix::zeros(dim + 1, k + 1);
    for (j, phi) in phis.iter().enumerate() {
        for d in 0..dim {
            a[(d, j)] = phi[d];
        }
        a[(dim, j)] = 1.0;
    }
    for d in 0..dim {
        a[(d, k)] = -row[d] / norm;
    }
    let mut b = vec![0.0; dim + 1];
    b[dim] = 1.0;
    let mut obj = vec![0.0; k + 1];
    obj[k] = 1.0;
    match maximize(&obj, &a, &b) {
        LpOutcome::Optimal { x, value } => {
            let mut w = x[..k].to_vec();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            Ok((value / norm, w))
        }
        LpOutcome::Infeasible => Err(Error::HullDegenerate),
        // bounded hull and a nonzero row keep c finite
        LpOutcome::Unbounded => Err(Error::HullDegenerate),
    }
}

#[derive(Debug, Clone)]
pub struct HullWeights {
    pub c: f64,
    /// `n x k`, rows on the simplex.
    pub w: DMatrix<f64>,
    /// Per-row finite optimal scales (`inf` for zero rows).
    pub row_scales: Vec<f64>,
    /// `max_i |sum_j W_ij phi_j - c M'_i|`.
    pub hull_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Rounding {
    pub assignment: Assignment,
    pub weights: HullWeights,
    pub embedding: VertexEmbedding,
}

/// Full rounding phase. Vertex `i` gets weights
/// `(c/c_i) w_i* + (1 - c/c_i) pi`, which realize `c M'_i` exactly since
/// `sum_j pi_j phi_j = 0`.
pub fn round(u: &RecoveredSubspace, spec: &TransitionSpec, seed: u64) -> Result<Rounding> {
    let embedding = random_subspace(u, spec.rprime, seed)?;
    let n = u.n();
    let k = spec.k();
    let phis = spec.phis();
    let pi: Vec<f64> = spec.pi.iter().copied().collect();
    let mut scales = Vec::with_capacity(n);
    let mut best = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = embedding.mprime.row(i).iter().copied().collect();
        let (ci, wi) = max_inscribe_scale(&row, &phis, &pi)?;
        scales.push(ci);
        best.push(wi);
    }
    let clamp = SCALE_CLAMP * (n as f64).sqrt();
    let c = scales.iter().copied().filter(|v| v.is_finite()).fold(clamp, f64::min);
    let mut w = DMatrix::zeros(n, k);
    for i in 0..n {
        let lam = if scales[i].is_finite() { (c / scales[i]).min(1.0) } else { 0.0 };
        for j in 0..k {
            w[(i, j)] = lam * best[i][j] + (1.0 - lam) * pi[j];
        }
    }
    let hull_residual = hull_residual(&w, &embedding.mprime, &phis, c);
    Ok(Rounding {
        assignment: sample_assignment(&w, seed)?,
        weights: HullWeights {
            c,
            w,
            row_scales: scales,
            hull_residual,
        },
        embedding,
    })
}

/// One draw per vertex, in index order, from the rows of `w`.
pub fn sample_assignment(w: &DMatrix<f64>, seed: u64) -> Result<Assignment> {
    let (n, k) = w.shape();
    let mut rng = seeded_rng(seed, 4);
    let labels = (0..n)
        .map(|i| {
            let x: f64 = rng.random();
            let mut acc = 0.0;
            for j in 0..k {
                acc += w[(i, j)];
                if x < acc {
                    return j;
                }
            }
            k - 1
        })
        .collect();
    Assignment::new(k, labels)
}

fn hull_residual(w: &DMatrix<f64>, mprime: &DMatrix<f64>, phis: &[Vec<f64>], c: f64) -> f64 {
    let dim = mprime.ncols();
    let phi = DMatrix::from_fn(phis.len(), dim, |j, d| phis[j][d]);
    let diff = w * phi - mprime * c;
    diff.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// Checks row-stochasticity, nonnegativity and hull membership.
pub fn check_weights(h: &HullWeights) -> Result<()> {
    for (i, row) in h.w.row_iter().enumerate() {
        let s: f64 = row.sum();
        if (s - 1.0).abs() > 1e-9 || row.iter().any(|&v| v < -1e-12) {
            return Err(Error::InvariantViolation(format!("weight row {i} is off the simplex")));
        }
    }
    if h.hull_residual > HULL_TOL {
        return Err(Error::InvariantViolation(format!(
            "hull residual {:e} exceeds {HULL_TOL:e}",
            h.hull_residual
        )));
    }
    if h.row_scales.iter().any(|&ci| h.c > ci * (1.0 + 1e-12)) {
        return Err(Error::InvariantViolation("global scale exceeds a row scale".into()));
    }
    Ok(())
}

/// Distance from the origin to the boundary of `conv(phi)`; nonpositive when
/// the origin is not interior.
pub fn hull_inradius(phis: &[Vec<f64>]) -> Result<f64> {
    let dim = phis.first().map_or(0, |p| p.len());
    if dim == 0 {
        return Err(Error::HullDegenerate);
    }
    if dim == 1 {
        let lo = phis.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = phis.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return Ok((-lo).min(hi));
    }
    let k = phis.len();
    let mut best = f64::INFINITY;
    let mut found = false;
    for subset in combinations(k, dim) {
        // normal of the hyperplane through the chosen points
        let base = DVector::from_column_slice(&phis[subset[0]]);
        let mut rows = DMatrix::zeros(dim, dim);
        for (r, &j) in subset.iter().enumerate().skip(1) {
            let v = DVector::from_column_slice(&phis[j]) - &base;
            rows.set_row(r - 1, &v.transpose());
        }
        let svd = rows.svd(false, true);
        let vt = svd.v_t.unwrap();
        let (idx, smin) = svd.singular_values.argmin();
        let sv = &svd.singular_values;
        let rank_ok = (0..dim).filter(|&i| i != idx).all(|i| sv[i] > 1e-10) && smin <= 1e-10;
        if !rank_ok {
            continue;
        }
        let normal = vt.row(idx).transpose();
        let offset = normal.dot(&base);
        let sides: Vec<f64> = phis.iter().map(|p| normal.dot(&DVector::from_column_slice(p)) - offset).collect();
        let above = sides.iter().all(|&s| s >= -1e-10);
        let below = sides.iter().all(|&s| s <= 1e-10);
        if !(above || below) {
            continue;
        }
        found = true;
        // signed distance of the origin to the facet, positive on the hull side
        let dist = if above { offset } else { -offset };
        best = best.min(-dist / normal.norm());
    }
    if !found {
        return Err(Error::HullDegenerate);
    }
    Ok(best)
}

fn combinations(k: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            cur.push(i);
            rec(i + 1, k, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, m, &mut Vec::new(), &mut out);
    out
}
