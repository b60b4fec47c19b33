//! Stochastic block models: validation, transition-matrix analysis, sampling,
//! and the choice of every algorithm constant.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::seeded_rng;

/// Default relative tolerance for counting the multiplicity of lambda2.
pub const DEFAULT_MULT_TOL: f64 = 1e-6;

/// Block probabilities `M`, prior `pi`, average degree `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    m: DMatrix<f64>,
    pi: DVector<f64>,
    d: f64,
}

impl ModelParams {
    pub fn k(&self) -> usize {
        self.pi.len()
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Same block structure at a different average degree.
    pub fn with_degree(&self, d: f64) -> Result<Self> {
        validate_params(self.m.clone(), self.pi.clone(), d)
    }

    pub fn pi_min(&self) -> f64 {
        self.pi.min()
    }

    /// Symmetric `k`-community model with diagonal `a` and off-diagonal `b`
    /// under the uniform prior; `a + (k-1) b` must equal `k`.
    pub fn symmetric(k: usize, a: f64, b: f64, d: f64) -> Result<Self> {
        let m = DMatrix::from_fn(k, k, |i, j| if i == j { a } else { b });
        validate_params(m, DVector::from_element(k, 1.0 / k as f64), d)
    }

    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            k: self.k(),
            m: (0..self.k())
                .map(|i| self.m.row(i).iter().copied().collect())
                .collect(),
            pi: self.pi.iter().copied().collect(),
            d: self.d,
        }
    }
}

/// Checks the block model invariants and returns the validated parameters.
pub fn validate_params(m: DMatrix<f64>, pi: DVector<f64>, d: f64) -> Result<ModelParams> {
    let k = pi.len();
    if k < 2 || m.nrows() != k || m.ncols() != k {
        return Err(Error::InvalidInput(format!(
            "need k >= 2 and a k x k block matrix (k = {k}, M is {}x{})",
            m.nrows(),
            m.ncols()
        )));
    }
    if !m.iter().chain(pi.iter()).all(|v| v.is_finite()) || !d.is_finite() || d < 0.0 {
        return Err(Error::InvalidInput("non-finite input or negative degree".into()));
    }
    for i in 0..k {
        for j in 0..k {
            if m[(i, j)] < 0.0 {
                return Err(Error::NegativeEntry { row: i, col: j });
            }
            if m[(i, j)] != m[(j, i)] {
                return Err(Error::NonSymmetric { row: i, col: j });
            }
        }
    }
    if pi.iter().any(|&p| p <= 0.0) || (pi.sum() - 1.0).abs() > 1e-12 {
        return Err(Error::NotSimplex);
    }
    let residual = (&m * &pi).iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    if residual > 1e-10 {
        return Err(Error::NormalizationViolated { residual });
    }
    Ok(ModelParams { m, pi, d })
}

/// On-disk model description: `k`, `M` (row-major matrix literal), `pi`, `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub k: usize,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    pub d: f64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<ModelParams> {
        if self.m.len() != self.k || self.m.iter().any(|r| r.len() != self.k) || self.pi.len() != self.k {
            return Err(Error::InvalidInput(format!(
                "dimensions disagree with k = {}",
                self.k
            )));
        }
        let m = DMatrix::from_fn(self.k, self.k, |i, j| self.m[i][j]);
        validate_params(m, DVector::from_vec(self.pi.clone()), self.d)
    }

    pub fn parse(text: &str) -> Result<ModelParams> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        spec.validate()
    }

    pub fn load(path: &Path) -> Result<ModelParams> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let rows: Vec<String> = self
            .m
            .iter()
            .map(|r| format!("[{}]", join(r)))
            .collect();
        format!(
            "k = {}\nM = [{}]\npi = [{}]\nd = {}\n",
            self.k,
            rows.join(", "),
            join(&self.pi),
            fmt_f(self.d)
        )
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f(*x)).collect::<Vec<_>>().join(", ")
}

/// Community labels in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    k: usize,
    labels: Vec<usize>,
}

impl Assignment {
    pub fn new(k: usize, labels: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidInput(format!("label {bad} out of range for k = {k}")));
        }
        Ok(Assignment { k, labels })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Indicator vector of community `c`.
    pub fn indicator(&self, c: usize) -> Vec<f64> {
        self.labels.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect()
    }

    /// Dense one-hot encoding, row `v` is `e_{label(v)}`.
    pub fn one_hot(&self) -> Vec<Vec<f64>> {
        self.labels
            .iter()
            .map(|&l| {
                let mut row = vec![0.0; self.k];
                row[l] = 1.0;
                row
            })
            .collect()
    }

    /// Relabels through `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> Assignment {
        Assignment {
            k: self.k,
            labels: self.labels.iter().map(|&l| perm[l]).collect(),
        }
    }

    pub fn write_labels<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for &l in &self.labels {
            writeln!(out, "{l}")?;
        }
        Ok(())
    }

    pub fn read_labels<R: std::io::BufRead>(k: usize, input: R) -> Result<Self> {
        let mut labels = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            labels.push(t.parse().map_err(|e| Error::Parse {
                line: i + 1,
                msg: format!("{e}"),
            })?);
        }
        Assignment::new(k, labels)
    }
}

/// Eigen-analysis of `T = M Pi`.
#[derive(Debug, Clone)]
pub struct TransitionSpec {
    pub t: DMatrix<f64>,
    /// `1 = lambda_1` first, then by decreasing magnitude, positive first on ties.
    pub eigenvalues: Vec<f64>,
    pub lambda2: f64,
    pub r: usize,
    /// k x (k-1), nontrivial right eigenvectors, orthonormal under `<., .>_pi`.
    pub psi: DMatrix<f64>,
    /// First `rprime` columns of the lambda2-eigenspace.
    pub psi_rprime: DMatrix<f64>,
    pub rprime: usize,
    /// The unadjusted `r - 1` / `r` count, before the k = 2 convention.
    pub rprime_raw: usize,
    pub pi: DVector<f64>,
}

impl TransitionSpec {
    /// Community embedding `phi_c`, row `c` of `psi_rprime`.
    pub fn phi(&self, c: usize) -> Vec<f64> {
        self.psi_rprime.row(c).iter().copied().collect()
    }

    pub fn phis(&self) -> Vec<Vec<f64>> {
        (0..self.psi_rprime.nrows()).map(|c| self.phi(c)).collect()
    }

    pub fn k(&self) -> usize {
        self.t.nrows()
    }

    /// Column `j` of the lambda2-eigenspace basis (`j < r`).
    pub fn signal_vector(&self, j: usize) -> Vec<f64> {
        self.psi.column(j).iter().copied().collect()
    }
}

/// Diagonalizes `T` through the symmetric `Pi^{1/2} M Pi^{1/2}`.
pub fn analyze_transition(params: &ModelParams, mult_tol: f64) -> Result<TransitionSpec> {
    let k = params.k();
    let pi = params.pi();
    let sqrt_pi = pi.map(f64::sqrt);
    let s = DMatrix::from_fn(k, k, |i, j| sqrt_pi[i] * params.m()[(i, j)] * sqrt_pi[j]);
    let eig = SymmetricEigen::new(s);

    // The trivial direction is sqrt(pi) exactly (M pi = 1); peel it off.
    let trivial = (0..k)
        .max_by(|&a, &b| {
            let da = eig.eigenvectors.column(a).dot(&sqrt_pi).abs();
            let db = eig.eigenvectors.column(b).dot(&sqrt_pi).abs();
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    let unit_sqrt_pi = &sqrt_pi / sqrt_pi.norm();
    let mut pairs: Vec<(f64, DVector<f64>)> = (0..k)
        .filter(|&i| i != trivial)
        .map(|i| {
            let mut u = eig.eigenvectors.column(i).into_owned();
            u -= &unit_sqrt_pi * unit_sqrt_pi.dot(&u);
            let nrm = u.norm();
            (eig.eigenvalues[i], u / nrm)
        })
        .collect();
    pairs.sort_by(|a, b| {
        let (la, lb) = (a.0, b.0);
        if (la.abs() - lb.abs()).abs() <= 1e-12 {
            lb.partial_cmp(&la).unwrap()
        } else {
            lb.abs().partial_cmp(&la.abs()).unwrap()
        }
    });

    let lambda2 = pairs[0].0;
    if lambda2.abs() < 1e-12 || lambda2.abs() >= 1.0 - 1e-12 {
        return Err(Error::DegenerateSpectrum { lambda2 });
    }
    let r = pairs
        .iter()
        .filter(|(l, _)| (l - lambda2).abs() <= mult_tol * lambda2.abs())
        .count();

    let mut psi = DMatrix::zeros(k, k - 1);
    for (j, (_, u)) in pairs.iter().enumerate() {
        let mut col = u.component_div(&sqrt_pi);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() + 1e-12 { v } else { acc });
        if pivot < 0.0 {
            col = -col;
        }
        psi.set_column(j, &col);
    }
    let rprime_raw = if lambda2 > 0.0 { r - 1 } else { r };
    let rprime = rprime_raw.max(1);
    let psi_rprime = psi.columns(0, rprime).into_owned();

    let t = params.m() * DMatrix::from_diagonal(pi);
    let mut eigenvalues = vec![eig.eigenvalues[trivial]];
    eigenvalues.extend(pairs.iter().map(|p| p.0));
    Ok(TransitionSpec {
        t,
        eigenvalues,
        lambda2,
        r,
        psi,
        psi_rprime,
        rprime,
        rprime_raw,
        pi: pi.clone(),
    })
}

/// `lambda2^2 d - 1`; positive iff the model is above the Kesten-Stigum threshold.
pub fn ks_signal(spec: &TransitionSpec, d: f64) -> f64 {
    spec.lambda2 * spec.lambda2 * d - 1.0
}

/// Samples labels i.i.d. from `pi`, then every unordered pair independently
/// with probability `M[x_i, x_j] d / n`.
pub fn sample_sbm(params: &ModelParams, n: usize, seed: u64) -> Result<(SparseGraph, Assignment)> {
    let k = params.k();
    if n < k {
        return Err(Error::InvalidInput(format!("n = {n} < k = {k}")));
    }
    let scale = params.d() / n as f64;
    let pmax = params.m().max() * scale;
    if pmax > 1.0 {
        return Err(Error::ProbabilityOverflow { p: pmax });
    }
    let mut rng = seeded_rng(seed, 0);
    let cdf: Vec<f64> = params
        .pi()
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let labels: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            cdf.iter().position(|&c| u < c).unwrap_or(k - 1)
        })
        .collect();
    let probs = DMatrix::from_fn(k, k, |a, b| params.m()[(a, b)] * scale);
    let mut edges = Vec::new();
    if scale > 0.0 {
        for i in 0..n {
            let li = labels[i];
            for (j, &lj) in labels.iter().enumerate().skip(i + 1) {
                if rng.random::<f64>() < probs[(li, lj)] {
                    edges.push((i, j));
                }
            }
        }
    }
    Ok((
        SparseGraph::from_sorted_unique(n, edges),
        Assignment { k, labels },
    ))
}

/// `p(lambda)` from its explicit sum: the per-unit quadratic form of
/// `A^(l) H(t) A^(l)` on a lifted eigenvector of `T` with eigenvalue `lambda`.
pub fn eval_p(lambda: f64, d: f64, ell: usize, t: f64) -> f64 {
    let l = ell as i32;
    let mut p = -t * d.powi(2 * l - 1) * lambda.powi(2 * l - 1) * (1.0 - lambda * lambda * d * d)
        + t * t * d.powi(2 * l) * lambda.powi(2 * l);
    for s in 0..=l {
        p += d.powi(2 * l - s) * lambda.powi(2 * l - 2 * s)
            - 2.0 * t * d.powi(2 * l - s + 1) * lambda.powi(2 * l - 2 * s + 1)
            + t * t * d.powi(2 * l - s + 1) * lambda.powi(2 * l - 2 * s);
    }
    p
}

/// The bracketed factor of `p`, i.e. `p(lambda) / (lambda d)^(2 ell)`, via the
/// geometric-series closed form.
pub fn p_bracket_closed(lambda: f64, d: f64, ell: usize, t: f64) -> Result<f64> {
    let x = lambda * lambda * d;
    if (x - 1.0).abs() < 1e-12 {
        return Err(Error::SeriesSingularity);
    }
    let ld = lambda * d;
    let geom = (1.0 - x.powi(-(ell as i32) - 1)) / (1.0 - 1.0 / x);
    Ok(t * t - t / ld * (1.0 - ld * ld) + (1.0 - 2.0 * ld * t + d * t * t) * geom)
}

/// Factored closed form of [`eval_p`].
pub fn eval_p_closed(lambda: f64, d: f64, ell: usize, t: f64) -> Result<f64> {
    Ok((lambda * d).powi(2 * ell as i32) * p_bracket_closed(lambda, d, ell, t)?)
}

/// User overrides for [`select_parameters`]; derived constants are always
/// recomputed from these.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub ell: Option<usize>,
    pub delta: Option<f64>,
    pub upsilon: Option<f64>,
    #[serde(rename = "B")]
    pub b: Option<usize>,
}

/// Every constant the pipeline needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    pub eps: f64,
    pub ell: usize,
    pub delta: f64,
    /// Bethe-Hessian parameter, same sign as lambda2.
    pub t: f64,
    /// `p(lambda2)` at the chosen `(ell, t)`.
    pub p_value: f64,
    pub upsilon: f64,
    /// Degree truncation threshold.
    pub b: usize,
    pub eta: f64,
    pub kcap: f64,
    pub tau: f64,
    pub c_deloc: f64,
    pub r: usize,
    pub rprime: usize,
}

impl AlgoParams {
    /// Recomputes `eta`, `kcap`, `tau` from `upsilon`, `b`, `ell`, `c_deloc`, `r`.
    pub fn recompute(&mut self) {
        self.eta = self.upsilon / 48.0;
        self.kcap = (self.b as f64).powi(2 * self.ell as i32 + 3);
        self.tau = 2.0 * self.c_deloc * self.c_deloc * self.kcap * self.kcap * self.r as f64
            / (self.eta * self.eta);
    }

    /// Loop guard of the trimming phase, `(2K/eta) r`.
    pub fn phi_guard(&self) -> f64 {
        2.0 * self.kcap / self.eta * self.r as f64
    }
}

/// Relative margin on the bracket of `p` required during the grid search.
pub const P_MARGIN: f64 = 0.01;
pub const ELL_MAX: usize = 40;

/// Grid of `delta` values: `0.01 * 2^j` clipped to `[2^-10, 1]`.
pub fn delta_grid() -> Vec<f64> {
    (-3..=6)
        .map(|j| 0.01 * 2f64.powi(j))
        .filter(|&v| (2f64.powi(-10)..=1.0).contains(&v))
        .collect()
}

/// Smallest `B >= 8d` whose Chernoff bound on `P[Poisson(d) > B]` is at
/// most `1e-4`, capped at `10 d (ell + 1)`.
pub fn default_truncation(d: f64, ell: usize) -> usize {
    let mut b = (8.0 * d).ceil().max(1.0) as usize;
    loop {
        let a = (b + 1) as f64;
        // P[X >= a] <= e^{-d} (e d / a)^a for a > d
        let log_bound = -d + a * (1.0 + (d / a).ln());
        if a > d && log_bound <= (1e-4f64).ln() {
            break;
        }
        b += 1;
    }
    let cap = (10.0 * d * (ell as f64 + 1.0)).floor().max(1.0) as usize;
    b.min(cap)
}

fn t_for(lambda2: f64, d: f64, delta: f64) -> f64 {
    (1.0 + delta) / (lambda2 * d)
}

/// Chooses `(ell, delta)` making `p(lambda2)` negative, then fills in the
/// remaining constants. Anything in `overrides` is taken verbatim.
pub fn select_parameters(
    spec: &TransitionSpec,
    pi_min: f64,
    d: f64,
    overrides: &ParamOverrides,
) -> Result<AlgoParams> {
    let lambda2 = spec.lambda2;
    let eps = ks_signal(spec, d);
    let grid = delta_grid();
    let bracket = |ell: usize, delta: f64| {
        let t = t_for(lambda2, d, delta);
        eval_p(lambda2, d, ell, t) / (lambda2 * d).powi(2 * ell as i32)
    };
    let best_delta = |ell: usize| -> (f64, f64) {
        grid.iter()
            .map(|&dl| (bracket(ell, dl), dl))
            .fold((f64::INFINITY, grid[0]), |a, b| if b.0 < a.0 { b } else { a })
    };

    let (ell, delta) = match (overrides.ell, overrides.delta) {
        (Some(ell), Some(delta)) => (ell, delta),
        (Some(ell), None) => (ell, best_delta(ell).1),
        (None, fixed) => {
            let eval = |ell: usize| match fixed {
                Some(dl) => (bracket(ell, dl), dl),
                None => best_delta(ell),
            };
            if eps <= 0.0 {
                return Err(Error::NoFeasibleParams);
            }
            let mut chosen = None;
            let mut fallback: Option<(f64, usize, f64)> = None;
            for ell in 1..=ELL_MAX {
                let (br, dl) = eval(ell);
                if br <= -P_MARGIN {
                    chosen = Some((ell, dl));
                    break;
                }
                if br < 0.0 && fallback.is_none_or(|f| br < f.0) {
                    fallback = Some((br, ell, dl));
                }
            }
            match (chosen, fallback) {
                (Some(c), _) => c,
                (None, Some((_, ell, dl))) => (ell, dl),
                (None, None) => return Err(Error::NoFeasibleParams),
            }
        }
    };
    let t = t_for(lambda2, d, delta);
    let p_value = eval_p(lambda2, d, ell, t);
    let upsilon = overrides
        .upsilon
        .unwrap_or(p_value.abs() / 2.0 * (lambda2 * lambda2 * d).powi(-2 * ell as i32));
    let b = overrides.b.unwrap_or_else(|| default_truncation(d, ell));
    let mut params = AlgoParams {
        eps,
        ell,
        delta,
        t,
        p_value,
        upsilon,
        b,
        eta: 0.0,
        kcap: 0.0,
        tau: 0.0,
        c_deloc: 1.0 / pi_min.sqrt(),
        r: spec.r,
        rprime: spec.rprime,
    };
    params.recompute();
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_block() -> ModelParams {
        ModelParams::symmetric(2, 1.6, 0.4, 4.0).unwrap()
    }

    #[test]
    fn validate_examples() {
        assert!(two_block().k() == 2);
        assert!(ModelParams::symmetric(2, 2.0, 0.0, 4.0).is_ok());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(validate_params(m, DVector::from_vec(vec![0.6, 0.4]), 3.0).is_ok());
    }

    #[test]
    fn validate_errors() {
        let pi = DVector::from_vec(vec![0.5, 0.5]);
        let asym = DMatrix::from_row_slice(2, 2, &[1.6, 0.5, 0.4, 1.6]);
        assert!(matches!(validate_params(asym, pi.clone(), 1.0), Err(Error::NonSymmetric { .. })));
        let neg = DMatrix::from_row_slice(2, 2, &[2.2, -0.2, -0.2, 2.2]);
        assert!(matches!(validate_params(neg, pi.clone(), 1.0), Err(Error::NegativeEntry { .. })));
        let m = DMatrix::from_row_slice(2, 2, &[1.6, 0.4, 0.4, 1.6]);
        assert_eq!(
            validate_params(m.clone(), DVector::from_vec(vec![0.6, 0.6]), 1.0),
            Err(Error::NotSimplex)
        );
        assert!(matches!(
            validate_params(m * 1.1, pi, 1.0),
            Err(Error::NormalizationViolated { .. })
        ));
    }

    #[test]
    fn transition_two_block() {
        let spec = analyze_transition(&two_block(), DEFAULT_MULT_TOL).unwrap();
        assert_relative_eq!(spec.eigenvalues[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(spec.lambda2, 0.6, epsilon = 1e-12);
        assert_eq!(spec.r, 1);
        assert_eq!(spec.rprime_raw, 0);
        assert_eq!(spec.rprime, 1);
        // pi-orthonormal: psi = (1, -1) up to sign
        assert_relative_eq!(spec.psi[(0, 0)].abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(spec.psi[(0, 0)], -spec.psi[(1, 0)], epsilon = 1e-12);
    }

    #[test]
    fn transition_identity_is_degenerate() {
        let p = ModelParams::symmetric(2, 2.0, 0.0, 4.0).unwrap();
        assert!(matches!(
            analyze_transition(&p, DEFAULT_MULT_TOL),
            Err(Error::DegenerateSpectrum { .. })
        ));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let flat = validate_params(m, DVector::from_vec(vec![0.6, 0.4]), 3.0).unwrap();
        assert!(matches!(
            analyze_transition(&flat, DEFAULT_MULT_TOL),
            Err(Error::DegenerateSpectrum { .. })
        ));
    }

    #[test]
    fn transition_three_block_multiplicity() {
        let p = ModelParams::symmetric(3, 1.8, 0.6, 5.0).unwrap();
        let spec = analyze_transition(&p, DEFAULT_MULT_TOL).unwrap();
        assert_relative_eq!(spec.lambda2, 0.4, epsilon = 1e-12);
        assert_eq!(spec.r, 2);
        assert_eq!(spec.rprime, 1);
        let mut pi_phi = vec![0.0; spec.rprime];
        for c in 0..3 {
            for (a, v) in pi_phi.iter_mut().zip(spec.phi(c)) {
                *a += spec.pi[c] * v;
            }
        }
        assert!(pi_phi.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn ks_signal_examples() {
        let spec = analyze_transition(&two_block(), DEFAULT_MULT_TOL).unwrap();
        assert_relative_eq!(ks_signal(&spec, 4.0), 0.44, epsilon = 1e-12);
        let mut s = spec.clone();
        s.lambda2 = 0.5;
        assert_relative_eq!(ks_signal(&s, 4.0), 0.0, epsilon = 1e-15);
        s.lambda2 = 0.4;
        assert_relative_eq!(ks_signal(&s, 5.0), -0.2, epsilon = 1e-12);
    }

    #[test]
    fn sampler_is_deterministic_and_bounded() {
        // at n = 2 the largest pair probability is 1.6 d / 2, so d = 2 overflows
        let p = ModelParams::symmetric(2, 1.6, 0.4, 1.0).unwrap();
        assert!(sample_sbm(&p.with_degree(2.0).unwrap(), 2, 7).is_err());
        let (g1, x1) = sample_sbm(&p, 2, 7).unwrap();
        let (g2, x2) = sample_sbm(&p, 2, 7).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(x1, x2);
        let p0 = p.with_degree(0.0).unwrap();
        for seed in 0..5 {
            assert_eq!(sample_sbm(&p0, 50, seed).unwrap().0.num_edges(), 0);
        }
        let hot = p.with_degree(20.0).unwrap();
        assert!(matches!(sample_sbm(&hot, 10, 0), Err(Error::ProbabilityOverflow { .. })));
        assert!(sample_sbm(&p, 1, 0).is_err());
    }

    #[test]
    fn p_forms_agree_at_reference_point() {
        // Sum form at (0.6, 4, 3, 0.3) in exact rational arithmetic:
        // 36135808 / 390625.
        let sum = eval_p(0.6, 4.0, 3, 0.3);
        assert_relative_eq!(sum, 92.507_668_48, max_relative = 1e-10);
        let closed = eval_p_closed(0.6, 4.0, 3, 0.3).unwrap();
        assert_relative_eq!(sum, closed, max_relative = 1e-10);
    }

    #[test]
    fn p_at_ell_zero_matches_hand_expansion() {
        let (l, d, t) = (0.7, 3.0, 0.4);
        let hand = -t / (l * d) * (1.0 - l * l * d * d) + t * t + 1.0 - 2.0 * t * d * l + t * t * d;
        assert_relative_eq!(eval_p(l, d, 0, t), hand, max_relative = 1e-14);
        assert_relative_eq!(eval_p_closed(l, d, 0, t).unwrap(), hand, max_relative = 1e-12);
    }

    #[test]
    fn closed_form_singularity() {
        assert_eq!(eval_p_closed(0.5, 4.0, 3, 0.3), Err(Error::SeriesSingularity));
    }

    #[test]
    fn selection_two_block() {
        let p = two_block();
        let spec = analyze_transition(&p, DEFAULT_MULT_TOL).unwrap();
        let a = select_parameters(&spec, p.pi_min(), p.d(), &ParamOverrides::default()).unwrap();
        assert!(eval_p(0.6, 4.0, a.ell, a.t) < 0.0);
        assert_eq!(a.eta, a.upsilon / 48.0);
        assert_eq!(a.kcap, (a.b as f64).powi(2 * a.ell as i32 + 3));
        assert_eq!(a.tau, 2.0 * a.c_deloc * a.c_deloc * a.kcap * a.kcap * a.r as f64 / (a.eta * a.eta));
        assert!(a.b >= 32);
    }

    #[test]
    fn selection_at_threshold_is_infeasible() {
        let p = ModelParams::symmetric(2, 1.5, 0.5, 4.0).unwrap();
        let spec = analyze_transition(&p, DEFAULT_MULT_TOL).unwrap();
        assert_relative_eq!(ks_signal(&spec, 4.0), 0.0, epsilon = 1e-12);
        let ov = ParamOverrides::default();
        assert_eq!(select_parameters(&spec, 0.5, 4.0, &ov), Err(Error::NoFeasibleParams));
        // no grid point goes negative either
        for ell in 1..=ELL_MAX {
            for dl in delta_grid() {
                assert!(eval_p(0.5, 4.0, ell, (1.0 + dl) / 2.0) >= 0.0);
            }
        }
    }

    #[test]
    fn overrides_are_honored() {
        let p = two_block();
        let spec = analyze_transition(&p, DEFAULT_MULT_TOL).unwrap();
        let ov = ParamOverrides {
            ell: Some(2),
            b: Some(30),
            ..Default::default()
        };
        let a = select_parameters(&spec, p.pi_min(), p.d(), &ov).unwrap();
        assert_eq!((a.ell, a.b), (2, 30));
        assert_eq!(a.kcap, 30f64.powi(7));
        assert_eq!(a.eta, a.upsilon / 48.0);
    }

    #[test]
    fn negative_lambda2_gives_negative_t() {
        // disassortative 2-block: lambda2 = -0.6
        let p = ModelParams::symmetric(2, 0.4, 1.6, 4.0).unwrap();
        let spec = analyze_transition(&p, DEFAULT_MULT_TOL).unwrap();
        assert_relative_eq!(spec.lambda2, -0.6, epsilon = 1e-12);
        assert_eq!(spec.rprime, 1);
        let a = select_parameters(&spec, p.pi_min(), p.d(), &ParamOverrides::default()).unwrap();
        assert!(a.t < 0.0);
        assert!(a.p_value < 0.0);
    }

    #[test]
    fn model_file_parses_strictly() {
        let text = "k = 2\nM = [[1.6, 0.4], [0.4, 1.6]]\npi = [0.5, 0.5]\nd = 4.0\n";
        let p = ModelSpec::parse(text).unwrap();
        assert_eq!(p, two_block());
        assert_eq!(ModelSpec::parse(&p.to_spec().to_text()).unwrap(), p);
        assert!(ModelSpec::parse("k = 2\nM = [[1.6, 0.4], [0.4, 1.6]]\npi = [0.5, 0.5]\nd = 4\nextra = 1\n").is_err());
        assert!(ModelSpec::parse("k = 3\nM = [[1.6, 0.4], [0.4, 1.6]]\npi = [0.5, 0.5]\nd = 4\n").is_err());
    }
}
