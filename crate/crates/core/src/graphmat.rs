//! Matrices built from a graph: degree truncation, Bethe Hessians, the
//! nonbacktracking operator and its powers, and the product
//! `A^(l) H(t) A^(l)` fed to subspace recovery.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::matrix::{SparseSymMatrix, SymOperator};
use crate::model::Assignment;

/// Which degree enters the truncated diagonal `Dbar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DbarMode {
    /// `deg_G(v) 1[deg_G(v) <= B]`, degrees measured before truncation.
    #[default]
    PreTruncation,
    /// Degrees measured in the truncated graph.
    PostTruncation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationResult {
    pub graph_b: SparseGraph,
    pub dbar: Vec<f64>,
    /// Vertices whose pre-truncation degree exceeded the threshold.
    pub truncated: Vec<bool>,
    pub threshold: usize,
}

impl TruncationResult {
    /// Vertices within distance `2 ell + 1` (in the untruncated graph `g`)
    /// of a truncated vertex; a superset of those whose `(2 ell + 1)`-ball
    /// changes under truncation.
    pub fn affected(&self, g: &SparseGraph, ell: usize) -> Vec<usize> {
        let radius = 2 * ell + 1;
        let mut dist = vec![usize::MAX; g.n()];
        let mut queue = VecDeque::new();
        for (v, &t) in self.truncated.iter().enumerate() {
            if t {
                dist[v] = 0;
                queue.push_back(v);
            }
        }
        while let Some(v) = queue.pop_front() {
            if dist[v] == radius {
                continue;
            }
            for &w in g.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        (0..g.n()).filter(|&v| dist[v] != usize::MAX).collect()
    }
}

pub fn truncate(g: &SparseGraph, b: usize) -> TruncationResult {
    truncate_with(g, b, DbarMode::PreTruncation)
}

/// Deletes every edge incident to a vertex of degree greater than `b`.
pub fn truncate_with(g: &SparseGraph, b: usize, mode: DbarMode) -> TruncationResult {
    let truncated: Vec<bool> = (0..g.n()).map(|v| g.degree(v) > b).collect();
    let graph_b = g.filter_edges(|u, v| !truncated[u] && !truncated[v]);
    let dbar = match mode {
        DbarMode::PreTruncation => (0..g.n())
            .map(|v| if truncated[v] { 0.0 } else { g.degree(v) as f64 })
            .collect(),
        DbarMode::PostTruncation => (0..g.n()).map(|v| graph_b.degree(v) as f64).collect(),
    };
    TruncationResult {
        graph_b,
        dbar,
        truncated,
        threshold: b,
    }
}

/// `H(t) = (D - I) t^2 - A t + I` with an explicit diagonal.
fn bethe_with_diag(g: &SparseGraph, diag: &[f64], t: f64) -> SparseSymMatrix {
    let entries = (0..g.n())
        .map(|v| (v, v, 1.0 + t * t * (diag[v] - 1.0)))
        .chain(g.edges().iter().map(|&(u, v)| (u, v, -t)));
    SparseSymMatrix::from_upper(g.n(), entries)
}

/// Standard Bethe Hessian of `g`.
pub fn bethe_hessian(g: &SparseGraph, t: f64) -> SparseSymMatrix {
    let deg: Vec<f64> = g.degrees().iter().map(|&d| d as f64).collect();
    bethe_with_diag(g, &deg, t)
}

/// Truncated Bethe Hessian: adjacency of the truncated graph, diagonal `Dbar`.
pub fn bethe_hessian_truncated(tr: &TruncationResult, t: f64) -> SparseSymMatrix {
    bethe_with_diag(&tr.graph_b, &tr.dbar, t)
}

/// Nonbacktracking operator on the `2|E|` directed edges.
///
/// Arc `u -> v` is identified with the position of `v` in `u`'s sorted
/// neighbor list, so arc ids follow the graph's CSR layout.
#[derive(Debug, Clone)]
pub struct NbMatrix {
    graph: SparseGraph,
    offsets: Vec<usize>,
    tails: Vec<usize>,
    heads: Vec<usize>,
    reverse: Vec<usize>,
}

impl NbMatrix {
    pub fn dim(&self) -> usize {
        self.heads.len()
    }

    pub fn arc(&self, id: usize) -> (usize, usize) {
        (self.tails[id], self.heads[id])
    }

    /// `y = B x`: `y[u->v] = sum_{w ~ v, w != u} x[v->w]`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.graph.n();
        let mut out_sum = vec![0.0; n];
        for v in 0..n {
            out_sum[v] = x[self.offsets[v]..self.offsets[v + 1]].iter().sum();
        }
        for id in 0..self.dim() {
            y[id] = out_sum[self.heads[id]] - x[self.reverse[id]];
        }
    }

    pub fn row_sum(&self, id: usize) -> usize {
        self.graph.degree(self.heads[id]) - 1
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut out = DMatrix::zeros(m, m);
        for id in 0..m {
            let (u, v) = self.arc(id);
            for (k, &w) in self.graph.neighbors(v).iter().enumerate() {
                if w != u {
                    out[(id, self.offsets[v] + k)] = 1.0;
                }
            }
        }
        out
    }
}

pub fn nb_matrix(g: &SparseGraph) -> NbMatrix {
    let n = g.n();
    let mut offsets = vec![0usize; n + 1];
    for v in 0..n {
        offsets[v + 1] = offsets[v] + g.degree(v);
    }
    let mut tails = Vec::with_capacity(offsets[n]);
    let mut heads = Vec::with_capacity(offsets[n]);
    for u in 0..n {
        for &v in g.neighbors(u) {
            tails.push(u);
            heads.push(v);
        }
    }
    let reverse = (0..heads.len())
        .map(|id| {
            let (u, v) = (tails[id], heads[id]);
            offsets[v] + g.neighbors(v).binary_search(&u).unwrap()
        })
        .collect();
    NbMatrix {
        graph: g.clone(),
        offsets,
        tails,
        heads,
        reverse,
    }
}

/// `A^(ell)` by the three-term recurrence
/// `A^(l) = A A^(l-1) - (D - I) A^(l-2)` (with `A^(2) = A^2 - D`).
pub fn nb_power(g: &SparseGraph, ell: usize) -> SparseSymMatrix {
    let n = g.n();
    let a = g.adjacency();
    if ell == 0 {
        return SparseSymMatrix::identity(n);
    }
    if ell == 1 {
        return a;
    }
    let deg: Vec<f64> = g.degrees().iter().map(|&d| d as f64).collect();
    let mut prev2 = a.clone();
    let mut prev = rows_to_sym(n, a.mul_rows(&a)).add_scaled(1.0, &SparseSymMatrix::from_diagonal(&deg), -1.0);
    for _ in 3..=ell {
        let ap = rows_to_sym(n, a.mul_rows(&prev));
        let dm1: Vec<f64> = deg.iter().map(|d| d - 1.0).collect();
        let scaled = scale_rows(&prev2, &dm1);
        let next = ap.add_scaled(1.0, &scaled, -1.0);
        prev2 = prev;
        prev = next;
    }
    prev
}

/// Takes the upper triangle of a product known to be symmetric.
fn rows_to_sym(n: usize, rows: Vec<Vec<(usize, f64)>>) -> SparseSymMatrix {
    SparseSymMatrix::from_upper(
        n,
        rows.into_iter().enumerate().flat_map(|(i, row)| {
            row.into_iter()
                .filter(move |&(j, _)| j >= i)
                .map(move |(j, v)| (i, j, v))
        }),
    )
}

/// `diag(s) P` for symmetric `P` whose result is used only through its
/// upper triangle; valid here because `(D - I) A^(l-2)` is only ever
/// subtracted from a symmetric total.
fn scale_rows(p: &SparseSymMatrix, s: &[f64]) -> SparseSymMatrix {
    SparseSymMatrix::from_upper(
        p.n(),
        (0..p.n()).flat_map(|i| {
            let (c, v) = p.row(i);
            c.iter()
                .zip(v)
                .filter(move |(&j, _)| j >= i)
                .map(move |(&j, &x)| (i, j, s[i] * x))
                .collect::<Vec<_>>()
        }),
    )
}

/// Matrix-free `y = A^(ell) x` using the actual degrees of `g`.
pub fn nb_power_apply(g: &SparseGraph, ell: usize, x: &[f64]) -> Vec<f64> {
    let n = g.n();
    if ell == 0 {
        return x.to_vec();
    }
    let mut prev2 = x.to_vec();
    let mut prev = vec![0.0; n];
    g.adj_apply(x, &mut prev);
    if ell == 1 {
        return prev;
    }
    let mut next = vec![0.0; n];
    for step in 2..=ell {
        g.adj_apply(&prev, &mut next);
        for v in 0..n {
            let shift = if step == 2 { 0.0 } else { 1.0 };
            next[v] -= (g.degree(v) as f64 - shift) * prev2[v];
        }
        std::mem::swap(&mut prev2, &mut prev);
        std::mem::swap(&mut prev, &mut next);
    }
    prev
}

/// Largest `n` and `ell` the walk enumerator accepts.
pub const ORACLE_MAX_N: usize = 50;
pub const ORACLE_MAX_ELL: usize = 6;

/// Counts nonbacktracking walks of length `ell` between every vertex pair by
/// explicit depth-first enumeration.
pub fn nb_power_oracle(g: &SparseGraph, ell: usize) -> Result<SparseSymMatrix> {
    let n = g.n();
    if n > ORACLE_MAX_N || ell > ORACLE_MAX_ELL {
        return Err(Error::OracleTooLarge { n, ell });
    }
    let mut counts = vec![vec![0u64; n]; n];
    fn walk(g: &SparseGraph, start: usize, cur: usize, prev: Option<usize>, left: usize, counts: &mut [Vec<u64>]) {
        if left == 0 {
            counts[start][cur] += 1;
            return;
        }
        for &w in g.neighbors(cur) {
            if Some(w) != prev {
                walk(g, start, w, Some(cur), left - 1, counts);
            }
        }
    }
    for s in 0..n {
        walk(g, s, s, None, ell, &mut counts);
    }
    let entries: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| counts[i][j] != 0)
        .map(|(i, j)| (i, j, counts[i][j] as f64))
        .collect();
    SparseSymMatrix::from_triplets(n, entries)
}

/// `A^(ell) Hbar(t) A^(ell)` over the truncated graph, materialized.
pub fn m_matrix(tr: &TruncationResult, ell: usize, t: f64) -> SparseSymMatrix {
    let p = nb_power(&tr.graph_b, ell);
    bethe_hessian_truncated(tr, t).congruence(&p)
}

/// `A^(ell) H(t) A^(ell)` over an untruncated graph, materialized.
pub fn m_matrix_standard(g: &SparseGraph, ell: usize, t: f64) -> SparseSymMatrix {
    bethe_hessian(g, t).congruence(&nb_power(g, ell))
}

/// Row l1 bound `B^(2 ell + 3) max(1, t^2, |t|)` on the truncated product.
pub fn m_row_bound(b: usize, ell: usize, t: f64) -> f64 {
    (b as f64).powi(2 * ell as i32 + 3) * 1f64.max(t * t).max(t.abs())
}

/// Matrix-free `A^(ell) H A^(ell)` where `H = I - tA + t^2 (diag - I)`.
///
/// This is what the pipeline runs eigensolvers on: for the powers the
/// parameter search selects, `A^(ell)` fills in and the explicit product
/// is effectively dense.
#[derive(Debug, Clone)]
pub struct MOperator {
    graph: SparseGraph,
    diag: Vec<f64>,
    ell: usize,
    t: f64,
}

impl MOperator {
    /// Operator for the truncated matrix `Mbar`.
    pub fn truncated(tr: &TruncationResult, ell: usize, t: f64) -> Self {
        MOperator {
            graph: tr.graph_b.clone(),
            diag: tr.dbar.clone(),
            ell,
            t,
        }
    }

    /// Operator for the untruncated `M_{G, ell}(t)`.
    pub fn standard(g: &SparseGraph, ell: usize, t: f64) -> Self {
        MOperator {
            graph: g.clone(),
            diag: g.degrees().iter().map(|&d| d as f64).collect(),
            ell,
            t,
        }
    }

    pub fn graph(&self) -> &SparseGraph {
        &self.graph
    }

    fn apply_h(&self, x: &[f64]) -> Vec<f64> {
        let n = self.graph.n();
        let mut ax = vec![0.0; n];
        self.graph.adj_apply(x, &mut ax);
        let t = self.t;
        (0..n)
            .map(|v| x[v] - t * ax[v] + t * t * (self.diag[v] - 1.0) * x[v])
            .collect()
    }
}

impl SymOperator for MOperator {
    fn dim(&self) -> usize {
        self.graph.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let px = nb_power_apply(&self.graph, self.ell, x);
        let hpx = self.apply_h(&px);
        y.copy_from_slice(&nb_power_apply(&self.graph, self.ell, &hpx));
    }
}

/// `f^(n)`: coordinate `v` gets `f(label(v))`.
pub fn lift_vector(f: &[f64], labels: &Assignment) -> Vec<f64> {
    labels.labels().iter().map(|&c| f[c]).collect()
}
