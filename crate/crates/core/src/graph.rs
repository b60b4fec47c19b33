//! Simple undirected graphs in adjacency-list form, plus the plain edge-list
//! text format (`n m` header, then one `u v` pair per line, 0-indexed).

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::matrix::SparseSymMatrix;

/// A simple, undirected, unweighted graph on vertices `0..n`.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted lexicographically.
/// Neighbor lists are sorted, so membership queries are a binary search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    nbrs: Vec<usize>,
}

impl SparseGraph {
    pub fn empty(n: usize) -> Self {
        SparseGraph {
            n,
            edges: Vec::new(),
            offsets: vec![0; n + 1],
            nbrs: Vec::new(),
        }
    }

    /// Builds a graph from unordered pairs. Self-loops, out-of-range
    /// endpoints and repeated pairs are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut list = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({u}, {v}) out of range for n = {n}"
                )));
            }
            if u == v {
                return Err(Error::InvalidInput(format!("self-loop at vertex {u}")));
            }
            list.push((u.min(v), u.max(v)));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self::from_sorted_unique(n, list))
    }

    /// Caller guarantees `edges` is sorted, duplicate free, `u < v < n`.
    pub(crate) fn from_sorted_unique(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut deg = vec![0usize; n];
        for &(u, v) in &edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + deg[v];
        }
        let mut fill = offsets.clone();
        let mut nbrs = vec![0usize; offsets[n]];
        for &(u, v) in &edges {
            nbrs[fill[u]] = v;
            fill[u] += 1;
            nbrs[fill[v]] = u;
            fill[v] += 1;
        }
        for v in 0..n {
            nbrs[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        SparseGraph {
            n,
            edges,
            offsets,
            nbrs,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.nbrs[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|v| self.degree(v)).collect()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && v < self.n && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// `y = A x`.
    pub fn adj_apply(&self, x: &[f64], y: &mut [f64]) {
        for (v, yv) in y.iter_mut().enumerate() {
            *yv = self.neighbors(v).iter().map(|&w| x[w]).sum();
        }
    }

    pub fn adjacency(&self) -> SparseSymMatrix {
        SparseSymMatrix::from_upper(
            self.n,
            self.edges.iter().map(|&(u, v)| (u, v, 1.0)),
        )
    }

    /// Graph on the same vertex set keeping only edges for which `keep` holds.
    pub fn filter_edges<F: Fn(usize, usize) -> bool>(&self, keep: F) -> SparseGraph {
        let edges = self
            .edges
            .iter()
            .copied()
            .filter(|&(u, v)| keep(u, v))
            .collect();
        Self::from_sorted_unique(self.n, edges)
    }

    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.n, self.edges.len())?;
        for &(u, v) in &self.edges {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| match l {
                Ok(s) => {
                    let t = s.trim();
                    !t.is_empty() && !t.starts_with('#')
                }
                Err(_) => true,
            });
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header = header?;
        let (n, m) = parse_pair(&header, hline)?;
        let mut edges = Vec::with_capacity(m);
        for (lno, line) in lines {
            let line = line?;
            edges.push(parse_pair(&line, lno)?);
        }
        if edges.len() != m {
            return Err(Error::Parse {
                line: hline,
                msg: format!("header declares {m} edges, found {}", edges.len()),
            });
        }
        SparseGraph::from_edges(n, edges).map_err(|e| Error::Parse {
            line: hline,
            msg: e.to_string(),
        })
    }
}

fn parse_pair(line: &str, lno: usize) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace();
    let mut next = || -> Result<usize> {
        it.next()
            .ok_or_else(|| Error::Parse {
                line: lno,
                msg: "expected two integers".into(),
            })?
            .parse()
            .map_err(|e| Error::Parse {
                line: lno,
                msg: format!("{e}"),
            })
    };
    let a = next()?;
    let b = next()?;
    if it.next().is_some() {
        return Err(Error::Parse {
            line: lno,
            msg: "trailing tokens".into(),
        });
    }
    Ok((a, b))
}
