//! Budgeted edge corruptions: uniform flips, a planted near-clique, and a
//! monotone adversary that only strengthens the planted partition.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::model::Assignment;
use crate::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EditKind {
    Insert,
    Delete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edit {
    pub u: usize,
    pub v: usize,
    pub kind: EditKind,
}

impl Edit {
    fn new(u: usize, v: usize, kind: EditKind) -> Self {
        Edit {
            u: u.min(v),
            v: u.max(v),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorruptionReport {
    pub edits: Vec<Edit>,
}

impl CorruptionReport {
    pub fn budget_used(&self) -> usize {
        self.edits.len()
    }

    /// Sorted, deduplicated endpoints of all edits.
    pub fn touched_vertices(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.edits.iter().flat_map(|e| [e.u, e.v]).collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// The report that undoes this one.
    pub fn inverse(&self) -> CorruptionReport {
        let edits = self
            .edits
            .iter()
            .rev()
            .map(|e| Edit {
                kind: match e.kind {
                    EditKind::Insert => EditKind::Delete,
                    EditKind::Delete => EditKind::Insert,
                },
                ..*e
            })
            .collect();
        CorruptionReport { edits }
    }

    /// Applies every edit, failing if an insertion hits an existing edge or a
    /// deletion a missing one.
    pub fn apply(&self, g: &SparseGraph) -> Result<SparseGraph> {
        let mut edges: HashSet<(usize, usize)> = g.edges().iter().copied().collect();
        for e in &self.edits {
            let ok = match e.kind {
                EditKind::Insert => e.u != e.v && e.v < g.n() && edges.insert((e.u, e.v)),
                EditKind::Delete => edges.remove(&(e.u, e.v)),
            };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "edit {:?} ({}, {}) does not apply",
                    e.kind, e.u, e.v
                )));
            }
        }
        let mut list: Vec<_> = edges.into_iter().collect();
        list.sort_unstable();
        Ok(SparseGraph::from_sorted_unique(g.n(), list))
    }

    /// One `+ u v` or `- u v` line per edit.
    pub fn to_log(&self) -> String {
        let mut s = String::new();
        for e in &self.edits {
            let c = if e.kind == EditKind::Insert { '+' } else { '-' };
            let _ = writeln!(s, "{c} {} {}", e.u, e.v);
        }
        s
    }

    pub fn parse_log(text: &str) -> Result<Self> {
        let mut edits = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| Error::Parse {
                line: i + 1,
                msg: msg.into(),
            };
            let mut it = line.split_whitespace();
            let kind = match it.next() {
                Some("+") => EditKind::Insert,
                Some("-") => EditKind::Delete,
                _ => return Err(err("expected '+' or '-'")),
            };
            let mut num = || -> Result<usize> {
                it.next()
                    .ok_or_else(|| err("expected two vertices"))?
                    .parse()
                    .map_err(|_| err("bad vertex index"))
            };
            let (u, v) = (num()?, num()?);
            if u == v {
                return Err(err("self-loop"));
            }
            edits.push(Edit::new(u, v, kind));
        }
        let report = CorruptionReport { edits };
        let distinct: HashSet<(usize, usize)> = report.edits.iter().map(|e| (e.u, e.v)).collect();
        if distinct.len() != report.edits.len() {
            return Err(Error::Parse {
                line: 0,
                msg: "a pair is edited twice".into(),
            });
        }
        Ok(report)
    }
}

fn random_pair<R: Rng>(rng: &mut R, n: usize) -> (usize, usize) {
    loop {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            return (u.min(v), u.max(v));
        }
    }
}

/// Flips `budget` distinct uniformly random vertex pairs.
pub fn corrupt_random(g: &SparseGraph, budget: usize, seed: u64) -> Result<(SparseGraph, CorruptionReport)> {
    let n = g.n();
    if budget > n * n / 4 {
        return Err(Error::InvalidInput(format!("budget {budget} exceeds n^2/4 for n = {n}")));
    }
    let mut rng = seeded_rng(seed, 1);
    let mut seen = HashSet::with_capacity(budget);
    let mut edits = Vec::with_capacity(budget);
    while edits.len() < budget {
        let (u, v) = random_pair(&mut rng, n);
        if seen.insert((u, v)) {
            let kind = if g.has_edge(u, v) { EditKind::Delete } else { EditKind::Insert };
            edits.push(Edit::new(u, v, kind));
        }
    }
    let report = CorruptionReport { edits };
    Ok((report.apply(g)?, report))
}

/// Plants a near-clique on about `ceil(sqrt(2 budget))` random vertices.
///
/// Vertices join in random order, each connected to every earlier member,
/// until exactly `budget` new edges exist; pairs that are already edges are
/// skipped, so the clique can spill onto extra vertices.
pub fn corrupt_hub(g: &SparseGraph, budget: usize, seed: u64) -> Result<(SparseGraph, CorruptionReport)> {
    if budget < 3 {
        return Err(Error::BudgetTooSmall { budget, min: 3 });
    }
    let n = g.n();
    let absent = n * n.saturating_sub(1) / 2 - g.num_edges();
    if budget > absent {
        return Err(Error::ExhaustedMoves {
            available: absent,
            budget,
        });
    }
    let mut rng = seeded_rng(seed, 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edits = Vec::with_capacity(budget);
    'outer: for (idx, &v) in order.iter().enumerate() {
        for &u in &order[..idx] {
            if edits.len() == budget {
                break 'outer;
            }
            if !g.has_edge(u, v) {
                edits.push(Edit::new(u, v, EditKind::Insert));
            }
        }
    }
    let report = CorruptionReport { edits };
    Ok((report.apply(g)?, report))
}

/// Random intra-community insertions and inter-community deletions,
/// `budget` in total.
pub fn corrupt_monotone(
    g: &SparseGraph,
    labels: &Assignment,
    budget: usize,
    seed: u64,
) -> Result<(SparseGraph, CorruptionReport)> {
    let n = g.n();
    if labels.n() != n {
        return Err(Error::SizeMismatch {
            left: n,
            right: labels.n(),
        });
    }
    let lab = labels.labels();
    let cross: Vec<(usize, usize)> = g.edges().iter().copied().filter(|&(u, v)| lab[u] != lab[v]).collect();
    let intra_edges = g.num_edges() - cross.len();
    let intra_pairs: usize = labels.counts().iter().map(|&c| c * c.saturating_sub(1) / 2).sum();
    let insertable = intra_pairs - intra_edges;
    let available = insertable + cross.len();
    if available < budget {
        return Err(Error::ExhaustedMoves { available, budget });
    }
    let mut rng = seeded_rng(seed, 1);
    let mut seen = HashSet::with_capacity(budget);
    let mut edits = Vec::with_capacity(budget);
    let (mut ins_left, mut del_left) = (insertable, cross.len());
    while edits.len() < budget {
        let pick_delete = rng.random_range(0..ins_left + del_left) < del_left;
        if pick_delete {
            let (u, v) = cross[rng.random_range(0..cross.len())];
            if seen.insert((u, v)) {
                edits.push(Edit::new(u, v, EditKind::Delete));
                del_left -= 1;
            }
        } else {
            let (u, v) = random_pair(&mut rng, n);
            if lab[u] == lab[v] && !g.has_edge(u, v) && seen.insert((u, v)) {
                edits.push(Edit::new(u, v, EditKind::Insert));
                ins_left -= 1;
            }
        }
    }
    let report = CorruptionReport { edits };
    Ok((report.apply(g)?, report))
}

/// Size of the symmetric difference of the two edge sets.
pub fn corruption_distance(g1: &SparseGraph, g2: &SparseGraph) -> Result<usize> {
    if g1.n() != g2.n() {
        return Err(Error::SizeMismatch {
            left: g1.n(),
            right: g2.n(),
        });
    }
    let (a, b) = (g1.edges(), g2.edges());
    let (mut i, mut j, mut diff) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                diff += 1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                diff += 1;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    Ok(diff + (a.len() - i) + (b.len() - j))
}
