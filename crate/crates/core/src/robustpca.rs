//! Iterative trimming of localized negative directions followed by a
//! delocalizing post-processing of the surviving spectral projector.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{Masked, SymOperator};
use crate::model::AlgoParams;
use crate::seeded_rng;
use crate::spectra::{dense_eigh, projector_below, Projector};

/// One zeroing step of the trimming loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrimStep {
    pub phi: usize,
    pub removed: usize,
    /// Whether `removed` lies in a known corruption support, when one is given.
    pub in_q: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct TrimState {
    /// `removed[i]` iff row and column `i` have been zeroed.
    pub removed: Vec<bool>,
    pub order: Vec<usize>,
    /// `Phi` before each step, plus the final value.
    pub phi_history: Vec<usize>,
    pub steps: Vec<TrimStep>,
    /// `Pi_{<= -eta}` of the final matrix.
    pub projector: Projector,
}

impl TrimState {
    pub fn deletions(&self) -> usize {
        self.order.len()
    }

    pub fn final_phi(&self) -> usize {
        *self.phi_history.last().unwrap_or(&0)
    }

    /// `step,phi,removed,in_q` with a versioned header comment.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("# trim-trace v1\nstep,phi,removed,in_q\n");
        for (i, st) in self.steps.iter().enumerate() {
            let q = match st.in_q {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            let _ = writeln!(s, "{i},{},{},{q}", st.phi, st.removed);
        }
        s
    }
}

/// Zeroes rows and columns of `mtilde`, sampled in proportion to the
/// diagonal of the negative-eigenspace projector, until at most
/// `(2K/eta) r` eigenvalues lie below `-eta`.
///
/// Already-removed indices are excluded from sampling. `support`, when
/// given, only annotates the trace.
pub fn trim(mtilde: &dyn SymOperator, params: &AlgoParams, seed: u64, support: Option<&[bool]>) -> Result<TrimState> {
    let n = mtilde.dim();
    let guard = params.phi_guard();
    let mut rng = seeded_rng(seed, 2);
    let mut removed = vec![false; n];
    let mut order = Vec::new();
    let mut phi_history = Vec::new();
    let mut steps = Vec::new();
    loop {
        let op = Masked::new(mtilde, &removed);
        let proj = projector_below(&op, -params.eta, seed.wrapping_add(order.len() as u64))?;
        let phi = proj.rank();
        if let Some(&prev) = phi_history.last() {
            if phi > prev {
                return Err(Error::InvariantViolation(format!(
                    "negative count rose from {prev} to {phi} after zeroing a row"
                )));
            }
        }
        phi_history.push(phi);
        if phi as f64 <= guard {
            return Ok(TrimState {
                removed,
                order,
                phi_history,
                steps,
                projector: proj,
            });
        }
        if order.len() >= n {
            return Err(Error::IterationCapExceeded { cap: n });
        }
        let diag = proj.diagonal();
        let weights: Vec<f64> = diag.iter().zip(&removed).map(|(&d, &r)| if r { 0.0 } else { d.max(0.0) }).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvariantViolation("projector diagonal vanished off the removed set".into()));
        }
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = weights.iter().rposition(|&w| w > 0.0).unwrap();
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if u < acc && w > 0.0 {
                pick = i;
                break;
            }
        }
        removed[pick] = true;
        order.push(pick);
        steps.push(TrimStep {
            phi,
            removed: pick,
            in_q: support.map(|q| q[pick]),
        });
    }
}

/// The recovered subspace `U` with its delocalization witness.
#[derive(Debug, Clone)]
pub struct RecoveredSubspace {
    /// Orthonormal `n x dim` basis.
    pub basis: DMatrix<f64>,
    /// Indices with `Pi_ii <= tau / n`.
    pub retained: Vec<usize>,
    /// `max_i (Pi_U)_ii`.
    pub diag_bound_witness: f64,
    /// Trace of the projector that was post-processed.
    pub source_trace: f64,
}

impl RecoveredSubspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn projector(&self) -> Projector {
        Projector::new(self.basis.clone())
    }
}

pub fn postprocess(state: &TrimState, params: &AlgoParams) -> Result<RecoveredSubspace> {
    postprocess_projector(&state.projector, params)
}

/// Restricts `proj` to `S = {i : Pi_ii <= tau/n}` and keeps the eigenvectors
/// of `Pi_{S,S}` with eigenvalue at least `eta/K`.
pub fn postprocess_projector(proj: &Projector, params: &AlgoParams) -> Result<RecoveredSubspace> {
    let n = proj.n();
    if proj.rank() == 0 || proj.trace() <= 0.0 {
        return Err(Error::EmptySubspace);
    }
    let cut = params.tau / n as f64;
    let diag = proj.diagonal();
    let retained: Vec<usize> = (0..n).filter(|&i| diag[i] <= cut).collect();
    let mut vs = proj.basis.clone();
    for i in (0..n).filter(|&i| diag[i] > cut) {
        vs.row_mut(i).fill(0.0);
    }
    // nonzero spectrum of V_S V_S^T equals that of the Gram matrix V_S^T V_S
    let gram = vs.tr_mul(&vs);
    let (mu, w) = dense_eigh(&gram);
    let floor = params.eta / params.kcap;
    let kept: Vec<usize> = (0..mu.len()).filter(|&j| mu[j] >= floor && mu[j] > 0.0).collect();
    if kept.is_empty() {
        return Err(Error::EmptySubspace);
    }
    let mut basis = DMatrix::zeros(n, kept.len());
    for (c, &j) in kept.iter().enumerate() {
        let col = &vs * w.column(j) / mu[j].sqrt();
        basis.set_column(c, &col);
    }
    let diag_bound_witness = basis.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max);
    Ok(RecoveredSubspace {
        basis,
        retained,
        diag_bound_witness,
        source_trace: proj.trace(),
    })
}

/// `trim` followed by `postprocess`.
pub fn recover_subspace(
    mtilde: &dyn SymOperator,
    params: &AlgoParams,
    seed: u64,
) -> Result<(TrimState, RecoveredSubspace)> {
    let state = trim(mtilde, params, seed, None)?;
    let sub = postprocess(&state, params)?;
    Ok((state, sub))
}

/// Bound on `max diag(Pi_U)`: `K tau / (eta n)`.
pub fn diag_bound(params: &AlgoParams, n: usize) -> f64 {
    params.kcap * params.tau / (params.eta * n as f64)
}

/// Bound on `dim U`: `2 K^2 r / eta^2`.
pub fn dim_bound(params: &AlgoParams) -> f64 {
    2.0 * params.kcap * params.kcap * params.r as f64 / (params.eta * params.eta)
}

/// Bound on the number of deletions: `(4K/eta) gamma n + 10 sqrt(n)`.
pub fn deletion_bound(params: &AlgoParams, gamma: f64, n: usize) -> f64 {
    4.0 * params.kcap / params.eta * gamma * n as f64 + 10.0 * (n as f64).sqrt()
}
