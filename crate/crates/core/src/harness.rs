//! Experiment plumbing: configs, the end-to-end pipeline, spectral checks,
//! calibration and record emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{corrupt_hub, corrupt_monotone, corrupt_random, CorruptionReport};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::graphmat::{bethe_hessian, lift_vector, truncate, MOperator};
use crate::matrix::SymOperator;
use crate::metrics::{majority_set, mutual_information, partition_advantage, score, ScoreRecord};
use crate::model::{
    analyze_transition, ks_signal, sample_sbm, AlgoParams, Assignment, ModelParams, ModelSpec, ParamOverrides,
    TransitionSpec, DEFAULT_MULT_TOL,
};
use crate::robustpca::{diag_bound, dim_bound, postprocess, trim, RecoveredSubspace, TrimState};
use crate::rounding::{check_weights, round, sample_assignment, Rounding};
use crate::seeded_rng;
use crate::spectra::{count_below, ihara_bass_residual};

pub const RECORD_SCHEMA: &str = "sbm-robust run-records v1";
pub const SPECTRA_SCHEMA: &str = "sbm-robust spectra v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversaryKind {
    #[default]
    None,
    Random,
    Hub,
    Monotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    /// Budget as a fraction of `n`; the edit count is `floor(delta n)`.
    #[serde(default)]
    pub delta: f64,
}

impl AdversaryConfig {
    pub fn budget(&self, n: usize) -> usize {
        (self.delta * n as f64).floor() as usize
    }
}

/// Inline model table or a path to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Path { path: PathBuf },
    Inline(ModelSpec),
}

/// Explicit list, or `"A..B"` (half-open).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedList {
    List(Vec<u64>),
    Range(String),
}

impl SeedList {
    pub fn expand(&self) -> Result<Vec<u64>> {
        match self {
            SeedList::List(v) => Ok(v.clone()),
            SeedList::Range(s) => parse_seed_range(s),
        }
    }
}

pub fn parse_seed_range(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidInput(format!("seed range `{s}` is not of the form A..B"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if b <= a {
        return Err(bad());
    }
    Ok((a..b).collect())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub records: Option<PathBuf>,
    pub trace_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub n: usize,
    pub seeds: SeedList,
    #[serde(default)]
    pub adversary: AdversaryConfig,
    #[serde(default)]
    pub overrides: ParamOverrides,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub allow_below_ks: bool,
}

impl ExperimentConfig {
    pub fn new(model: &ModelParams, n: usize, seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            model: ModelSource::Inline(model.to_spec()),
            n,
            seeds: SeedList::List(seeds),
            adversary: AdversaryConfig::default(),
            overrides: ParamOverrides::default(),
            outputs: Outputs::default(),
            allow_below_ks: false,
        }
    }

    pub fn with_adversary(mut self, kind: AdversaryKind, delta: f64) -> Self {
        self.adversary = AdversaryConfig { kind, delta };
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0),
            msg: e.message().to_string(),
        })
    }

    /// Relative model paths resolve against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        if let ModelSource::Path { path: p } = &mut cfg.model {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        match &self.model {
            ModelSource::Inline(spec) => spec.validate(),
            ModelSource::Path { path } => ModelSpec::load(path),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        if self.seeds.expand()?.is_empty() {
            return Err(Error::InvalidInput("seed list is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.adversary.delta) {
            return Err(Error::InvalidInput(format!("adversary delta {} outside [0, 1]", self.adversary.delta)));
        }
        Ok(())
    }
}

/// A validated config with every derived quantity resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: ModelParams,
    pub spec: TransitionSpec,
    /// `None` below the threshold, where no parameters exist.
    pub params: Option<AlgoParams>,
    pub seeds: Vec<u64>,
    pub config_hash: String,
}

#[derive(Serialize)]
struct HashedConfig<'a> {
    model: ModelSpec,
    n: usize,
    seeds: &'a [u64],
    adversary: &'a AdversaryConfig,
    overrides: &'a ParamOverrides,
    allow_below_ks: bool,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = config.model_params()?;
        let spec = analyze_transition(&model, DEFAULT_MULT_TOL)?;
        let eps = ks_signal(&spec, model.d());
        if eps <= 0.0 && !config.allow_below_ks {
            return Err(Error::BelowKs { eps });
        }
        let params = match crate::model::select_parameters(&spec, model.pi_min(), model.d(), &config.overrides) {
            Ok(p) => Some(p),
            Err(Error::NoFeasibleParams) if eps <= 0.0 => None,
            Err(e) => return Err(e),
        };
        let seeds = config.seeds.expand()?;
        let hashed = HashedConfig {
            model: model.to_spec(),
            n: config.n,
            seeds: &seeds,
            adversary: &config.adversary,
            overrides: &config.overrides,
            allow_below_ks: config.allow_below_ks,
        };
        let config_hash = sha256_hex(serde_json::to_string(&hashed).expect("config serializes").as_bytes());
        Ok(Experiment {
            config,
            model,
            spec,
            params,
            seeds,
            config_hash,
        })
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn params(&self) -> Result<&AlgoParams> {
        self.params.as_ref().ok_or(Error::NoFeasibleParams)
    }

    /// Unit-norm lift of the first nontrivial eigenvector.
    pub fn unit_lift(&self, truth: &Assignment) -> Vec<f64> {
        let mut y = lift_vector(&self.spec.signal_vector(0), truth);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            y.iter_mut().for_each(|v| *v /= norm);
        }
        y
    }

    pub fn sample(&self, seed: u64) -> Result<(SparseGraph, Assignment)> {
        sample_sbm(&self.model, self.n(), seed)
    }

    pub fn corrupt(&self, g: &SparseGraph, truth: &Assignment, seed: u64) -> Result<(SparseGraph, CorruptionReport)> {
        let budget = self.config.adversary.budget(g.n());
        match self.config.adversary.kind {
            AdversaryKind::None => Ok((g.clone(), CorruptionReport::default())),
            _ if budget == 0 => Ok((g.clone(), CorruptionReport::default())),
            AdversaryKind::Random => corrupt_random(g, budget, seed),
            AdversaryKind::Hub => corrupt_hub(g, budget, seed),
            AdversaryKind::Monotone => corrupt_monotone(g, truth, budget, seed),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything one pipeline run produced, for callers that need more than
/// the summary record.
#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub truth: Assignment,
    pub graph: SparseGraph,
    pub corrupted: SparseGraph,
    pub corruption: CorruptionReport,
    pub trim: TrimState,
    pub subspace: RecoveredSubspace,
    pub rounding: Rounding,
    pub score: ScoreRecord,
    pub witness: f64,
}

/// The three algorithm phases on an observed graph.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub trim: TrimState,
    pub subspace: RecoveredSubspace,
    pub rounding: Rounding,
}

/// Truncate, build the operator, trim, post-process and round, checking
/// the module invariants along the way. `support` only annotates the trace.
pub fn recover_graph(exp: &Experiment, g: &SparseGraph, seed: u64, support: Option<&[bool]>) -> Result<Recovery> {
    let params = exp.params()?;
    let tr = truncate(g, params.b);
    let op = MOperator::truncated(&tr, params.ell, params.t);
    let state = trim(&op, params, seed, support)?;
    let subspace = postprocess(&state, params)?;
    check_subspace(&state, &subspace, params)?;
    let rounding = round(&subspace, &exp.spec, seed)?;
    check_weights(&rounding.weights)?;
    Ok(Recovery {
        trim: state,
        subspace,
        rounding,
    })
}

/// Sample, corrupt, recover and score one seed.
pub fn pipeline_seed(exp: &Experiment, seed: u64) -> Result<SeedArtifacts> {
    let (graph, truth) = exp.sample(seed)?;
    let (corrupted, corruption) = exp.corrupt(&graph, &truth, seed)?;
    let mut support = vec![false; graph.n()];
    corruption.touched_vertices().into_iter().for_each(|v| support[v] = true);
    let rec = recover_graph(exp, &corrupted, seed, Some(&support))?;
    let score = score(Some(&rec.rounding.weights.w), &rec.rounding.assignment, &truth, &exp.spec)?;
    let witness = rec.subspace.projector().quad_form(&exp.unit_lift(&truth));
    Ok(SeedArtifacts {
        truth,
        graph,
        corrupted,
        corruption,
        trim: rec.trim,
        subspace: rec.subspace,
        rounding: rec.rounding,
        score,
        witness,
    })
}

fn check_subspace(state: &TrimState, sub: &RecoveredSubspace, params: &AlgoParams) -> Result<()> {
    if state.final_phi() as f64 > params.phi_guard() {
        return Err(Error::InvariantViolation(format!("trimming stopped at Phi = {}", state.final_phi())));
    }
    if sub.diag_bound_witness > diag_bound(params, sub.n()) * (1.0 + 1e-9) {
        return Err(Error::InvariantViolation(format!(
            "projector diagonal {:e} exceeds its bound",
            sub.diag_bound_witness
        )));
    }
    if sub.dim() as f64 > dim_bound(params) {
        return Err(Error::InvariantViolation(format!("dim U = {} exceeds its bound", sub.dim())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedStatus {
    Ok,
    /// Nothing survived post-processing; the labelling falls back to `pi`.
    EmptySubspace,
    InvariantViolation,
    Error,
}

/// One line of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub status: SeedStatus,
    pub message: String,
    pub rho: f64,
    pub raw_inner: f64,
    pub frob_w: f64,
    pub frob_x: f64,
    pub advantage: f64,
    pub mi_per_vertex: f64,
    pub budget_used: usize,
    pub phi_initial: usize,
    pub phi_final: usize,
    pub deletions: usize,
    pub deletions_in_q: usize,
    pub dim_u: usize,
    pub max_diag: f64,
    pub c_over_sqrt_n: f64,
    pub hull_residual: f64,
    pub witness: f64,
    pub wall_ms: u64,
}

impl SeedRecord {
    fn blank(seed: u64, status: SeedStatus, message: String) -> Self {
        SeedRecord {
            seed,
            status,
            message,
            rho: f64::NAN,
            raw_inner: f64::NAN,
            frob_w: f64::NAN,
            frob_x: f64::NAN,
            advantage: f64::NAN,
            mi_per_vertex: f64::NAN,
            budget_used: 0,
            phi_initial: 0,
            phi_final: 0,
            deletions: 0,
            deletions_in_q: 0,
            dim_u: 0,
            max_diag: f64::NAN,
            c_over_sqrt_n: f64::NAN,
            hull_residual: f64::NAN,
            witness: f64::NAN,
            wall_ms: 0,
        }
    }

    fn from_artifacts(seed: u64, a: &SeedArtifacts) -> Self {
        let n = a.truth.n() as f64;
        SeedRecord {
            seed,
            status: SeedStatus::Ok,
            message: String::new(),
            rho: a.score.rho,
            raw_inner: a.score.raw_inner,
            frob_w: a.score.frob_w,
            frob_x: a.score.frob_x,
            advantage: a.score.advantage,
            mi_per_vertex: a.score.mi_per_vertex,
            budget_used: a.corruption.budget_used(),
            phi_initial: a.trim.phi_history.first().copied().unwrap_or(0),
            phi_final: a.trim.final_phi(),
            deletions: a.trim.deletions(),
            deletions_in_q: a.trim.steps.iter().filter(|s| s.in_q == Some(true)).count(),
            dim_u: a.subspace.dim(),
            max_diag: a.subspace.diag_bound_witness,
            c_over_sqrt_n: a.rounding.weights.c / n.sqrt(),
            hull_residual: a.rounding.weights.hull_residual,
            witness: a.witness,
            wall_ms: 0,
        }
    }
}

/// The `pi`-prior labelling used when the subspace comes back empty.
fn prior_fallback(exp: &Experiment, seed: u64) -> Result<SeedRecord> {
    let (_, truth) = exp.sample(seed)?;
    let k = exp.spec.k();
    let w = DMatrix::from_fn(truth.n(), k, |_, j| exp.spec.pi[j]);
    let xhat = sample_assignment(&w, seed)?;
    let mut rec = SeedRecord::blank(seed, SeedStatus::EmptySubspace, Error::EmptySubspace.to_string());
    rec.rho = 0.0;
    rec.advantage = partition_advantage(&majority_set(&xhat), &truth)?;
    rec.mi_per_vertex = mutual_information(&xhat, &truth) / truth.n() as f64;
    Ok(rec)
}

pub fn run_seed(exp: &Experiment, seed: u64) -> SeedRecord {
    let start = Instant::now();
    let mut rec = match pipeline_seed(exp, seed) {
        Ok(a) => SeedRecord::from_artifacts(seed, &a),
        Err(Error::EmptySubspace) => prior_fallback(exp, seed)
            .unwrap_or_else(|e| SeedRecord::blank(seed, SeedStatus::Error, e.to_string())),
        Err(e @ Error::InvariantViolation(_)) => SeedRecord::blank(seed, SeedStatus::InvariantViolation, e.to_string()),
        Err(e) => SeedRecord::blank(seed, SeedStatus::Error, e.to_string()),
    };
    rec.wall_ms = start.elapsed().as_millis() as u64;
    rec
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: String,
    pub config_hash: String,
    pub seeds: Vec<SeedRecord>,
}

impl RunRecord {
    /// Hash of the records with wall times zeroed.
    pub fn digest(&self) -> String {
        let mut stripped = self.clone();
        stripped.seeds.iter_mut().for_each(|s| s.wall_ms = 0);
        sha256_hex(serde_json::to_string(&stripped).expect("records serialize").as_bytes())
    }

    pub fn mean_rho(&self) -> f64 {
        mean(self.seeds.iter().map(|s| s.rho))
    }

    pub fn has_invariant_violation(&self) -> bool {
        self.seeds.iter().any(|s| s.status == SeedStatus::InvariantViolation)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# {RECORD_SCHEMA} config={}\n", self.config_hash);
        out.push_str(
            "seed,status,rho,raw_inner,frob_w,frob_x,advantage,mi_per_vertex,budget_used,phi_initial,phi_final,\
             deletions,deletions_in_q,dim_u,max_diag,c_over_sqrt_n,hull_residual,witness,wall_ms,message\n",
        );
        for s in &self.seeds {
            let status = serde_json::to_value(s.status).expect("status serializes");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},\"{}\"",
                s.seed,
                status.as_str().unwrap_or_default(),
                s.rho,
                s.raw_inner,
                s.frob_w,
                s.frob_x,
                s.advantage,
                s.mi_per_vertex,
                s.budget_used,
                s.phi_initial,
                s.phi_final,
                s.deletions,
                s.deletions_in_q,
                s.dim_u,
                s.max_diag,
                s.c_over_sqrt_n,
                s.hull_residual,
                s.witness,
                s.wall_ms,
                s.message.replace('"', "'"),
            );
        }
        out
    }
}

/// Mean of the finite entries; NaN when there are none.
pub fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = values.filter(|v| v.is_finite()).fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

/// Runs every seed of the experiment; output order follows the seed list.
pub fn run_pipeline(exp: &Experiment) -> RunRecord {
    let seeds: Vec<SeedRecord> = exp.seeds.par_iter().map(|&s| run_seed(exp, s)).collect();
    RunRecord {
        schema: RECORD_SCHEMA.to_string(),
        config_hash: exp.config_hash.clone(),
        seeds,
    }
}

/// Bethe-Hessian parameter halfway (in `1/t`) between the bulk edge
/// `sqrt(d)` and the outlier `lambda2 d`, signed like `lambda2`.
pub fn h_star(lambda2: f64, d: f64) -> f64 {
    2.0 / (d.sqrt() + lambda2.abs() * d) * lambda2.signum()
}

/// `t = 1/((1 + eps) sqrt(d))` over a fixed grid of `eps`.
pub fn below_ks_grid(d: f64) -> Vec<f64> {
    [0.1, 0.2, 0.3, 0.5, 0.8].iter().map(|e| 1.0 / ((1.0 + e) * d.sqrt())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectraRow {
    pub seed: u64,
    pub t_star: f64,
    pub h_count: usize,
    pub m_std_count: usize,
    pub mbar_count: usize,
    pub quad_over_n: f64,
    pub quad_bound: f64,
    pub h_ok: bool,
    pub mbar_ok: bool,
    pub quad_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BelowKsRow {
    pub seed: u64,
    pub counts: Vec<usize>,
    /// No eigenvalue beyond the Perron one goes negative on the grid.
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectraReport {
    pub schema: String,
    pub config_hash: String,
    pub rows: Vec<SpectraRow>,
    pub below_ks: Vec<BelowKsRow>,
    pub h_pass_rate: f64,
    pub mbar_pass_rate: f64,
    pub quad_pass_rate: f64,
    pub below_ks_pass_rate: f64,
}

impl SpectraReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# {SPECTRA_SCHEMA} config={}\n", self.config_hash);
        if !self.rows.is_empty() {
            out.push_str("seed,t_star,h_count,m_std_count,mbar_count,quad_over_n,quad_bound,h_ok,mbar_ok,quad_ok\n");
            for r in &self.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.seed,
                    r.t_star,
                    r.h_count,
                    r.m_std_count,
                    r.mbar_count,
                    r.quad_over_n,
                    r.quad_bound,
                    r.h_ok,
                    r.mbar_ok,
                    r.quad_ok
                );
            }
        }
        if !self.below_ks.is_empty() {
            out.push_str("seed,grid_counts,ok\n");
            for r in &self.below_ks {
                let counts: Vec<String> = r.counts.iter().map(|c| c.to_string()).collect();
                let _ = writeln!(out, "{},{},{}", r.seed, counts.join(";"), r.ok);
            }
        }
        out
    }
}

pub fn spectra_row(exp: &Experiment, seed: u64) -> Result<SpectraRow> {
    let params = exp.params()?;
    let k = exp.spec.k();
    let r = params.r;
    let (g, truth) = exp.sample(seed)?;
    let (g, _) = exp.corrupt(&g, &truth, seed)?;
    let t_star = h_star(exp.spec.lambda2, exp.model.d());
    let h_count = count_below(&bethe_hessian(&g, t_star), 0.0)?;
    let m_std_count = count_below(&MOperator::standard(&g, params.ell, params.t), -params.eta)?;
    let mbar = MOperator::truncated(&truncate(&g, params.b), params.ell, params.t);
    let mbar_count = count_below(&mbar, -params.eta)?;
    let x = lift_vector(&exp.spec.signal_vector(0), &truth);
    let n = g.n() as f64;
    let quad_over_n = mbar.quad_form(&x) / n;
    Ok(SpectraRow {
        seed,
        t_star,
        h_count,
        m_std_count,
        mbar_count,
        quad_over_n,
        quad_bound: -params.upsilon,
        h_ok: (k - 1..=k).contains(&h_count),
        mbar_ok: (r..=r + 1).contains(&mbar_count),
        quad_ok: quad_over_n <= -params.upsilon,
    })
}

pub fn below_ks_row(exp: &Experiment, seed: u64) -> Result<BelowKsRow> {
    let (g, _) = exp.sample(seed)?;
    let counts = below_ks_grid(exp.model.d())
        .into_iter()
        .map(|t| count_below(&bethe_hessian(&g, t), 0.0))
        .collect::<Result<Vec<_>>>()?;
    let ok = counts.iter().all(|&c| c <= 1);
    Ok(BelowKsRow { seed, counts, ok })
}

fn rate<T>(rows: &[T], pass: impl Fn(&T) -> bool) -> f64 {
    if rows.is_empty() {
        f64::NAN
    } else {
        rows.iter().filter(|r| pass(r)).count() as f64 / rows.len() as f64
    }
}

/// Negative-eigenvalue counts per seed. Above the threshold these cover
/// `H(t*)`, `M` and the truncated `M` plus the lifted quadratic form;
/// below it, `H(t)` over [`below_ks_grid`].
pub fn verify_spectra(exp: &Experiment) -> Result<SpectraReport> {
    if exp.n() > 20_000 {
        return Err(Error::TooLarge { n: exp.n(), limit: 20_000 });
    }
    let above = ks_signal(&exp.spec, exp.model.d()) > 0.0;
    let (rows, below_ks) = if above {
        let rows = exp.seeds.par_iter().map(|&s| spectra_row(exp, s)).collect::<Result<Vec<_>>>()?;
        (rows, Vec::new())
    } else {
        let rows = exp.seeds.par_iter().map(|&s| below_ks_row(exp, s)).collect::<Result<Vec<_>>>()?;
        (Vec::new(), rows)
    };
    Ok(SpectraReport {
        schema: SPECTRA_SCHEMA.to_string(),
        config_hash: exp.config_hash.clone(),
        h_pass_rate: rate(&rows, |r| r.h_ok),
        mbar_pass_rate: rate(&rows, |r| r.mbar_ok),
        quad_pass_rate: rate(&rows, |r| r.quad_ok),
        below_ks_pass_rate: rate(&below_ks, |r| r.ok),
        rows,
        below_ks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IharaReport {
    pub graphs: usize,
    pub t_grid: Vec<f64>,
    pub max_residual: f64,
    pub tree_max_residual: f64,
    /// `|det(I - tB) - (1 - t^3)^2|` on the triangle, maximized over the grid.
    pub k3_max_residual: f64,
}

/// 18 points spread over `(-1, 1)`, none at `0` or `+-1`.
pub fn ihara_grid() -> Vec<f64> {
    (0..18).map(|j| -0.9 + 1.8 * j as f64 / 17.0).collect()
}

/// Erdos-Renyi graph on `2..=max_n` vertices with mean degree in `[1, 4]`.
pub fn random_small_graph(max_n: usize, seed: u64) -> SparseGraph {
    let mut rng = seeded_rng(seed, 12);
    let n = rng.random_range(2..=max_n);
    let p = rng.random_range(1.0..4.0) / n as f64;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    SparseGraph::from_edges(n, edges).expect("simple by construction")
}

/// Uniform random recursive tree.
pub fn random_tree(max_n: usize, seed: u64) -> SparseGraph {
    let mut rng = seeded_rng(seed, 13);
    let n = rng.random_range(2..=max_n);
    let edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    SparseGraph::from_edges(n, edges).expect("a tree is simple")
}

pub fn verify_ihara_bass(graphs: usize, max_n: usize, seed: u64) -> Result<IharaReport> {
    let grid = ihara_grid();
    let worst = |g: &SparseGraph| -> Result<f64> {
        grid.iter().try_fold(0.0f64, |m, &t| Ok(m.max(ihara_bass_residual(g, t)?)))
    };
    let max_residual = (0..graphs as u64)
        .into_par_iter()
        .map(|i| worst(&random_small_graph(max_n, seed.wrapping_add(i))))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let mut tree_max_residual = 0.0f64;
    for i in 0..20u64 {
        tree_max_residual = tree_max_residual.max(worst(&random_tree(max_n, seed.wrapping_add(i)))?);
    }
    let k3 = SparseGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)])?;
    let b = crate::graphmat::nb_matrix(&k3).to_dense();
    let k3_max_residual = grid
        .iter()
        .map(|&t| ((DMatrix::identity(6, 6) - &b * t).determinant() - (1.0 - t.powi(3)).powi(2)).abs())
        .fold(0.0, f64::max);
    Ok(IharaReport {
        graphs,
        t_grid: grid,
        max_residual,
        tree_max_residual,
        k3_max_residual,
    })
}

/// Calibrated constants, stored in the fixtures file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub rho_clean: f64,
    pub clean_mean_rho: f64,
    pub hub_delta: f64,
    pub hub_mean_rho: f64,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub config_hash: String,
}

/// Share of the clean mean kept as the regression floor.
pub const RHO_CLEAN_SHARE: f64 = 0.75;

/// Clean and hub-corrupted runs over the experiment's seeds; `rho_clean`
/// is [`RHO_CLEAN_SHARE`] of the clean mean.
pub fn calibrate(exp: &Experiment, hub_delta: f64) -> Result<Calibration> {
    let clean_cfg = exp.config.clone().with_adversary(AdversaryKind::None, 0.0);
    let clean = run_pipeline(&Experiment::prepare(clean_cfg)?);
    let hub_cfg = exp.config.clone().with_adversary(AdversaryKind::Hub, hub_delta);
    let hub = run_pipeline(&Experiment::prepare(hub_cfg)?);
    if clean.has_invariant_violation() || hub.has_invariant_violation() {
        return Err(Error::InvariantViolation("calibration run violated an invariant".into()));
    }
    let clean_mean_rho = clean.mean_rho();
    Ok(Calibration {
        rho_clean: RHO_CLEAN_SHARE * clean_mean_rho,
        clean_mean_rho,
        hub_delta,
        hub_mean_rho: hub.mean_rho(),
        n: exp.n(),
        seeds: exp.seeds.clone(),
        config_hash: clean.config_hash,
    })
}

impl Calibration {
    pub fn to_toml(&self, model: &ModelParams) -> String {
        let body = toml::to_string(self).expect("calibration serializes");
        let model_line = model.to_spec().to_text().replace('\n', "; ");
        format!(
            "# Written by `sbm-robust calibrate`; do not edit by hand.\n\
             # model: {}\n\
             # rho_clean = {RHO_CLEAN_SHARE} * clean_mean_rho over the listed seeds.\n{body}",
            model_line.trim_end_matches("; ")
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0),
            msg: e.message().to_string(),
        })
    }
}
