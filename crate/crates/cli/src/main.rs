use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sbm_robust::harness::{
    calibrate, parse_seed_range, pipeline_seed, recover_graph, run_pipeline, verify_ihara_bass, verify_spectra,
    Experiment, ExperimentConfig, SeedList,
};
use sbm_robust::metrics::score;
use sbm_robust::nalgebra::DMatrix;
use sbm_robust::{Assignment, Error, SparseGraph};

#[derive(Parser)]
#[command(name = "sbm-robust", version, about = "Robust spectral recovery for stochastic block models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Run a model below the Kesten-Stigum threshold anyway
    #[arg(long)]
    allow_below_ks: bool,
}

impl Common {
    fn load(&self, seeds: Option<&str>) -> Result<Experiment, Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.allow_below_ks |= self.allow_below_ks;
        if let Some(s) = seeds {
            parse_seed_range(s)?;
            cfg.seeds = SeedList::Range(s.to_string());
        }
        Experiment::prepare(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph; writes PREFIX.edges and PREFIX.labels
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corrupt a graph with the configured adversary; writes PREFIX.edges and PREFIX.edits
    Corrupt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: PathBuf,
        /// Ground-truth labels, needed by the monotone adversary
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover an assignment; writes PREFIX.labels, PREFIX.weights.csv and PREFIX.trace.csv
    Recover {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an estimated labelling against the truth
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Rounding weights; scores the expectation instead of the sample
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Negative-eigenvalue counts and quadratic forms per seed
    Spectra {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the determinant identity on small random graphs
    IharaBass {
        #[arg(long, default_value_t = 200)]
        graphs: usize,
        #[arg(long, default_value_t = 40)]
        max_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// End-to-end runs, one record per seed
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure the clean and hub-corrupted baselines; writes a fixtures file
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value_t = 0.002)]
        hub_delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvariantViolation(_) => 3,
        Error::Parse { .. }
        | Error::InvalidInput(_)
        | Error::Io(_)
        | Error::BelowKs { .. }
        | Error::NonSymmetric { .. }
        | Error::NegativeEntry { .. }
        | Error::NotSimplex
        | Error::NormalizationViolated { .. }
        | Error::NoFeasibleParams
        | Error::DegenerateSpectrum { .. } => 2,
        _ => 1,
    }
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    let mut w = sink(out)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn read_graph(path: &Path) -> Result<SparseGraph, Error> {
    SparseGraph::read_edge_list(BufReader::new(File::open(path)?))
}

fn read_labels(path: &Path, k: usize) -> Result<Assignment, Error> {
    Assignment::read_labels(k, BufReader::new(File::open(path)?))
}

fn write_labels(path: &Path, x: &Assignment) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    x.write_labels(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_weights(path: &Path, w: &DMatrix<f64>) -> Result<(), Error> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# sbm-robust weights v1")?;
    for row in w.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()?;
    Ok(())
}

fn read_weights(path: &Path, k: usize) -> Result<DMatrix<f64>, Error> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = t
            .split(',')
            .map(|c| c.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Parse { line: i + 1, msg: format!("{e}") })?;
        if row.len() != k {
            return Err(Error::Parse { line: i + 1, msg: format!("expected {k} columns") });
        }
        rows.extend(row);
    }
    Ok(DMatrix::from_row_slice(rows.len() / k, k, &rows))
}

fn run(cmd: Command) -> Result<ExitCode, Error> {
    match cmd {
        Command::Sample { common, seed, out } => {
            let exp = common.load(None)?;
            let (g, x) = exp.sample(seed)?;
            let mut w = BufWriter::new(File::create(with_ext(&out, "edges"))?);
            g.write_edge_list(&mut w)?;
            w.flush()?;
            write_labels(&with_ext(&out, "labels"), &x)?;
        }
        Command::Corrupt { common, graph, labels, seed, out } => {
            let exp = common.load(None)?;
            let g = read_graph(&graph)?;
            let truth = match labels {
                Some(p) => read_labels(&p, exp.spec.k())?,
                None => Assignment::new(exp.spec.k(), vec![0; g.n()])?,
            };
            let (h, report) = exp.corrupt(&g, &truth, seed)?;
            let mut w = BufWriter::new(File::create(with_ext(&out, "edges"))?);
            h.write_edge_list(&mut w)?;
            w.flush()?;
            fs::write(with_ext(&out, "edits"), report.to_log())?;
        }
        Command::Recover { common, graph, seed, out } => {
            let exp = common.load(None)?;
            let g = read_graph(&graph)?;
            let rec = recover_graph(&exp, &g, seed, None)?;
            write_labels(&with_ext(&out, "labels"), &rec.rounding.assignment)?;
            write_weights(&with_ext(&out, "weights.csv"), &rec.rounding.weights.w)?;
            fs::write(with_ext(&out, "trace.csv"), rec.trim.trace_csv())?;
        }
        Command::Evaluate { common, estimate, truth, weights, format, out } => {
            let exp = common.load(None)?;
            let k = exp.spec.k();
            let xhat = read_labels(&estimate, k)?;
            let x = read_labels(&truth, k)?;
            let w = weights.map(|p| read_weights(&p, k)).transpose()?;
            let s = score(w.as_ref(), &xhat, &x, &exp.spec)?;
            let text = match format {
                Format::Json => json(&s),
                Format::Csv => format!(
                    "# sbm-robust score v1\nrho,raw_inner,frob_w,frob_x,advantage,mi_per_vertex\n{},{},{},{},{},{}\n",
                    s.rho, s.raw_inner, s.frob_w, s.frob_x, s.advantage, s.mi_per_vertex
                ),
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Spectra { common, seeds, format, out } => {
            let exp = common.load(seeds.as_deref())?;
            let rep = verify_spectra(&exp)?;
            let text = match format {
                Format::Json => json(&rep),
                Format::Csv => rep.to_csv(),
            };
            emit(out.as_deref(), &text)?;
        }
        Command::IharaBass { graphs, max_n, seed, format, out } => {
            let rep = verify_ihara_bass(graphs, max_n, seed)?;
            let text = match format {
                Format::Json => json(&rep),
                Format::Csv => format!(
                    "# sbm-robust ihara-bass v1\ngraphs,max_residual,tree_max_residual,k3_max_residual\n{},{},{},{}\n",
                    rep.graphs, rep.max_residual, rep.tree_max_residual, rep.k3_max_residual
                ),
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Pipeline { common, seeds, format, out } => {
            let exp = common.load(seeds.as_deref())?;
            let out = out.or_else(|| exp.config.outputs.records.clone());
            let record = run_pipeline(&exp);
            if let Some(dir) = &exp.config.outputs.trace_dir {
                fs::create_dir_all(dir)?;
                for &s in &exp.seeds {
                    if let Ok(a) = pipeline_seed(&exp, s) {
                        fs::write(dir.join(format!("trim-seed{s}.csv")), a.trim.trace_csv())?;
                    }
                }
            }
            let text = match format {
                Format::Json => json(&record),
                Format::Csv => record.to_csv(),
            };
            emit(out.as_deref(), &text)?;
            eprintln!("digest {}", record.digest());
            if record.has_invariant_violation() {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Calibrate { common, seeds, hub_delta, out } => {
            let exp = common.load(seeds.as_deref())?;
            let cal = calibrate(&exp, hub_delta)?;
            fs::write(&out, cal.to_toml(&exp.model))?;
            eprintln!(
                "clean mean rho {:.4}, rho_clean {:.4}, hub mean rho {:.4}",
                cal.clean_mean_rho, cal.rho_clean, cal.hub_mean_rho
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
