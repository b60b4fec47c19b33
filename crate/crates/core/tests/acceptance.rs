//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use sbm_robust::graphmat::{nb_matrix, nb_power, nb_power_oracle};
use sbm_robust::harness::{
    pipeline_seed, random_small_graph, run_pipeline, verify_ihara_bass, verify_spectra, AdversaryKind, Calibration,
    Experiment, ExperimentConfig, RunRecord, SeedArtifacts, SeedStatus,
};
use sbm_robust::metrics::{correlation_expansion, one_hot_matrix, weak_recovery_corr};
use sbm_robust::model::{sample_sbm, ModelParams};
use sbm_robust::robustpca::{deletion_bound, diag_bound, dim_bound};
use sbm_robust::rounding::sample_assignment;
use sbm_robust::spectra::nb_spectrum;
use sbm_robust::Assignment;

const CALIBRATION: &str = include_str!("../fixtures/calibration.toml");
const HUB_DELTA: f64 = 0.002;

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn two_block() -> ModelParams {
    ModelParams::symmetric(2, 1.6, 0.4, 4.0).expect("valid model")
}

fn experiment(n: usize, seeds: std::ops::Range<u64>, adversary: AdversaryKind, delta: f64) -> Experiment {
    let cfg = ExperimentConfig::new(&two_block(), n, seeds.collect()).with_adversary(adversary, delta);
    Experiment::prepare(cfg).expect("config prepares")
}

fn frac(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}

fn all_ok(r: &RunRecord) -> bool {
    r.seeds.iter().all(|s| s.status == SeedStatus::Ok)
}

fn ihara_bass() -> (bool, String) {
    let rep = verify_ihara_bass(200, 40, 0).expect("suite runs");
    let pass = rep.max_residual <= 1e-8;
    (
        pass,
        format!(
            "200 graphs x {} t: max relative residual {:.2e} (trees {:.1e}, triangle {:.1e})",
            rep.t_grid.len(),
            rep.max_residual,
            rep.tree_max_residual,
            rep.k3_max_residual
        ),
    )
}

fn nb_oracle() -> (bool, String) {
    let mut mismatches = 0;
    for seed in 0..200u64 {
        let g = random_small_graph(30, 5000 + seed);
        let ell = 1 + (seed % 4) as usize;
        let fast = nb_power(&g, ell).dense();
        let slow = nb_power_oracle(&g, ell).expect("within oracle limits").dense();
        if fast != slow {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("200 graphs, ell in 1..=4: {mismatches} mismatches"))
}

fn b_spectrum() -> (bool, String) {
    let p = two_block();
    let mut good = 0;
    let mut tops = Vec::new();
    for seed in 0..10u64 {
        let (g, _) = sample_sbm(&p, 5000, seed).expect("sample");
        let s = nb_spectrum(&nb_matrix(&g), 2, seed).expect("spectrum");
        let ev = &s.eigenvalues;
        let real = |z: &sbm_robust::nalgebra::Complex<f64>| z.im.abs() <= 1e-6 * z.norm().max(1.0);
        let ok = s.converged >= 2
            && real(&ev[0])
            && real(&ev[1])
            && (ev[0].re - 4.0).abs() <= 0.4
            && (ev[1].re - 2.4).abs() <= 0.24
            && ev[2].norm() <= 1.1 * 2.0;
        good += ok as usize;
        tops.push(format!("{:.2}/{:.2}/{:.2}", ev[0].re, ev[1].re, ev[2].norm()));
    }
    (good >= 8, format!("{good}/10 seeds in range [{}]", tops.join(" ")))
}

fn main() -> ExitCode {
    let cal = Calibration::parse(CALIBRATION).expect("calibration fixture parses");
    let mut lines: Vec<Line> = Vec::new();
    // `setup` charges shared runs computed ahead of the closure
    let mut record = |id, name, limit: Option<Duration>, setup: Duration, f: &mut dyn FnMut() -> (bool, String)| {
        let start = Instant::now();
        let (pass, mut detail) = f();
        let elapsed = start.elapsed() + setup;
        let in_time = limit.is_none_or(|l| elapsed <= l);
        if !in_time {
            detail.push_str(&format!("; over the {:?} budget", limit.unwrap()));
        }
        let line = Line {
            id,
            name,
            pass: pass && in_time,
            detail,
            elapsed,
        };
        println!(
            "criterion {:>2} {:<28} {}  {} ({:.1}s)",
            line.id,
            line.name,
            if line.pass { "PASS" } else { "FAIL" },
            line.detail,
            line.elapsed.as_secs_f64()
        );
        lines.push(line);
    };

    record(1, "ihara-bass identity", Some(Duration::from_secs(30)), Duration::ZERO, &mut ihara_bass);
    record(2, "nonbacktracking oracle", Some(Duration::from_secs(60)), Duration::ZERO, &mut nb_oracle);
    record(3, "B spectrum", Some(Duration::from_secs(300)), Duration::ZERO, &mut b_spectrum);

    let spectra_exp = experiment(5000, 0..20, AdversaryKind::None, 0.0);
    let mut spectra = None;
    record(4, "outlier counts", Some(Duration::from_secs(600)), Duration::ZERO, &mut || {
        let rep = verify_spectra(&spectra_exp).expect("spectra run");
        let counts: Vec<String> = rep.rows.iter().map(|r| format!("{}/{}", r.h_count, r.mbar_count)).collect();
        let pass = rep.h_pass_rate >= 0.9 && rep.mbar_pass_rate >= 0.9;
        let detail = format!(
            "H(t*) in [1,2]: {:.0}%, Mbar in [1,2]: {:.0}% (H/Mbar per seed: {})",
            100.0 * rep.h_pass_rate,
            100.0 * rep.mbar_pass_rate,
            counts.join(" ")
        );
        spectra = Some(rep);
        (pass, detail)
    });
    record(5, "quadratic-form negativity", None, Duration::ZERO, &mut || {
        let rep = spectra.as_ref().expect("criterion 4 ran");
        let worst = rep.rows.iter().map(|r| r.quad_over_n).fold(f64::NEG_INFINITY, f64::max);
        (
            rep.quad_pass_rate >= 0.9,
            format!(
                "<x, Mbar x>/n <= -upsilon = {:.2}: {:.0}% of seeds (largest {:.3e})",
                rep.rows[0].quad_bound,
                100.0 * rep.quad_pass_rate,
                worst
            ),
        )
    });

    let hub_exp = experiment(5000, 0..20, AdversaryKind::Hub, HUB_DELTA);
    let params = hub_exp.params().expect("above threshold").clone();
    let start = Instant::now();
    let hub5k = run_pipeline(&hub_exp);
    let hub5k_time = start.elapsed();
    record(6, "trimming guarantees", None, hub5k_time, &mut || {
        let n = hub_exp.n();
        let ok = all_ok(&hub5k);
        let guard = hub5k.seeds.iter().all(|s| s.phi_final as f64 <= params.phi_guard());
        let del = hub5k
            .seeds
            .iter()
            .filter(|s| s.deletions as f64 <= deletion_bound(&params, HUB_DELTA, n))
            .count();
        let diag = hub5k.seeds.iter().all(|s| s.max_diag <= diag_bound(&params, n));
        let dim = hub5k.seeds.iter().all(|s| s.dim_u as f64 <= dim_bound(&params));
        let max_del = hub5k.seeds.iter().map(|s| s.deletions).max().unwrap_or(0);
        let max_dim = hub5k.seeds.iter().map(|s| s.dim_u).max().unwrap_or(0);
        (
            ok && guard && diag && dim && frac(del, 20) >= 0.9,
            format!(
                "all ok {ok}, Phi guard {guard}, deletions in bound {del}/20 (max {max_del}), diag bound {diag}, \
                 dim bound {dim} (max dim U {max_dim})"
            ),
        )
    });
    record(7, "witness preservation", None, Duration::ZERO, &mut || {
        let floor = params.upsilon / (32.0 * params.kcap);
        let hits = hub5k.seeds.iter().filter(|s| s.witness >= floor).count();
        let min = hub5k.seeds.iter().map(|s| s.witness).fold(f64::INFINITY, f64::min);
        (frac(hits, 20) >= 0.8, format!("<y, Pi_U y> >= {floor:.2e}: {hits}/20 (smallest {min:.3})"))
    });

    let start = Instant::now();
    let clean10k = run_pipeline(&experiment(10_000, 0..20, AdversaryKind::None, 0.0));
    let hub10k = run_pipeline(&experiment(10_000, 0..20, AdversaryKind::Hub, HUB_DELTA));
    let recovery_time = start.elapsed();
    let start = Instant::now();
    let clean5k_exp = experiment(5000, 0..20, AdversaryKind::None, 0.0);
    let clean5k: Vec<SeedArtifacts> = clean5k_exp
        .seeds
        .iter()
        .map(|&s| pipeline_seed(&clean5k_exp, s).expect("clean run succeeds"))
        .collect();
    let clean2k = run_pipeline(&experiment(2000, 0..10, AdversaryKind::None, 0.0));
    let scale_time = start.elapsed();

    record(8, "rounding scale", None, scale_time, &mut || {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let c2 = mean(&clean2k.seeds.iter().map(|s| s.c_over_sqrt_n).collect::<Vec<_>>());
        let c5 = mean(
            &clean5k
                .iter()
                .map(|a| a.rounding.weights.c / (a.truth.n() as f64).sqrt())
                .collect::<Vec<_>>(),
        );
        let c10 = mean(&clean10k.seeds.iter().map(|s| s.c_over_sqrt_n).collect::<Vec<_>>());
        let hi = c2.max(c5).max(c10);
        let lo = c2.min(c5).min(c10);
        let residual = clean2k
            .seeds
            .iter()
            .chain(&clean10k.seeds)
            .chain(&hub10k.seeds)
            .chain(&hub5k.seeds)
            .map(|s| s.hull_residual)
            .chain(clean5k.iter().map(|a| a.rounding.weights.hull_residual))
            .fold(0.0, f64::max);
        let ok = all_ok(&clean2k) && all_ok(&clean10k) && all_ok(&hub10k);
        (
            ok && hi <= 2.0 * lo && residual <= 1e-7,
            format!("mean c/sqrt(n) at 2000/5000/10000: {c2:.3}/{c5:.3}/{c10:.3}; max hull residual {residual:.1e}"),
        )
    });

    record(9, "end-to-end weak recovery", Some(Duration::from_secs(1800)), recovery_time, &mut || {
        let clean = clean10k.mean_rho();
        let hub = hub10k.mean_rho();
        let truth = sample_sbm(&two_block(), 10_000, 0).expect("sample").1;
        let spec = &clean5k_exp.spec;
        let constant = Assignment::new(2, vec![0; 10_000]).expect("labels");
        let rho_const = weak_recovery_corr(&one_hot_matrix(&constant), &truth, spec).expect("score").rho;
        let prior = sbm_robust::nalgebra::DMatrix::from_fn(10_000, 2, |_, j| spec.pi[j]);
        let guess = sample_assignment(&prior, 77).expect("labels");
        let rho_guess = weak_recovery_corr(&one_hot_matrix(&guess), &truth, spec).expect("score").rho;
        let pass = cal.rho_clean > 0.0
            && clean >= cal.rho_clean
            && hub >= 0.5 * cal.rho_clean
            && rho_const <= 0.05
            && rho_guess <= 0.05;
        (
            pass,
            format!(
                "rho_clean {:.4}; clean mean {clean:.4}, hub mean {hub:.4} (need {:.4}); baselines {rho_const:.4}, {rho_guess:.4}",
                cal.rho_clean,
                0.5 * cal.rho_clean
            ),
        )
    });

    record(10, "metric consistency", None, Duration::ZERO, &mut || {
        let n2 = 5000f64.powi(2);
        let gap = clean5k
            .iter()
            .map(|a| {
                let e = correlation_expansion(&a.rounding.assignment, &a.truth, &clean5k_exp.spec).expect("expansion");
                (e.expansion - e.direct).abs() / n2
            })
            .fold(0.0, f64::max);
        let strong: Vec<&SeedArtifacts> = clean5k.iter().filter(|a| a.score.rho >= cal.rho_clean / 2.0).collect();
        let adv = strong.iter().filter(|a| a.score.advantage > 0.05).count();
        let mi = strong.iter().filter(|a| a.score.mi_per_vertex >= 0.01).count();
        let max_mi = strong.iter().map(|a| a.score.mi_per_vertex).fold(0.0, f64::max);
        (
            gap <= 0.02 && adv == strong.len() && mi == strong.len(),
            format!(
                "max |expansion - direct|/n^2 {gap:.2e}; {} runs with rho >= rho_clean/2: advantage > 0.05 in {adv}, \
                 MI >= 0.01 n in {mi} (largest MI/n {max_mi:.4})",
                strong.len()
            ),
        )
    });

    let failed: Vec<usize> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!("acceptance: {}/{} criteria passed", lines.len() - failed.len(), lines.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
