use sbm_robust::adversary::corruption_distance;
use sbm_robust::harness::{
    pipeline_seed, run_pipeline, verify_spectra, AdversaryKind, Experiment, ExperimentConfig, SeedStatus,
};
use sbm_robust::metrics::correlation_expansion;
use sbm_robust::rounding::check_weights;
use sbm_robust::{Assignment, ModelParams, SparseGraph};

fn two_block() -> ModelParams {
    ModelParams::symmetric(2, 1.6, 0.4, 4.0).unwrap()
}

#[test]
fn corrupted_run_respects_budget_and_invariants() {
    let cfg = ExperimentConfig::new(&two_block(), 1500, vec![4]).with_adversary(AdversaryKind::Hub, 0.004);
    let exp = Experiment::prepare(cfg).unwrap();
    let a = pipeline_seed(&exp, 4).unwrap();
    assert_eq!(corruption_distance(&a.graph, &a.corrupted).unwrap(), 6);
    assert_eq!(a.corruption.budget_used(), 6);
    check_weights(&a.rounding.weights).unwrap();
    assert!(a.subspace.dim() >= 1);
    assert!((-1.0..=1.0).contains(&a.score.rho));
    let e = correlation_expansion(&a.rounding.assignment, &a.truth, &exp.spec).unwrap();
    assert!((e.expansion - e.direct).abs() <= 0.02 * 1500f64.powi(2));
}

#[test]
fn records_are_bit_reproducible_across_adversaries() {
    for kind in [AdversaryKind::None, AdversaryKind::Random, AdversaryKind::Monotone] {
        let cfg = ExperimentConfig::new(&two_block(), 800, vec![0, 1]).with_adversary(kind, 0.01);
        let exp = Experiment::prepare(cfg).unwrap();
        let a = run_pipeline(&exp);
        let b = run_pipeline(&exp);
        assert_eq!(a.digest(), b.digest(), "{kind:?}");
        assert!(a.seeds.iter().all(|s| s.status == SeedStatus::Ok), "{kind:?}: {:?}", a.seeds);
    }
}

#[test]
fn below_threshold_h_grid_sees_only_the_perron_direction() {
    let weak = ModelParams::symmetric(2, 1.4, 0.6, 5.0).unwrap();
    let mut cfg = ExperimentConfig::new(&weak, 1500, (0..5).collect());
    cfg.allow_below_ks = true;
    let rep = verify_spectra(&Experiment::prepare(cfg).unwrap()).unwrap();
    assert!(rep.rows.is_empty());
    assert_eq!(rep.below_ks.len(), 5);
    assert!(rep.below_ks_pass_rate >= 0.8, "{:?}", rep.below_ks);
}

#[test]
fn graph_and_label_files_roundtrip() {
    let (g, x) = sbm_robust::model::sample_sbm(&two_block(), 300, 9).unwrap();
    let mut buf = Vec::new();
    g.write_edge_list(&mut buf).unwrap();
    assert_eq!(SparseGraph::read_edge_list(&buf[..]).unwrap(), g);
    let mut buf = Vec::new();
    x.write_labels(&mut buf).unwrap();
    assert_eq!(Assignment::read_labels(2, &buf[..]).unwrap(), x);
}
