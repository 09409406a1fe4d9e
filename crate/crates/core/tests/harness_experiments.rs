use cocluster_core::geometry::LatentSource;
use cocluster_core::harness::{run_matching_rate_experiment, run_risk_gap_experiment, risk_gap};
use cocluster_core::{
    centering_constants, AllocationMap, empirical_risk, match_population_cocluster, population_risk, psi_cdf_distance,
    sample_bipartite, Candidate, Experiment, ExperimentConfig, GeneralLatent, ModelFamily, PopulationLatentMap,
    RowSide, Side, StepGraphon, Theta,
};

#[test]
fn constant_graphon_errors_shrink_with_n() {
    let mut cfg = ExperimentConfig::defaults(Experiment::MatchingRate);
    cfg.graphon = StepGraphon::constant(0.3).unwrap();
    cfg.n_grid = vec![100, 1600];
    cfg.reps = 5;
    cfg.k = 2;
    cfg.candidates = vec![Candidate::Spectral];
    let res = run_matching_rate_experiment(&cfg, 1).unwrap();
    assert_eq!(res.rows.len(), 10);
    assert!(res.summary[1].median_max_error < res.summary[0].median_max_error);
}

#[test]
fn same_seed_gives_identical_rows_in_parallel() {
    let mut cfg = ExperimentConfig::defaults(Experiment::MatchingRate);
    cfg.n_grid = vec![100, 150];
    cfg.reps = 2;
    let a = run_matching_rate_experiment(&cfg, 1).unwrap();
    let b = run_matching_rate_experiment(&cfg, 4).unwrap();
    assert_eq!(a.rows, b.rows);
    cfg.master_seed = 2;
    let c = run_matching_rate_experiment(&cfg, 1).unwrap();
    assert_ne!(a.rows, c.rows);
}

#[test]
fn well_specified_model_has_zero_population_term() {
    // θ equal to the graphon values and the true cell labels: ω_θ ≡ ω.
    let g = StepGraphon::four_block();
    let sample = sample_bipartite(&g, 300, 300, 17).unwrap();
    let rows: Vec<usize> = sample.x.iter().map(|&x| g.row_cell(x)).collect();
    let cols: Vec<usize> = sample.y.iter().map(|&y| g.col_cell(y)).collect();
    let s = GeneralLatent::labels_only(rows, 4).unwrap();
    let t = GeneralLatent::labels_only(cols.clone(), 4).unwrap();
    let theta = Theta::new(g.values().clone()).unwrap();
    let family = ModelFamily::Blockmodel;

    let truth = AllocationMap::from_cell_labels(g.col_widths(), &[0, 1, 2, 3], 4).unwrap();
    let truth_map = PopulationLatentMap::from_allocation(g.col_breaks().to_vec(), &truth).unwrap();
    let r_true = population_risk(&g, RowSide::Sample { x: &sample.x, latent: &s }, &truth_map, &theta, family).unwrap();
    assert_eq!(r_true, 0.0);

    // The matched map carries the empirical column proportions, so it is off the
    // true map by sampling noise only.
    let tau = match_population_cocluster(&g, &sample, &cols, 4, Side::Column).unwrap();
    let map = PopulationLatentMap::from_allocation(g.col_breaks().to_vec(), &tau.alloc).unwrap();
    let r_w = population_risk(&g, RowSide::Sample { x: &sample.x, latent: &s }, &map, &theta, family).unwrap();
    assert!(r_w < 0.05, "population term {r_w}");

    let r_a = empirical_risk(&sample.a, &s, &t, &theta, family).unwrap();
    let c = centering_constants(&sample, &g).unwrap();
    let psi = psi_cdf_distance(LatentSource::Sample(&t), LatentSource::Map(&map), 32).unwrap();
    let gap = risk_gap(&g, &sample, &s, &t, &theta, family, 1.0, 32).unwrap();
    assert!((gap - ((r_a - r_w - c.c1 - c.c2).abs() + psi / 4.0)).abs() < 1e-9);
    assert!(gap < 0.05, "gap {gap}");
}

#[test]
fn blockmodel_risk_experiment_is_reproducible() {
    let mut cfg = ExperimentConfig::defaults(Experiment::RiskGap);
    cfg.n_grid = vec![100, 200, 400];
    cfg.reps = 2;
    let a = run_risk_gap_experiment(&cfg, 1).unwrap();
    let b = run_risk_gap_experiment(&cfg, 2).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.rows.len(), 3 * 2 * 3);
    assert!(a.slope.is_some());
    assert!(a.rows.iter().all(|r| r.error.is_finite() && r.error >= 0.0));
}

#[test]
fn risk_experiment_rejects_unsupported_settings() {
    let mut cfg = ExperimentConfig::defaults(Experiment::RiskGap);
    cfg.d = 3;
    cfg.family = ModelFamily::DotProductBlock;
    assert!(run_risk_gap_experiment(&cfg, 1).is_err());
    cfg.d = 2;
    cfg.family = ModelFamily::DotProduct;
    assert!(run_risk_gap_experiment(&cfg, 1).is_err());
}
