use cocluster_core::nalgebra::DMatrix;
use cocluster_core::rng::rng_from_seed;
use cocluster_core::{
    block_summary, fit_blockmodel_als, sample_bipartite, spectral_cocluster, CoClusterLabels, StepGraphon,
};
use rand::seq::SliceRandom;
use rand::Rng as _;

#[test]
fn half_graphon_density_concentrates() {
    // Hoeffding: P(|mean − 0.5| ≥ 0.05) ≤ 2 exp(−2 · 10⁶ · 0.05²), far below 1e-9.
    let log_bound = 2f64.ln() - 2.0 * 1e6 * 0.05f64.powi(2);
    assert!(log_bound < 1e-9f64.ln());
    let g = StepGraphon::constant(0.5).unwrap();
    let sample = sample_bipartite(&g, 1000, 1000, 42).unwrap();
    assert!((sample.a.mean() - 0.5).abs() < 0.05);
}

#[test]
fn block_densities_match_graphon_values() {
    let g = StepGraphon::four_block();
    let sample = sample_bipartite(&g, 800, 800, 5).unwrap();
    let rows: Vec<usize> = sample.x.iter().map(|&x| g.row_cell(x)).collect();
    let cols: Vec<usize> = sample.y.iter().map(|&y| g.col_cell(y)).collect();
    let (mut sums, mut counts) = (DMatrix::<f64>::zeros(4, 4), DMatrix::<f64>::zeros(4, 4));
    for i in 0..800 {
        for j in 0..800 {
            sums[(rows[i], cols[j])] += sample.a[(i, j)];
            counts[(rows[i], cols[j])] += 1.0;
        }
    }
    for r in 0..4 {
        for c in 0..4 {
            let p = g.values()[(r, c)];
            let n = counts[(r, c)];
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((sums[(r, c)] / n - p).abs() <= 5.0 * se, "cell ({r},{c})");
        }
    }
    // Latent coordinates are uniform: cell occupation tracks cell widths.
    for (r, w) in g.row_widths().iter().enumerate() {
        let frac = rows.iter().filter(|&&v| v == r).count() as f64 / 800.0;
        assert!((frac - w).abs() <= 5.0 * (w * (1.0 - w) / 800.0).sqrt());
    }
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut map = std::collections::HashMap::new();
    let mut inv = std::collections::HashMap::new();
    a.iter().zip(b).all(|(x, y)| *map.entry(x).or_insert(y) == y && *inv.entry(y).or_insert(x) == x)
}

#[test]
fn spectral_recovers_noise_free_planted_blocks() {
    let mut rng = rng_from_seed(11);
    for inst in 0..10 {
        let theta = loop {
            let t = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>());
            // Distinct, well-separated rows and columns.
            let sep = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() > 0.05;
            let rows: Vec<Vec<f64>> = (0..3).map(|i| t.row(i).iter().copied().collect()).collect();
            let cols: Vec<Vec<f64>> = (0..3).map(|i| t.column(i).iter().copied().collect()).collect();
            if (0..3).all(|i| (i + 1..3).all(|j| sep(&rows[i], &rows[j]) && sep(&cols[i], &cols[j]))) {
                break t;
            }
        };
        let mut rows: Vec<usize> = (0..90).map(|i| i / 30).collect();
        let mut cols: Vec<usize> = (0..90).map(|j| j / 30).collect();
        rows.shuffle(&mut rng);
        cols.shuffle(&mut rng);
        let w = DMatrix::from_fn(90, 90, |i, j| theta[(rows[i], cols[j])]);
        let got = spectral_cocluster(&w, 3, 100 + inst).unwrap();
        assert!(same_partition(&got.rows, &rows), "instance {inst} rows");
        assert!(same_partition(&got.cols, &cols), "instance {inst} cols");
        // θ̂ of the recovered labels is the planted θ up to the label permutation.
        let hat = block_summary(&w, &got).unwrap().theta_hat;
        for i in 0..90 {
            for j in (0..90).step_by(7) {
                assert!((hat[(got.rows[i], got.cols[j])] - theta[(rows[i], cols[j])]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn als_from_spectral_reaches_planted_risk() {
    let theta = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]);
    let g = StepGraphon::blockmodel(&[0.5, 0.5], &[0.5, 0.5], theta).unwrap();
    let mut gaps: Vec<f64> = (0..20)
        .map(|seed| {
            let sample = sample_bipartite(&g, 200, 200, 900 + seed).unwrap();
            let planted = CoClusterLabels::new(
                sample.x.iter().map(|&x| g.row_cell(x)).collect(),
                sample.y.iter().map(|&y| g.col_cell(y)).collect(),
                2,
            )
            .unwrap();
            let init = spectral_cocluster(&sample.a, 2, seed).unwrap();
            let fit = fit_blockmodel_als(&sample.a, 2, &init, 50).unwrap();
            assert!(fit.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            let planted_fit = fit_blockmodel_als(&sample.a, 2, &planted, 0).unwrap();
            (fit.trace.last().unwrap() - planted_fit.trace[0]).abs()
        })
        .collect();
    gaps.sort_by(f64::total_cmp);
    let median = 0.5 * (gaps[9] + gaps[10]);
    assert!(median <= 1e-3, "median gap {median}");
}
