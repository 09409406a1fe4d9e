mod common;

use cocluster_core::nalgebra::DMatrix;
use cocluster_core::population::centering_identity_residual;
use cocluster_core::rng::rng_from_seed;
use cocluster_core::{
    blocked_graphon, blocked_graphon_mixed, greedy_sigma_star, model_kernel, population_risk, sample_bipartite,
    AllocationMap, GeneralLatent, LatentRef, ModelFamily, PopulationLatentMap, RowSide, StepGraphon,
};
use common::*;
use rand::Rng as _;

const MC_POINTS: usize = 200_000;

fn random_family(rng: &mut cocluster_core::rng::Rng) -> (ModelFamily, usize) {
    match rng.random_range(1..=4u8) {
        1 => (ModelFamily::Blockmodel, 0),
        2 => (ModelFamily::DegreeCorrected, 1),
        f => (ModelFamily::from_id(f).unwrap(), rng.random_range(1..=2)),
    }
}

#[test]
fn blocked_graphon_matches_monte_carlo() {
    let mut rng = rng_from_seed(101);
    for _ in 0..3 {
        let g = random_graphon(&mut rng, 3);
        let k = rng.random_range(1..=3);
        let row = random_allocation(&mut rng, &g.row_widths(), k);
        let col = random_allocation(&mut rng, &g.col_widths(), k);
        let got = blocked_graphon(&g, &row, &col).unwrap();
        let rmap = PopulationLatentMap::from_allocation(g.row_breaks().to_vec(), &row).unwrap();
        let cmap = PopulationLatentMap::from_allocation(g.col_breaks().to_vec(), &col).unwrap();
        let mut samples = vec![vec![0.0; MC_POINTS]; k * k];
        for p in 0..MC_POINTS {
            let (x, y): (f64, f64) = (rng.random(), rng.random());
            let (s, t) = (rmap.at(x).label, cmap.at(y).label);
            samples[s * k + t][p] = g.eval(x, y).unwrap();
        }
        for s in 0..k {
            for t in 0..k {
                let (mean, se) = mean_se(&samples[s * k + t]);
                assert!((got.phi[(s, t)] - mean).abs() <= 4.0 * se + 1e-12, "phi[{s}][{t}]");
            }
        }
    }
}

#[test]
fn mixed_blocks_match_monte_carlo_and_occupation_identity() {
    let mut rng = rng_from_seed(102);
    for _ in 0..3 {
        let g = random_graphon(&mut rng, 3);
        let k = rng.random_range(1..=3);
        let m = 40;
        let x: Vec<f64> = (0..m).map(|_| rng.random()).collect();
        let s: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
        let col = random_allocation(&mut rng, &g.col_widths(), k);
        let got = blocked_graphon_mixed(&g, &x, &s, &col).unwrap();

        let cmap = PopulationLatentMap::from_allocation(g.col_breaks().to_vec(), &col).unwrap();
        let mut samples = vec![vec![0.0; MC_POINTS]; k * k];
        for p in 0..MC_POINTS {
            let i = rng.random_range(0..m);
            let y: f64 = rng.random();
            samples[s[i] * k + cmap.at(y).label][p] = g.eval(x[i], y).unwrap();
        }
        for a in 0..k {
            for b in 0..k {
                let (mean, se) = mean_se(&samples[a * k + b]);
                assert!((got[(a, b)] - mean).abs() <= 4.0 * se + 1e-12);
            }
        }

        // Occupied row cells become a graphon whose rows have the empirical widths.
        let mut counts = DMatrix::<f64>::zeros(g.n_row_cells(), k);
        for (&xi, &si) in x.iter().zip(&s) {
            counts[(g.row_cell(xi), si)] += 1.0;
        }
        let occupied: Vec<usize> = (0..g.n_row_cells()).filter(|&r| counts.row(r).sum() > 0.0).collect();
        let widths: Vec<f64> = occupied.iter().map(|&r| counts.row(r).sum() / m as f64).collect();
        let mut breaks = vec![0.0];
        for w in &widths {
            breaks.push(breaks.last().unwrap() + w);
        }
        *breaks.last_mut().unwrap() = 1.0;
        let values = DMatrix::from_fn(occupied.len(), g.n_col_cells(), |a, b| g.values()[(occupied[a], b)]);
        let g2 = StepGraphon::new(breaks, g.col_breaks().to_vec(), values).unwrap();
        let mass = DMatrix::from_fn(occupied.len(), k, |a, t| counts[(occupied[a], t)] / m as f64);
        let row = AllocationMap::new(g2.row_widths(), mass).unwrap();
        let via_alloc = blocked_graphon(&g2, &row, &col).unwrap();
        assert!((via_alloc.phi - got).abs().max() < 1e-12);
    }
}

#[test]
fn population_risk_matches_monte_carlo() {
    let mut rng = rng_from_seed(103);
    for _ in 0..4 {
        let g = random_graphon(&mut rng, 3);
        let k = rng.random_range(1..=3);
        let (family, d) = random_family(&mut rng);
        let theta = random_theta(&mut rng, k);
        let rmap = random_map(&mut rng, g.row_breaks(), k, d);
        let cmap = random_map(&mut rng, g.col_breaks(), k, d);
        let got = population_risk(&g, RowSide::Map(&rmap), &cmap, &theta, family).unwrap();
        let vals: Vec<f64> = (0..MC_POINTS)
            .map(|_| {
                let (x, y): (f64, f64) = (rng.random(), rng.random());
                let fit = model_kernel(rmap.at(x), cmap.at(y), &theta, family).unwrap();
                (g.eval(x, y).unwrap() - fit).powi(2)
            })
            .collect();
        let (mean, se) = mean_se(&vals);
        assert!((got - mean).abs() <= 4.0 * se + 1e-12, "map risk {got} vs {mean} ± {se}");

        let m = 30;
        let x: Vec<f64> = (0..m).map(|_| rng.random()).collect();
        let latent = random_latent(&mut rng, m, k, d);
        let got = population_risk(&g, RowSide::Sample { x: &x, latent: &latent }, &cmap, &theta, family).unwrap();
        let vals: Vec<f64> = (0..MC_POINTS)
            .map(|_| {
                let i = rng.random_range(0..m);
                let y: f64 = rng.random();
                let fit = model_kernel(latent.get(i), cmap.at(y), &theta, family).unwrap();
                (g.eval(x[i], y).unwrap() - fit).powi(2)
            })
            .collect();
        let (mean, se) = mean_se(&vals);
        assert!((got - mean).abs() <= 4.0 * se + 1e-12, "mixed risk {got} vs {mean} ± {se}");
    }
}

#[test]
fn greedy_row_assignment_matches_grid_search() {
    let mut rng = rng_from_seed(104);
    let grid = 1000;
    let mut checked = 0;
    for _ in 0..30 {
        let g = random_graphon(&mut rng, 3);
        let k = rng.random_range(2..=4);
        let (family, d) = random_family(&mut rng);
        let theta = random_theta(&mut rng, k);
        let tau = random_map(&mut rng, g.col_breaks(), k, d);
        let x: f64 = rng.random();
        let v = random_cap_vector(&mut rng, d);
        let got = greedy_sigma_star(&g, &tau, &theta, family, x, &v).unwrap();
        let labels = if family == ModelFamily::DotProduct { 1 } else { k };
        let costs: Vec<f64> = (0..labels)
            .map(|s| {
                (0..grid)
                    .map(|j| {
                        let y = (j as f64 + 0.5) / grid as f64;
                        let fit = model_kernel(LatentRef::new(s, &v), tau.at(y), &theta, family).unwrap();
                        (g.eval(x, y).unwrap() - fit).powi(2)
                    })
                    .sum::<f64>()
                    / grid as f64
            })
            .collect();
        let mut order: Vec<usize> = (0..labels).collect();
        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
        // Midpoint quadrature errs by O(1e-3) per discontinuity; only compare clear winners.
        if labels == 1 || costs[order[1]] - costs[order[0]] > 1e-2 {
            assert_eq!(got, order[0]);
            checked += 1;
        }
    }
    assert!(checked >= 10);
}

#[test]
fn centering_identity_on_random_instances() {
    let mut rng = rng_from_seed(105);
    for inst in 0..20 {
        let g = random_graphon(&mut rng, 3);
        let sample = sample_bipartite(&g, 25, 30, 1000 + inst).unwrap();
        let k = rng.random_range(1..=3);
        let (family, d) = random_family(&mut rng);
        let theta = random_theta(&mut rng, k);
        // Few distinct vectors so super-labels repeat, as after quantization.
        let pool: Vec<Vec<f64>> = (0..3).map(|_| random_cap_vector(&mut rng, d)).collect();
        let pick = |rng: &mut cocluster_core::rng::Rng, len: usize| {
            let labels = (0..len).map(|_| rng.random_range(0..k)).collect();
            let vectors = (0..len).flat_map(|_| pool[rng.random_range(0..3)].clone()).collect();
            GeneralLatent::new(labels, vectors, k, d).unwrap()
        };
        let s = pick(&mut rng, 25);
        let t = pick(&mut rng, 30);
        let r = centering_identity_residual(&sample, &g, &s, &t, &theta, family).unwrap();
        assert!(r.abs() <= 1e-10, "instance {inst}: residual {r}");
    }
}

#[test]
fn blockmodel_path_centering_identity() {
    let g = StepGraphon::four_block();
    let sample = sample_bipartite(&g, 60, 80, 7).unwrap();
    let mut rng = rng_from_seed(106);
    let s = GeneralLatent::labels_only((0..60).map(|_| rng.random_range(0..4)).collect(), 4).unwrap();
    let t = GeneralLatent::labels_only((0..80).map(|_| rng.random_range(0..4)).collect(), 4).unwrap();
    let theta = random_theta(&mut rng, 4);
    let r = centering_identity_residual(&sample, &g, &s, &t, &theta, ModelFamily::Blockmodel).unwrap();
    assert!(r.abs() <= 1e-10);
}
