#![allow(dead_code)]

use cocluster_core::nalgebra::DMatrix;
use cocluster_core::population::LatentPiece;
use cocluster_core::rng::Rng;
use cocluster_core::{AllocationMap, GeneralLatent, PopulationLatentMap, StepGraphon, Theta};
use rand::Rng as _;

pub fn random_breaks(rng: &mut Rng, cells: usize) -> Vec<f64> {
    loop {
        let mut inner: Vec<f64> = (0..cells - 1).map(|_| rng.random::<f64>()).collect();
        inner.sort_by(f64::total_cmp);
        let mut b = vec![0.0];
        b.extend(inner);
        b.push(1.0);
        if b.windows(2).all(|w| w[1] - w[0] > 0.02) {
            return b;
        }
    }
}

pub fn random_graphon(rng: &mut Rng, max_cells: usize) -> StepGraphon {
    let r = rng.random_range(1..=max_cells);
    let c = rng.random_range(1..=max_cells);
    let values = DMatrix::from_fn(r, c, |_, _| rng.random::<f64>());
    StepGraphon::new(random_breaks(rng, r), random_breaks(rng, c), values).unwrap()
}

pub fn random_allocation(rng: &mut Rng, widths: &[f64], k: usize) -> AllocationMap {
    let mut mass = DMatrix::from_fn(widths.len(), k, |_, _| {
        // Sparse rows are common in matched allocations; keep some zeros.
        if rng.random::<f64>() < 0.25 { 0.0 } else { rng.random::<f64>() }
    });
    for (b, &w) in widths.iter().enumerate() {
        if mass.row(b).sum() == 0.0 {
            mass[(b, 0)] = 1.0;
        }
        let s = mass.row(b).sum();
        for t in 0..k {
            mass[(b, t)] *= w / s;
        }
    }
    AllocationMap::new(widths.to_vec(), mass).unwrap()
}

pub fn random_cap_vector(rng: &mut Rng, d: usize) -> Vec<f64> {
    loop {
        let c: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        if c.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            return c;
        }
    }
}

pub fn random_latent(rng: &mut Rng, len: usize, k: usize, d: usize) -> GeneralLatent {
    let labels = (0..len).map(|_| rng.random_range(0..k)).collect();
    let vectors = (0..len).flat_map(|_| random_cap_vector(rng, d)).collect();
    GeneralLatent::new(labels, vectors, k, d).unwrap()
}

pub fn random_map(rng: &mut Rng, breaks: &[f64], k: usize, d: usize) -> PopulationLatentMap {
    let pieces = breaks
        .windows(2)
        .map(|w| {
            let count = rng.random_range(1..=3);
            let cuts: Vec<f64> = (0..count).map(|_| rng.random::<f64>() + 0.1).collect();
            let total: f64 = cuts.iter().sum();
            cuts.iter()
                .map(|c| LatentPiece {
                    length: c / total * (w[1] - w[0]),
                    label: rng.random_range(0..k),
                    vector: random_cap_vector(rng, d),
                })
                .collect()
        })
        .collect();
    PopulationLatentMap::new(breaks.to_vec(), pieces, k, d).unwrap()
}

pub fn random_theta(rng: &mut Rng, k: usize) -> Theta {
    Theta::new(DMatrix::from_fn(k, k, |_, _| rng.random::<f64>())).unwrap()
}

/// Mean and standard error of a sample.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
