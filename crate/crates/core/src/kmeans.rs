//! Lloyd's k-means with deterministic farthest-point initialisation.

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

const MAX_ITERS: usize = 100;
const MOVE_TOL: f64 = 1e-10;

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols()).map(|d| (points[(i, d)] - centers[(c, d)]).powi(2)).sum()
}

fn nearest(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.nrows() {
        let d = sq_dist(points, i, centers, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// Cluster the rows of `points` into `k` groups. Labels are `0..k`.
///
/// The first centre is a row drawn from `seed`; each further centre is the row
/// farthest from those already chosen (lowest index on ties). An empty cluster
/// keeps its previous centroid.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot form {k} clusters from {n} points")));
    }
    let dim = points.ncols();
    let mut centers = DMatrix::<f64>::zeros(k, dim);
    let first = rng_from_seed(seed).random_range(0..n);
    centers.row_mut(0).copy_from(&points.row(first));
    let mut min_d: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let mut pick = 0;
        for i in 1..n {
            if min_d[i] > min_d[pick] {
                pick = i;
            }
        }
        centers.row_mut(c).copy_from(&points.row(pick));
        for (i, d) in min_d.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centers, c));
        }
    }

    let mut labels: Vec<usize> = (0..n).map(|i| nearest(points, i, &centers)).collect();
    for _ in 0..MAX_ITERS {
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for d in 0..dim {
                sums[(l, d)] += points[(i, d)];
            }
        }
        let mut movement: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mut shift = 0.0f64;
            for d in 0..dim {
                let v = sums[(c, d)] / counts[c] as f64;
                shift += (v - centers[(c, d)]).powi(2);
                centers[(c, d)] = v;
            }
            movement = movement.max(shift.sqrt());
        }
        labels = (0..n).map(|i| nearest(points, i, &centers)).collect();
        if movement < MOVE_TOL {
            break;
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_well_separated_groups() {
        let pts = DMatrix::from_row_slice(6, 2, &[0.0, 0.0, 0.1, 0.0, 5.0, 5.0, 5.1, 5.0, 10.0, 0.0, 10.1, 0.1]);
        let l = kmeans(&pts, 3, 0).unwrap();
        assert_eq!(l[0], l[1]);
        assert_eq!(l[2], l[3]);
        assert_eq!(l[4], l[5]);
        assert_ne!(l[0], l[2]);
        assert_ne!(l[2], l[4]);
        assert_ne!(l[0], l[4]);
    }

    #[test]
    fn deterministic_in_seed() {
        let pts = DMatrix::from_fn(50, 3, |i, j| ((i * 31 + j * 17) % 13) as f64);
        assert_eq!(kmeans(&pts, 4, 7).unwrap(), kmeans(&pts, 4, 7).unwrap());
    }

    #[test]
    fn single_cluster_and_errors() {
        let pts = DMatrix::from_fn(5, 2, |i, _| i as f64);
        assert_eq!(kmeans(&pts, 1, 3).unwrap(), vec![0; 5]);
        assert!(kmeans(&pts, 6, 0).is_err());
        assert!(kmeans(&pts, 0, 0).is_err());
    }
}
