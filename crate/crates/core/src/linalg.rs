//! Truncated SVD by randomized subspace iteration.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

const OVERSAMPLE: usize = 10;
const MAX_ITERS: usize = 300;
const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// `m × k`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Descending.
    pub sigma: Vec<f64>,
    /// `n × k`, orthonormal columns.
    pub v: DMatrix<f64>,
    /// Largest `‖A v_i − σ_i u_i‖ / σ_1` over the returned triples.
    pub residual: f64,
    pub iterations: usize,
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    let cols = m.ncols();
    m.qr().q().columns(0, cols).into_owned()
}

fn residual(a: &DMatrix<f64>, u: &DMatrix<f64>, sigma: &[f64], v: &DMatrix<f64>) -> f64 {
    let av = a * v;
    let top = sigma.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0.0;
    }
    (0..sigma.len())
        .map(|i| (av.column(i) - u.column(i) * sigma[i]).norm())
        .fold(0.0, f64::max)
        / top
}

/// Rank-`k` truncated SVD of `a`, deterministic in `seed`.
///
/// Iterates until every returned triple has relative residual below `1e-8`
/// or the iteration cap is reached; `residual` reports the achieved value.
pub fn truncated_svd(a: &DMatrix<f64>, k: usize, seed: u64) -> Result<TruncatedSvd> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("cannot decompose an empty matrix".into()));
    }
    if k == 0 || k > m.min(n) {
        return Err(Error::InvalidArgument(format!("rank {k} is not in 1..={}", m.min(n))));
    }
    let l = (k + OVERSAMPLE).min(m.min(n));
    let mut rng = rng_from_seed(seed);
    let omega = DMatrix::from_fn(n, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormalize(a * omega);
    let at = a.transpose();
    let mut best: Option<TruncatedSvd> = None;
    for iter in 1..=MAX_ITERS {
        let z = orthonormalize(&at * &q);
        q = orthonormalize(a * &z);
        // Rayleigh–Ritz on the current subspace.
        let b = q.transpose() * a;
        let svd = b.svd(true, true);
        let (ub, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
        let order = &order[..k];
        let u = DMatrix::from_fn(m, k, |r, c| (q.row(r) * ub.column(order[c]))[(0, 0)]);
        let v = DMatrix::from_fn(n, k, |r, c| vt[(order[c], r)]);
        let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let res = residual(a, &u, &sigma, &v);
        let done = res <= RESIDUAL_TOL;
        best = Some(TruncatedSvd {
            u,
            sigma,
            v,
            residual: res,
            iterations: iter,
        });
        if done {
            break;
        }
    }
    Ok(best.expect("at least one iteration runs"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn recovers_planted_low_rank() {
        let mut rng = rng_from_seed(9);
        let x = DMatrix::from_fn(60, 3, |_, _| rng.random::<f64>());
        let y = DMatrix::from_fn(3, 40, |_, _| rng.random::<f64>());
        let a = &x * &y;
        let svd = truncated_svd(&a, 3, 1).unwrap();
        assert!(svd.residual <= 1e-8);
        let full = a.clone().svd(false, false).singular_values;
        for i in 0..3 {
            assert!((svd.sigma[i] - full[i]).abs() < 1e-8 * full[0]);
        }
        let recon = &svd.u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(svd.sigma.clone())) * svd.v.transpose();
        assert!((recon - a).norm() < 1e-7);
    }

    #[test]
    fn matches_dense_svd_on_noisy_matrix() {
        let mut rng = rng_from_seed(4);
        let a = DMatrix::from_fn(80, 70, |i, j| {
            let base = if (i < 40) == (j < 30) { 0.8 } else { 0.2 };
            if rng.random::<f64>() < base { 1.0 } else { 0.0 }
        });
        let svd = truncated_svd(&a, 2, 5).unwrap();
        let full = a.clone().svd(false, false).singular_values;
        assert!(svd.residual <= 1e-8);
        assert!((svd.sigma[0] - full[0]).abs() < 1e-7 * full[0]);
        assert!((svd.sigma[1] - full[1]).abs() < 1e-7 * full[0]);
    }

    #[test]
    fn deterministic_and_validated() {
        let a = DMatrix::from_fn(10, 8, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let s1 = truncated_svd(&a, 2, 11).unwrap();
        let s2 = truncated_svd(&a, 2, 11).unwrap();
        assert_eq!(s1.u, s2.u);
        assert_eq!(s1.sigma, s2.sigma);
        assert!(truncated_svd(&a, 9, 0).is_err());
        assert!(truncated_svd(&DMatrix::zeros(0, 3), 1, 0).is_err());
    }
}
