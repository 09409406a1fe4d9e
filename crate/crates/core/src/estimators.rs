//! Spectral co-clustering and alternating least-squares fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::linalg::truncated_svd;
use crate::rng::derive_seed;
use crate::stats::{block_sums, check_labels, project_to_cap, CoClusterLabels, GeneralLatent, ModelFamily, Theta};

/// A label switch must improve the objective by more than this.
const SWITCH_TOL: f64 = 1e-12;

/// Rank-`k` SVD of `a`, then k-means on the rows of `UΣ` and of `VΣ`.
pub fn spectral_cocluster(a: &DMatrix<f64>, k: usize, seed: u64) -> Result<CoClusterLabels> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("matrix is empty".into()));
    }
    if k == 0 || k > m.min(n) {
        return Err(Error::InvalidArgument(format!("K={k} must be in 1..={}", m.min(n))));
    }
    if k == 1 {
        return CoClusterLabels::new(vec![0; m], vec![0; n], 1);
    }
    let svd = truncated_svd(a, k, derive_seed(seed, &[0]))?;
    let scale = |mut x: DMatrix<f64>| {
        for (c, s) in svd.sigma.iter().enumerate() {
            x.column_mut(c).scale_mut(*s);
        }
        x
    };
    let rows = kmeans(&scale(svd.u.clone()), k, derive_seed(seed, &[1]))?;
    let cols = kmeans(&scale(svd.v.clone()), k, derive_seed(seed, &[2]))?;
    CoClusterLabels::new(rows, cols, k)
}

#[derive(Debug, Clone)]
pub struct BlockmodelFit {
    pub labels: CoClusterLabels,
    pub theta: Theta,
    /// Risk at the initial labels, then after every sweep (each at the refitted θ̂).
    pub trace: Vec<f64>,
}

fn theta_hat(a: &DMatrix<f64>, rows: &[usize], cols: &[usize], k: usize) -> DMatrix<f64> {
    let sums = block_sums(a, rows, cols, k);
    let mut rc = vec![0.0; k];
    let mut cc = vec![0.0; k];
    rows.iter().for_each(|&s| rc[s] += 1.0);
    cols.iter().for_each(|&t| cc[t] += 1.0);
    DMatrix::from_fn(k, k, |s, t| {
        let size = rc[s] * cc[t];
        if size > 0.0 {
            (sums[(s, t)] / size).clamp(0.0, 1.0)
        } else {
            0.0
        }
    })
}

fn blockmodel_risk(a: &DMatrix<f64>, rows: &[usize], cols: &[usize], theta: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for (i, &s) in rows.iter().enumerate() {
        for (j, &t) in cols.iter().enumerate() {
            let r = a[(i, j)] - theta[(s, t)];
            total += r * r;
        }
    }
    total / (rows.len() * cols.len()).max(1) as f64
}

/// Reassign every row of `a` to its best label with the column labels and θ fixed.
/// Returns whether any label changed.
fn reassign_rows(a: &DMatrix<f64>, rows: &mut [usize], cols: &[usize], theta: &DMatrix<f64>, k: usize) -> bool {
    let mut col_counts = vec![0.0; k];
    cols.iter().for_each(|&t| col_counts[t] += 1.0);
    let mut changed = false;
    let mut acc = vec![0.0; k];
    for (i, label) in rows.iter_mut().enumerate() {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (j, &t) in cols.iter().enumerate() {
            acc[t] += a[(i, j)];
        }
        // Σ_j (a_ij − θ_{s,T_j})² up to a term that does not depend on s.
        let cost = |s: usize| -> f64 { (0..k).map(|t| col_counts[t] * theta[(s, t)].powi(2) - 2.0 * theta[(s, t)] * acc[t]).sum() };
        let current = cost(*label);
        let mut best = (*label, current);
        for s in 0..k {
            let c = cost(s);
            if c < best.1 - SWITCH_TOL {
                best = (s, c);
            }
        }
        if best.0 != *label {
            *label = best.0;
            changed = true;
        }
    }
    changed
}

/// Alternate θ ← θ̂, row reassignment, column reassignment until no label changes.
pub fn fit_blockmodel_als(a: &DMatrix<f64>, k: usize, init: &CoClusterLabels, max_iters: usize) -> Result<BlockmodelFit> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if init.k != k || init.rows.len() != a.nrows() || init.cols.len() != a.ncols() {
        return Err(Error::ShapeMismatch("initial labels do not match the matrix or K".into()));
    }
    check_labels(&init.rows, k)?;
    check_labels(&init.cols, k)?;
    let mut rows = init.rows.clone();
    let mut cols = init.cols.clone();
    let mut theta = theta_hat(a, &rows, &cols, k);
    let mut trace = vec![blockmodel_risk(a, &rows, &cols, &theta)];
    for _ in 0..max_iters {
        let rows_changed = reassign_rows(a, &mut rows, &cols, &theta, k);
        let at = a.transpose();
        let th_t = theta.transpose();
        let cols_changed = reassign_rows(&at, &mut cols, &rows, &th_t, k);
        theta = theta_hat(a, &rows, &cols, k);
        trace.push(blockmodel_risk(a, &rows, &cols, &theta));
        if !rows_changed && !cols_changed {
            break;
        }
    }
    Ok(BlockmodelFit {
        labels: CoClusterLabels::new(rows, cols, k)?,
        theta: Theta::new(theta)?,
        trace,
    })
}

/// Mutable state of a general-latent fit.
#[derive(Debug, Clone)]
pub struct FitState {
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
    /// Row-major `m × d`.
    pub row_vectors: Vec<f64>,
    /// Row-major `n × d`.
    pub col_vectors: Vec<f64>,
    pub theta: DMatrix<f64>,
    pub k: usize,
    pub d: usize,
}

/// Which blocks of parameters the alternating fit updates.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub update_labels: bool,
    pub update_vectors: bool,
    pub update_theta: bool,
    pub max_iters: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct SideView<'a> {
    a: &'a DMatrix<f64>,
    transposed: bool,
}

impl SideView<'_> {
    fn get(&self, i: usize, j: usize) -> f64 {
        if self.transposed {
            self.a[(j, i)]
        } else {
            self.a[(i, j)]
        }
    }
}

impl FitState {
    fn kernel(&self, i: usize, j: usize) -> f64 {
        let d = self.d;
        let p = dot(&self.row_vectors[i * d..(i + 1) * d], &self.col_vectors[j * d..(j + 1) * d]);
        p * self.theta[(self.row_labels[i], self.col_labels[j])]
    }

    pub fn risk(&self, a: &DMatrix<f64>) -> f64 {
        let (m, n) = a.shape();
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..n {
                let r = a[(i, j)] - self.kernel(i, j);
                total += r * r;
            }
        }
        total / (m * n).max(1) as f64
    }

    /// θ_uv = Σ A p / Σ p² over block (u,v), clamped to [0,1]; 0 for blocks with Σ p² = 0.
    fn update_theta(&mut self, a: &DMatrix<f64>) {
        let k = self.k;
        let d = self.d;
        let mut num = DMatrix::<f64>::zeros(k, k);
        let mut den = DMatrix::<f64>::zeros(k, k);
        for i in 0..a.nrows() {
            let b = &self.row_vectors[i * d..(i + 1) * d];
            let u = self.row_labels[i];
            for j in 0..a.ncols() {
                let p = dot(b, &self.col_vectors[j * d..(j + 1) * d]);
                let v = self.col_labels[j];
                num[(u, v)] += a[(i, j)] * p;
                den[(u, v)] += p * p;
            }
        }
        self.theta = DMatrix::from_fn(k, k, |u, v| if den[(u, v)] > 0.0 { (num[(u, v)] / den[(u, v)]).clamp(0.0, 1.0) } else { 0.0 });
    }

    /// Label and vector updates for one side. `transposed` selects columns.
    fn update_side(&mut self, a: &DMatrix<f64>, transposed: bool, opts: &FitOptions) -> bool {
        let view = SideView { a, transposed };
        let d = self.d;
        let k = self.k;
        let (own_n, other_n) = if transposed { (a.ncols(), a.nrows()) } else { (a.nrows(), a.ncols()) };
        let mut changed = false;
        for i in 0..own_n {
            let (own_labels, own_vecs, other_labels, other_vecs) = if transposed {
                (&mut self.col_labels, &mut self.col_vectors, &self.row_labels, &self.row_vectors)
            } else {
                (&mut self.row_labels, &mut self.row_vectors, &self.col_labels, &self.col_vectors)
            };
            let theta_at = |u: usize, v: usize| if transposed { self.theta[(v, u)] } else { self.theta[(u, v)] };
            let products: Vec<f64> = (0..other_n)
                .map(|j| dot(&own_vecs[i * d..(i + 1) * d], &other_vecs[j * d..(j + 1) * d]))
                .collect();
            let row_cost = |u: usize, products: &[f64]| -> f64 {
                (0..other_n)
                    .map(|j| (view.get(i, j) - products[j] * theta_at(u, other_labels[j])).powi(2))
                    .sum()
            };
            if opts.update_labels && k > 1 {
                let current = own_labels[i];
                let mut best = (current, row_cost(current, &products));
                for u in 0..k {
                    if u == current {
                        continue;
                    }
                    let c = row_cost(u, &products);
                    if c < best.1 - SWITCH_TOL {
                        best = (u, c);
                    }
                }
                if best.0 != current {
                    own_labels[i] = best.0;
                    changed = true;
                }
            }
            if opts.update_vectors {
                let u = own_labels[i];
                // Least squares in b with design rows z_j = θ_{u,v_j} d_j.
                let mut gram = DMatrix::<f64>::zeros(d, d);
                let mut rhs = DVector::<f64>::zeros(d);
                for j in 0..other_n {
                    let th = theta_at(u, other_labels[j]);
                    let z = &other_vecs[j * d..(j + 1) * d];
                    let aij = view.get(i, j);
                    for p in 0..d {
                        rhs[p] += th * z[p] * aij;
                        for q in 0..d {
                            gram[(p, q)] += th * th * z[p] * z[q];
                        }
                    }
                }
                let solved = gram.clone().cholesky().map(|c| c.solve(&rhs)).or_else(|| gram.pseudo_inverse(1e-12).ok().map(|pinv| pinv * &rhs));
                if let Some(sol) = solved {
                    let mut cand: Vec<f64> = sol.iter().copied().collect();
                    project_to_cap(&mut cand);
                    let old_cost = row_cost(u, &products);
                    let new_products: Vec<f64> = (0..other_n).map(|j| dot(&cand, &other_vecs[j * d..(j + 1) * d])).collect();
                    let new_cost = row_cost(u, &new_products);
                    if new_cost < old_cost {
                        own_vecs[i * d..(i + 1) * d].copy_from_slice(&cand);
                    }
                }
            }
        }
        changed
    }
}

/// Run the alternating fit from `state`. Returns the risk trace: the initial
/// risk (after the first θ update when enabled), then one entry per sweep.
pub fn run_alternating_fit(a: &DMatrix<f64>, state: &mut FitState, opts: FitOptions) -> Vec<f64> {
    if opts.update_theta {
        state.update_theta(a);
    }
    let mut trace = vec![state.risk(a)];
    for _ in 0..opts.max_iters {
        let rows_changed = state.update_side(a, false, &opts);
        let cols_changed = state.update_side(a, true, &opts);
        if opts.update_theta {
            state.update_theta(a);
        }
        let r = state.risk(a);
        let last = *trace.last().unwrap();
        trace.push(r);
        if !rows_changed && !cols_changed && last - r <= SWITCH_TOL {
            break;
        }
    }
    trace
}

#[derive(Debug, Clone)]
pub struct DotProductFit {
    pub row: GeneralLatent,
    pub col: GeneralLatent,
    pub theta: Theta,
    pub trace: Vec<f64>,
}

/// Initial vectors from the rank-`d` SVD: `U√Σ` and `V√Σ` with column signs
/// chosen so each singular vector sums to a nonnegative value, then projected onto `𝒟`.
fn svd_vectors(a: &DMatrix<f64>, d: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (m, n) = a.shape();
    let svd = truncated_svd(a, d.min(m.min(n)), seed)?;
    let r = svd.sigma.len();
    let mut rows = vec![0.0; m * d];
    let mut cols = vec![0.0; n * d];
    for c in 0..r {
        let sign = if svd.u.column(c).sum() + svd.v.column(c).sum() < 0.0 { -1.0 } else { 1.0 };
        let s = svd.sigma[c].sqrt();
        for i in 0..m {
            rows[i * d + c] = sign * svd.u[(i, c)] * s;
        }
        for j in 0..n {
            cols[j * d + c] = sign * svd.v[(j, c)] * s;
        }
    }
    rows.chunks_mut(d).for_each(project_to_cap);
    cols.chunks_mut(d).for_each(project_to_cap);
    Ok((rows, cols))
}

/// Fit families 2–4 by alternating label reassignment, projected least-squares
/// vector updates and closed-form θ. Family 3 uses one label and θ ≡ 1.
pub fn fit_dot_product_model(
    a: &DMatrix<f64>,
    k: usize,
    d: usize,
    family: ModelFamily,
    seed: u64,
    max_iters: usize,
) -> Result<DotProductFit> {
    if family == ModelFamily::Blockmodel {
        return Err(Error::InvalidArgument("family 1 is fitted with fit_blockmodel_als".into()));
    }
    family.check_dim(d)?;
    let k = if family == ModelFamily::DotProduct { 1 } else { k };
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let (m, n) = a.shape();
    let labels = spectral_cocluster(a, k, derive_seed(seed, &[10]))?;
    let (row_vectors, col_vectors) = svd_vectors(a, d, derive_seed(seed, &[11]))?;
    let mut state = FitState {
        row_labels: labels.rows,
        col_labels: labels.cols,
        row_vectors,
        col_vectors,
        theta: DMatrix::from_element(k, k, 1.0),
        k,
        d,
    };
    let opts = FitOptions {
        update_labels: family != ModelFamily::DotProduct,
        update_vectors: true,
        update_theta: family != ModelFamily::DotProduct,
        max_iters,
    };
    let trace = run_alternating_fit(a, &mut state, opts);
    debug_assert_eq!(state.row_vectors.len(), m * d);
    debug_assert_eq!(state.col_vectors.len(), n * d);
    Ok(DotProductFit {
        row: GeneralLatent::new(state.row_labels, state.row_vectors, k, d)?,
        col: GeneralLatent::new(state.col_labels, state.col_vectors, k, d)?,
        theta: Theta::new(state.theta)?,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::stats::{empirical_risk, ModelFamily};
    use rand::Rng as _;

    fn planted(m: usize, n: usize, theta: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>, Vec<usize>) {
        let k = theta.nrows();
        let rows: Vec<usize> = (0..m).map(|i| i * k / m).collect();
        let cols: Vec<usize> = (0..n).map(|j| j * k / n).collect();
        (DMatrix::from_fn(m, n, |i, j| theta[(rows[i], cols[j])]), rows, cols)
    }

    fn non_increasing(trace: &[f64]) -> bool {
        trace.windows(2).all(|w| w[1] <= w[0])
    }

    #[test]
    fn spectral_single_cluster_and_determinism() {
        let a = DMatrix::from_fn(10, 12, |i, j| ((i + j) % 2) as f64);
        let l = spectral_cocluster(&a, 1, 3).unwrap();
        assert!(l.rows.iter().all(|&s| s == 0) && l.cols.iter().all(|&t| t == 0));
        assert_eq!(spectral_cocluster(&a, 2, 4).unwrap(), spectral_cocluster(&a, 2, 4).unwrap());
        assert!(spectral_cocluster(&a, 11, 0).is_err());
    }

    #[test]
    fn all_ones_converges_in_one_sweep() {
        let a = DMatrix::from_element(8, 6, 1.0);
        let init = CoClusterLabels::new((0..8).map(|i| i % 2).collect(), (0..6).map(|j| j % 2).collect(), 2).unwrap();
        let fit = fit_blockmodel_als(&a, 2, &init, 50).unwrap();
        assert!(fit.theta.matrix().iter().all(|&v| v == 1.0));
        assert_eq!(*fit.trace.last().unwrap(), 0.0);
        assert_eq!(fit.trace.len(), 2);
    }

    #[test]
    fn planted_labels_are_a_fixed_point() {
        let th = DMatrix::from_row_slice(2, 2, &[0.8, 0.3, 0.1, 0.6]);
        let (w, rows, cols) = planted(20, 16, &th);
        let init = CoClusterLabels::new(rows.clone(), cols.clone(), 2).unwrap();
        let fit = fit_blockmodel_als(&w, 2, &init, 20).unwrap();
        assert_eq!(fit.labels.rows, rows);
        assert_eq!(fit.labels.cols, cols);
        assert!((fit.theta.matrix() - th).abs().max() < 1e-15);
    }

    #[test]
    fn als_trace_non_increasing_on_noise() {
        let mut rng = rng_from_seed(2);
        for seed in 0..5 {
            let a = DMatrix::from_fn(40, 30, |_, _| if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 });
            let init = spectral_cocluster(&a, 3, seed).unwrap();
            let fit = fit_blockmodel_als(&a, 3, &init, 100).unwrap();
            assert!(non_increasing(&fit.trace), "{:?}", fit.trace);
        }
    }

    #[test]
    fn rank_one_dot_product_is_reproduced() {
        let mut rng = rng_from_seed(7);
        let b: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..0.2)).collect();
        let d: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..0.2)).collect();
        let m = DMatrix::from_fn(20, 20, |i, j| b[i] * d[j]);
        let fit = fit_dot_product_model(&m, 1, 1, ModelFamily::DotProduct, 5, 50).unwrap();
        assert!(non_increasing(&fit.trace));
        for i in 0..20 {
            for j in 0..20 {
                let k = fit.row.vector(i)[0] * fit.col.vector(j)[0];
                assert!((k - m[(i, j)]).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn dot_product_fits_stay_in_cap_and_descend() {
        let mut rng = rng_from_seed(5);
        let a = DMatrix::from_fn(30, 25, |i, j| {
            let p = if (i < 15) == (j < 12) { 0.7 } else { 0.2 };
            if rng.random::<f64>() < p { 1.0 } else { 0.0 }
        });
        for (family, d) in [(ModelFamily::DegreeCorrected, 1), (ModelFamily::DotProduct, 2), (ModelFamily::DotProductBlock, 2)] {
            let fit = fit_dot_product_model(&a, 2, d, family, 1, 30).unwrap();
            assert!(non_increasing(&fit.trace), "{family:?}: {:?}", fit.trace);
            assert!(fit.row.max_norm() <= 1.0 && fit.col.max_norm() <= 1.0);
            let r = empirical_risk(&a, &fit.row, &fit.col, &fit.theta, family).unwrap();
            assert!((r - fit.trace.last().unwrap()).abs() < 1e-12);
        }
        assert!(fit_dot_product_model(&a, 2, 2, ModelFamily::DegreeCorrected, 1, 5).is_err());
    }

    #[test]
    fn unit_degrees_reduce_to_blockmodel_als() {
        let mut rng = rng_from_seed(9);
        let a = DMatrix::from_fn(30, 24, |i, j| {
            let p = if (i < 10) == (j < 8) { 0.75 } else { 0.25 };
            if rng.random::<f64>() < p { 1.0 } else { 0.0 }
        });
        let init = spectral_cocluster(&a, 3, 0).unwrap();
        let als = fit_blockmodel_als(&a, 3, &init, 50).unwrap();
        let mut state = FitState {
            row_labels: init.rows.clone(),
            col_labels: init.cols.clone(),
            row_vectors: vec![1.0; 30],
            col_vectors: vec![1.0; 24],
            theta: DMatrix::zeros(3, 3),
            k: 3,
            d: 1,
        };
        let opts = FitOptions {
            update_labels: true,
            update_vectors: false,
            update_theta: true,
            max_iters: 50,
        };
        let trace = run_alternating_fit(&a, &mut state, opts);
        assert_eq!(trace.len(), als.trace.len());
        for (x, y) in trace.iter().zip(&als.trace) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert_eq!(state.row_labels, als.labels.rows);
    }
}
