//! Least-squares over a product of scaled simplices.
//!
//! Minimises `‖target − design·M‖_F²` where row `p` of `M` (a `P × K` matrix)
//! is nonnegative and sums to `widths[p]`. Solved with away-step Frank–Wolfe:
//! the linear subproblem picks, per row, the label with the smallest gradient;
//! the away vertex picks, per row, the supported label with the largest one.
//! Each step is followed by a fully-corrective pass that re-solves the problem
//! exactly on the current support (plus the new vertices) through its KKT
//! system, dropping labels whose mass would turn negative.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    /// Stop once the Frank–Wolfe duality gap falls below this.
    pub gap_tol: f64,
    pub max_iters: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            max_iters: 50_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub mass: DMatrix<f64>,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// Objective value `‖target − design·mass‖_F²`.
pub fn qp_objective(design: &DMatrix<f64>, target: &DMatrix<f64>, mass: &DMatrix<f64>) -> f64 {
    (target - design * mass).norm_squared()
}

fn check_shapes(design: &DMatrix<f64>, target: &DMatrix<f64>, widths: &[f64]) -> Result<()> {
    if design.nrows() != target.nrows() || design.ncols() != widths.len() || target.ncols() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "design {}x{}, target {}x{}, {} widths",
            design.nrows(),
            design.ncols(),
            target.nrows(),
            target.ncols(),
            widths.len()
        )));
    }
    if let Some(&w) = widths.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument(format!("simplex width {w} must be nonnegative")));
    }
    Ok(())
}

fn argmin(row: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, v) in row.enumerate() {
        if v < best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Exact re-optimisation over the labels in `free`: solve for the step to the
/// face minimiser from the current gradient, then walk towards it, dropping
/// labels that block the step.
fn corrective_step(
    dtd: &DMatrix<f64>,
    grad: &DMatrix<f64>,
    widths: &[f64],
    mass: &mut DMatrix<f64>,
    free: &mut Vec<(usize, usize)>,
) {
    let cells: Vec<usize> = (0..widths.len()).filter(|&b| widths[b] > 0.0).collect();
    let mut cell_row = vec![usize::MAX; widths.len()];
    for (i, &b) in cells.iter().enumerate() {
        cell_row[b] = i;
    }
    let mut grad = grad.clone();
    for _ in 0..=free.len() {
        let nf = free.len();
        let size = nf + cells.len();
        let mut kkt = DMatrix::<f64>::zeros(size, size);
        let mut rhs = DVector::<f64>::zeros(size);
        for (i, &(bi, ki)) in free.iter().enumerate() {
            for (j, &(bj, kj)) in free.iter().enumerate() {
                if ki == kj {
                    kkt[(i, j)] = 2.0 * dtd[(bi, bj)];
                }
            }
            let r = nf + cell_row[bi];
            kkt[(i, r)] = 1.0;
            kkt[(r, i)] = 1.0;
            rhs[i] = -grad[(bi, ki)];
        }
        let svd = kkt.svd(true, true);
        let tol = 1e-13 * svd.singular_values.max();
        let Ok(sol) = svd.solve(&rhs, tol) else {
            return;
        };
        let mut step = 1.0f64;
        let mut blocking = None;
        for (i, &(b, k)) in free.iter().enumerate() {
            if sol[i] < 0.0 {
                let t = mass[(b, k)] / -sol[i];
                if t < step {
                    step = t;
                    blocking = Some(i);
                }
            }
        }
        let mut delta = DMatrix::<f64>::zeros(mass.nrows(), mass.ncols());
        for (i, &(b, k)) in free.iter().enumerate() {
            delta[(b, k)] = step * sol[i];
            mass[(b, k)] = (mass[(b, k)] + delta[(b, k)]).max(0.0);
        }
        grad += dtd * &delta * 2.0;
        match blocking {
            Some(i) => {
                let (b, k) = free.swap_remove(i);
                mass[(b, k)] = 0.0;
            }
            None => return,
        }
    }
}

fn support_with(mass: &DMatrix<f64>, extra: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut free: Vec<(usize, usize)> = Vec::new();
    for b in 0..mass.nrows() {
        for t in 0..mass.ncols() {
            if mass[(b, t)] > 0.0 || extra.contains(&(b, t)) {
                free.push((b, t));
            }
        }
    }
    free
}

/// Rescale each row onto its simplex after the corrective pass.
fn renormalize(mass: &mut DMatrix<f64>, widths: &[f64]) {
    for (b, &w) in widths.iter().enumerate() {
        let s = mass.row(b).sum();
        if s > 0.0 {
            let f = w / s;
            for v in mass.row_mut(b).iter_mut() {
                *v *= f;
            }
        }
    }
}

pub fn solve_simplex_product_qp(
    design: &DMatrix<f64>,
    target: &DMatrix<f64>,
    widths: &[f64],
    opts: QpOptions,
) -> Result<QpSolution> {
    check_shapes(design, target, widths)?;
    let p = widths.len();
    let k = target.ncols();

    // Start at the vertex chosen by the linear subproblem at M = 0.
    let grad0 = design.transpose() * target * -2.0;
    let mut mass = DMatrix::zeros(p, k);
    for b in 0..p {
        mass[(b, argmin(grad0.row(b).iter().copied()))] = widths[b];
    }

    let dtd = design.transpose() * design;
    let mut residual = target - design * &mass;
    let mut gap = f64::INFINITY;
    for iter in 0..opts.max_iters {
        let grad = design.transpose() * &residual * -2.0;

        let mut fw_dir = -mass.clone();
        let mut vertices = Vec::with_capacity(p);
        let mut away_dir = mass.clone();
        let mut away_max = f64::INFINITY;
        let mut away_moves = false;
        gap = 0.0;
        for b in 0..p {
            if widths[b] == 0.0 {
                continue;
            }
            let s = argmin(grad.row(b).iter().copied());
            fw_dir[(b, s)] += widths[b];
            vertices.push((b, s));
            let mut a = s;
            let mut worst = f64::NEG_INFINITY;
            for t in 0..k {
                if mass[(b, t)] > 0.0 && grad[(b, t)] > worst {
                    worst = grad[(b, t)];
                    a = t;
                }
            }
            away_dir[(b, a)] -= widths[b];
            let alpha = mass[(b, a)] / widths[b];
            if alpha < 1.0 {
                away_moves = true;
                away_max = away_max.min(alpha / (1.0 - alpha));
            }
        }
        for b in 0..p {
            if widths[b] > 0.0 {
                gap += grad.row(b).iter().zip(mass.row(b).iter()).map(|(g, m)| g * m).sum::<f64>();
                gap -= widths[b] * grad.row(b).iter().copied().fold(f64::INFINITY, f64::min);
            }
        }
        if gap <= opts.gap_tol {
            let objective = residual.norm_squared();
            return Ok(QpSolution {
                mass,
                objective,
                gap,
                iterations: iter,
            });
        }

        let fw_slope = -grad.component_mul(&fw_dir).sum();
        let away_slope = if away_moves { -grad.component_mul(&away_dir).sum() } else { f64::NEG_INFINITY };
        let (dir, gamma_max, is_away) = if fw_slope >= away_slope {
            (fw_dir, 1.0, false)
        } else {
            (away_dir, away_max, true)
        };
        let moved = design * &dir;
        let denom = moved.norm_squared();
        if denom <= 0.0 {
            break;
        }
        let gamma = (residual.dot(&moved) / denom).clamp(0.0, gamma_max);
        mass += &dir * gamma;
        residual -= &moved * gamma;
        if is_away && gamma == gamma_max {
            // Drop step: the away labels lose all their mass exactly.
            for b in 0..p {
                for t in 0..k {
                    if dir[(b, t)] < 0.0 && mass[(b, t)] <= 1e-15 * widths[b].max(1.0) {
                        mass[(b, t)] = 0.0;
                    }
                }
            }
        }
        for v in mass.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let before = qp_objective(design, target, &mass);
        let mut corrected = mass.clone();
        let mut free = support_with(&corrected, &vertices);
        corrective_step(&dtd, &(design.transpose() * (target - design * &mass) * -2.0), widths, &mut corrected, &mut free);
        renormalize(&mut corrected, widths);
        if qp_objective(design, target, &corrected) <= before {
            mass = corrected;
        }
        residual = target - design * &mass;
    }
    Err(Error::NotConverged {
        iterations: opts.max_iters,
        gap,
    })
}
