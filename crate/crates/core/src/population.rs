//! Exact population quantities for step graphons.
//!
//! A measurable labelling of one graphon axis is represented by how much of
//! each cell's length goes to each label ([`AllocationMap`]), or, when latent
//! vectors are involved, by an explicit left-to-right tiling of every cell
//! ([`PopulationLatentMap`]). Every integral below is a finite sum over cells.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graphon::{BipartiteSample, StepGraphon};
use crate::qp::{solve_simplex_product_qp, QpOptions};
use crate::stats::{
    check_labels, check_latents, empirical_risk, kernel_unchecked, proportions, GeneralLatent, LatentRef,
    ModelFamily, Theta,
};
use crate::textfmt::{flat, parse_sections, take, write_section};

const GRID_TOL: f64 = 1e-10;

/// Which axis of the graphon a labelling lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Row,
    Column,
}

fn check_grid(lengths: &[f64], widths: &[f64], what: &str) -> Result<()> {
    if lengths.len() != widths.len() || lengths.iter().zip(widths).any(|(a, b)| (a - b).abs() > GRID_TOL) {
        return Err(Error::ShapeMismatch(format!(
            "{what} cells do not match the graphon's {} cells",
            widths.len()
        )));
    }
    Ok(())
}

/// Fractional assignment of each cell's length across `K` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationMap {
    cell_lengths: Vec<f64>,
    mass: DMatrix<f64>,
}

impl AllocationMap {
    pub fn new(cell_lengths: Vec<f64>, mass: DMatrix<f64>) -> Result<Self> {
        if cell_lengths.is_empty() || mass.ncols() == 0 {
            return Err(Error::InvalidArgument("allocation needs at least one cell and one label".into()));
        }
        if mass.nrows() != cell_lengths.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} cell lengths but mass has {} rows",
                cell_lengths.len(),
                mass.nrows()
            )));
        }
        if let Some(&l) = cell_lengths.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument(format!("cell length {l} must be positive")));
        }
        if (cell_lengths.iter().sum::<f64>() - 1.0).abs() > GRID_TOL {
            return Err(Error::InvalidArgument("cell lengths must sum to 1".into()));
        }
        if let Some(&v) = mass.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("allocated mass {v} must be nonnegative")));
        }
        for (r, &len) in cell_lengths.iter().enumerate() {
            let s = mass.row(r).sum();
            if (s - len).abs() > GRID_TOL {
                return Err(Error::InvalidArgument(format!(
                    "cell {r} allocates {s} but has length {len}"
                )));
            }
        }
        Ok(Self { cell_lengths, mass })
    }

    /// Every cell assigned wholly to one label.
    pub fn from_cell_labels(cell_lengths: Vec<f64>, labels: &[usize], k: usize) -> Result<Self> {
        check_labels(labels, k)?;
        if labels.len() != cell_lengths.len() {
            return Err(Error::ShapeMismatch("one label per cell required".into()));
        }
        let mass = DMatrix::from_fn(cell_lengths.len(), k, |r, t| if labels[r] == t { cell_lengths[r] } else { 0.0 });
        Self::new(cell_lengths, mass)
    }

    /// Rebuild an allocation from realized intervals over the given cell breaks.
    pub fn from_intervals(breaks: &[f64], intervals: &[RealizedInterval], k: usize) -> Result<Self> {
        let lengths: Vec<f64> = breaks.windows(2).map(|w| w[1] - w[0]).collect();
        let mut mass = DMatrix::zeros(lengths.len(), k);
        for iv in intervals {
            if iv.label >= k || iv.cell >= lengths.len() {
                return Err(Error::InvalidArgument(format!("interval {iv:?} is outside the grid")));
            }
            mass[(iv.cell, iv.label)] += iv.end - iv.start;
        }
        Self::new(lengths, mass)
    }

    pub fn cell_lengths(&self) -> &[f64] {
        &self.cell_lengths
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn k(&self) -> usize {
        self.mass.ncols()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_lengths.len()
    }

    /// Label proportions `π_σ` (column sums of the mass matrix).
    pub fn proportions(&self) -> Vec<f64> {
        self.mass.row_sum().iter().copied().collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_section(&mut out, "cell_lengths", [self.cell_lengths.clone()]);
        write_section(
            &mut out,
            "mass",
            self.mass.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()),
        );
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let sections = parse_sections(text)?;
        let lengths = flat(take(&sections, "cell_lengths")?);
        let rows = &take(&sections, "mass")?.rows;
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::ShapeMismatch("ragged mass matrix".into()));
        }
        let mass = DMatrix::from_fn(rows.len(), k, |r, c| rows[r][c]);
        Self::new(lengths, mass)
    }
}

/// One subinterval `[start, end)` of cell `cell` carrying `label`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizedInterval {
    pub cell: usize,
    pub start: f64,
    pub end: f64,
    pub label: usize,
}

/// Subdivide each cell left to right into consecutive intervals, one per label
/// with positive mass, in increasing label order.
pub fn realize_partition(alloc: &AllocationMap) -> Vec<RealizedInterval> {
    let mut out = Vec::new();
    let mut cell_start = 0.0;
    for (cell, &len) in alloc.cell_lengths.iter().enumerate() {
        let mut pos = cell_start;
        for label in 0..alloc.k() {
            let m = alloc.mass[(cell, label)];
            if m > 0.0 {
                out.push(RealizedInterval {
                    cell,
                    start: pos,
                    end: pos + m,
                    label,
                });
                pos += m;
            }
        }
        cell_start += len;
    }
    out
}

/// A constant-latent subinterval of a cell, of length `length`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPiece {
    pub length: f64,
    pub label: usize,
    pub vector: Vec<f64>,
}

/// A piecewise-constant map from one graphon axis into `[K] × 𝒟`.
///
/// Each cell is tiled left to right by its pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationLatentMap {
    breaks: Vec<f64>,
    pieces: Vec<Vec<LatentPiece>>,
    k: usize,
    d: usize,
}

impl PopulationLatentMap {
    pub fn new(breaks: Vec<f64>, pieces: Vec<Vec<LatentPiece>>, k: usize, d: usize) -> Result<Self> {
        if breaks.len() != pieces.len() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} breaks need {} cells of pieces, got {}",
                breaks.len(),
                breaks.len().saturating_sub(1),
                pieces.len()
            )));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        for (cell, ps) in pieces.iter().enumerate() {
            let width = breaks[cell + 1] - breaks[cell];
            let total: f64 = ps.iter().map(|p| p.length).sum();
            if (total - width).abs() > GRID_TOL || ps.iter().any(|p| p.length < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "pieces of cell {cell} cover {total} but the cell has width {width}"
                )));
            }
            for p in ps {
                if p.label >= k {
                    return Err(Error::InvalidLabel {
                        index: cell,
                        label: p.label,
                        k,
                    });
                }
                if p.vector.len() != d {
                    return Err(Error::ShapeMismatch(format!("piece vector has length {}, expected {d}", p.vector.len())));
                }
                if d > 0 && !crate::stats::in_unit_cap(&p.vector) {
                    return Err(Error::InvalidLatent {
                        index: cell,
                        reason: format!("piece vector {:?} is outside the cap", p.vector),
                    });
                }
            }
        }
        Ok(Self { breaks, pieces, k, d })
    }

    /// Label-only map realizing an allocation.
    pub fn from_allocation(breaks: Vec<f64>, alloc: &AllocationMap) -> Result<Self> {
        Self::from_super_allocation(breaks, alloc, &[], 0)
    }

    /// Map realizing an allocation over super-labels `v · |points| + c`, where
    /// super-label `(v, c)` carries label `v` and vector `points[c]`.
    /// With an empty `points` list the allocation's labels are used directly.
    pub fn from_super_allocation(breaks: Vec<f64>, alloc: &AllocationMap, points: &[Vec<f64>], d: usize) -> Result<Self> {
        let lengths: Vec<f64> = breaks.windows(2).map(|w| w[1] - w[0]).collect();
        check_grid(alloc.cell_lengths(), &lengths, "allocation")?;
        let per = points.len().max(1);
        if alloc.k() % per != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} super-labels are not a multiple of {per} cover points",
                alloc.k()
            )));
        }
        let k = alloc.k() / per;
        let mut pieces = vec![Vec::new(); lengths.len()];
        for iv in realize_partition(alloc) {
            let (label, vector) = if points.is_empty() {
                (iv.label, vec![0.0; d])
            } else {
                (iv.label / per, points[iv.label % per].clone())
            };
            pieces[iv.cell].push(LatentPiece {
                length: iv.end - iv.start,
                label,
                vector,
            });
        }
        Self::new(breaks, pieces, k, d)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn pieces(&self) -> &[Vec<LatentPiece>] {
        &self.pieces
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// The latent value at coordinate `z`; `z = 1` maps to the last piece.
    pub fn at(&self, z: f64) -> LatentRef<'_> {
        let cells = self.pieces.len();
        let cell = (self.breaks.partition_point(|&b| b <= z).max(1) - 1).min(cells - 1);
        let ps = &self.pieces[cell];
        let mut pos = self.breaks[cell];
        let mut chosen = ps.iter().rev().find(|p| p.length > 0.0).unwrap_or(&ps[0]);
        for p in ps {
            if p.length > 0.0 && z < pos + p.length {
                chosen = p;
                break;
            }
            pos += p.length;
        }
        LatentRef::new(chosen.label, &chosen.vector)
    }

    /// Label proportions.
    pub fn proportions(&self) -> Vec<f64> {
        let mut pi = vec![0.0; self.k];
        for p in self.pieces.iter().flatten() {
            pi[p.label] += p.length;
        }
        pi
    }
}

/// Population block quantities `Φ_ω(σ, τ)`, `π_σ`, `π_τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationBlocks {
    pub phi: DMatrix<f64>,
    pub pi_row: Vec<f64>,
    pub pi_col: Vec<f64>,
}

/// `phi[s][t] = Σ_ab values[a][b] · row.mass[a][s] · col.mass[b][t]`.
pub fn blocked_graphon(g: &StepGraphon, row: &AllocationMap, col: &AllocationMap) -> Result<PopulationBlocks> {
    check_grid(row.cell_lengths(), &g.row_widths(), "row allocation")?;
    check_grid(col.cell_lengths(), &g.col_widths(), "column allocation")?;
    if row.k() != col.k() {
        return Err(Error::ShapeMismatch(format!("row K={} but column K={}", row.k(), col.k())));
    }
    let phi = row.mass().transpose() * g.values() * col.mass();
    Ok(PopulationBlocks {
        phi,
        pi_row: row.proportions(),
        pi_col: col.proportions(),
    })
}

/// `Φ_ω(S, τ)`: rows averaged over the sampled `x`, columns integrated.
pub fn blocked_graphon_mixed(g: &StepGraphon, x: &[f64], s: &[usize], col: &AllocationMap) -> Result<DMatrix<f64>> {
    check_grid(col.cell_lengths(), &g.col_widths(), "column allocation")?;
    if x.len() != s.len() {
        return Err(Error::ShapeMismatch(format!("{} coordinates but {} labels", x.len(), s.len())));
    }
    let k = col.k();
    check_labels(s, k)?;
    let counts = row_cell_label_counts(g, x, s, k)?;
    let m = x.len().max(1) as f64;
    Ok((counts.transpose() * g.values() * col.mass()) / m)
}

/// `counts[r][s] = #{i : x_i in row cell r, S_i = s}`.
fn row_cell_label_counts(g: &StepGraphon, x: &[f64], s: &[usize], k: usize) -> Result<DMatrix<f64>> {
    let mut counts = DMatrix::zeros(g.n_row_cells(), k);
    for (&xi, &si) in x.iter().zip(s) {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::OutOfRange { what: "x", value: xi });
        }
        counts[(g.row_cell(xi), si)] += 1.0;
    }
    Ok(counts)
}

fn col_cell_label_counts(g: &StepGraphon, y: &[f64], t: &[usize], k: usize) -> Result<DMatrix<f64>> {
    let mut counts = DMatrix::zeros(g.n_col_cells(), k);
    for (&yj, &tj) in y.iter().zip(t) {
        if !(0.0..=1.0).contains(&yj) {
            return Err(Error::OutOfRange { what: "y", value: yj });
        }
        counts[(g.col_cell(yj), tj)] += 1.0;
    }
    Ok(counts)
}

/// Row side of a population risk: sampled rows with latents, or a population map.
#[derive(Debug, Clone, Copy)]
pub enum RowSide<'a> {
    Sample { x: &'a [f64], latent: &'a GeneralLatent },
    Map(&'a PopulationLatentMap),
}

fn check_map_family(map: &PopulationLatentMap, theta: &Theta, family: ModelFamily) -> Result<()> {
    if family.uses_vectors() {
        family.check_dim(map.d())?;
    }
    if family.uses_labels() && map.k() > theta.k() {
        return Err(Error::ShapeMismatch(format!("map uses K={} but theta is {}x{}", map.k(), theta.k(), theta.k())));
    }
    Ok(())
}

/// Squared error of the fitted kernel against `ω` at row cell `r` for one row
/// latent, integrated over the column map.
fn row_cost(g: &StepGraphon, r: usize, s: LatentRef<'_>, col: &PopulationLatentMap, theta: &Theta, family: ModelFamily) -> f64 {
    let mut total = 0.0;
    for (b, ps) in col.pieces().iter().enumerate() {
        let w = g.values()[(r, b)];
        for p in ps {
            let diff = w - kernel_unchecked(s, LatentRef::new(p.label, &p.vector), theta, family);
            total += p.length * diff * diff;
        }
    }
    total
}

/// `R_ω` for the population map pair, or the mixed version averaging over sampled rows.
pub fn population_risk(
    g: &StepGraphon,
    row: RowSide<'_>,
    col: &PopulationLatentMap,
    theta: &Theta,
    family: ModelFamily,
) -> Result<f64> {
    check_grid(&col.breaks().windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>(), &g.col_widths(), "column map")?;
    check_map_family(col, theta, family)?;
    match row {
        RowSide::Sample { x, latent } => {
            if x.len() != latent.len() {
                return Err(Error::ShapeMismatch(format!("{} coordinates but {} latents", x.len(), latent.len())));
            }
            if family.uses_vectors() && latent.d() != col.d() {
                return Err(Error::ShapeMismatch("row and column latent dimensions differ".into()));
            }
            if family.uses_labels() && latent.k() > theta.k() {
                return Err(Error::ShapeMismatch("row latents use more labels than theta".into()));
            }
            let mut total = 0.0;
            for (i, &xi) in x.iter().enumerate() {
                if !(0.0..=1.0).contains(&xi) {
                    return Err(Error::OutOfRange { what: "x", value: xi });
                }
                total += row_cost(g, g.row_cell(xi), latent.get(i), col, theta, family);
            }
            Ok(total / x.len().max(1) as f64)
        }
        RowSide::Map(rm) => {
            check_grid(&rm.breaks().windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>(), &g.row_widths(), "row map")?;
            check_map_family(rm, theta, family)?;
            if family.uses_vectors() && rm.d() != col.d() {
                return Err(Error::ShapeMismatch("row and column latent dimensions differ".into()));
            }
            let mut total = 0.0;
            for (a, ps) in rm.pieces().iter().enumerate() {
                for p in ps {
                    total += p.length * row_cost(g, a, LatentRef::new(p.label, &p.vector), col, theta, family);
                }
            }
            Ok(total)
        }
    }
}

/// The label minimising `∫ (ω(x,y) − ω_θ((s, row_vector), τ(y)))² dy`,
/// smallest label on ties.
pub fn greedy_sigma_star(
    g: &StepGraphon,
    tau: &PopulationLatentMap,
    theta: &Theta,
    family: ModelFamily,
    x: f64,
    row_vector: &[f64],
) -> Result<usize> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfRange { what: "x", value: x });
    }
    check_map_family(tau, theta, family)?;
    if family.uses_vectors() && row_vector.len() != tau.d() {
        return Err(Error::ShapeMismatch("row vector dimension differs from the column map".into()));
    }
    let r = g.row_cell(x);
    let labels = if family.uses_labels() { theta.k() } else { 1 };
    let mut best = (0, f64::INFINITY);
    for s in 0..labels {
        let c = row_cost(g, r, LatentRef::new(s, row_vector), tau, theta, family);
        if c < best.1 {
            best = (s, c);
        }
    }
    Ok(best.0)
}

/// Outcome of matching observed labels to a population co-cluster.
#[derive(Debug, Clone)]
pub struct PopulationMatch {
    pub alloc: AllocationMap,
    /// `‖G_T − G_τ‖²` (column side) or `‖F_S − F_σ‖²` (row side) at the optimum.
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// Design and target of the matching least-squares problem.
///
/// Column side: rows of the design are the occupied row cells `r` (weight
/// `√(c_r/m)`) followed by a row of ones for the proportions. Row side: rows
/// are the column cells `c` (weight `√width_c`) followed by the same.
pub fn matching_problem(
    g: &StepGraphon,
    sample: &BipartiteSample,
    labels: &[usize],
    k: usize,
    side: Side,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<f64>)> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    check_labels(labels, k)?;
    let v = g.values();
    let (m, n) = (sample.m(), sample.n());
    match side {
        Side::Column => {
            if labels.len() != n {
                return Err(Error::ShapeMismatch(format!("{} column labels for n={n}", labels.len())));
            }
            let col_counts = col_cell_label_counts(g, &sample.y, labels, k)?;
            // g_{T=t}(i) for x_i in row cell r is the same for every i in the cell.
            let g_cell = (v * &col_counts) / n as f64;
            let mut row_occupancy = vec![0usize; g.n_row_cells()];
            for &xi in &sample.x {
                row_occupancy[g.row_cell(xi)] += 1;
            }
            let occupied: Vec<usize> = (0..g.n_row_cells()).filter(|&r| row_occupancy[r] > 0).collect();
            let rows = occupied.len() + 1;
            let mut design = DMatrix::zeros(rows, g.n_col_cells());
            let mut target = DMatrix::zeros(rows, k);
            for (q, &r) in occupied.iter().enumerate() {
                let w = (row_occupancy[r] as f64 / m as f64).sqrt();
                for b in 0..g.n_col_cells() {
                    design[(q, b)] = w * v[(r, b)];
                }
                for t in 0..k {
                    target[(q, t)] = w * g_cell[(r, t)];
                }
            }
            let pi = proportions(labels, k);
            for b in 0..g.n_col_cells() {
                design[(rows - 1, b)] = 1.0;
            }
            for t in 0..k {
                target[(rows - 1, t)] = pi[t];
            }
            Ok((design, target, g.col_widths()))
        }
        Side::Row => {
            if labels.len() != m {
                return Err(Error::ShapeMismatch(format!("{} row labels for m={m}", labels.len())));
            }
            let counts = row_cell_label_counts(g, &sample.x, labels, k)?;
            // f_{S=s} on column cell c.
            let f = (v.transpose() * &counts) / m as f64;
            let widths = g.col_widths();
            let rows = g.n_col_cells() + 1;
            let mut design = DMatrix::zeros(rows, g.n_row_cells());
            let mut target = DMatrix::zeros(rows, k);
            for c in 0..g.n_col_cells() {
                let w = widths[c].sqrt();
                for a in 0..g.n_row_cells() {
                    design[(c, a)] = w * v[(a, c)];
                }
                for s in 0..k {
                    target[(c, s)] = w * f[(c, s)];
                }
            }
            let pi = proportions(labels, k);
            for a in 0..g.n_row_cells() {
                design[(rows - 1, a)] = 1.0;
            }
            for s in 0..k {
                target[(rows - 1, s)] = pi[s];
            }
            Ok((design, target, g.row_widths()))
        }
    }
}

/// The allocation minimising `‖G_T − G_τ‖²` (column side) or `‖F_S − F_σ‖²` (row side).
pub fn match_population_cocluster(
    g: &StepGraphon,
    sample: &BipartiteSample,
    labels: &[usize],
    k: usize,
    side: Side,
) -> Result<PopulationMatch> {
    let (design, target, widths) = matching_problem(g, sample, labels, k, side)?;
    let sol = solve_simplex_product_qp(&design, &target, &widths, QpOptions::default())?;
    // Renormalise rows so the allocation is exact despite rounding in the solver.
    let mut mass = sol.mass;
    for (r, &w) in widths.iter().enumerate() {
        let s = mass.row(r).sum();
        if s > 0.0 {
            for t in 0..k {
                mass[(r, t)] *= w / s;
            }
        }
    }
    Ok(PopulationMatch {
        alloc: AllocationMap::new(widths, mass)?,
        objective: sol.objective,
        gap: sol.gap,
        iterations: sol.iterations,
    })
}

/// Additive constants aligning empirical and population risks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenteringConstants {
    /// `(1/mn) Σ (A_ij² − W_ij²)`.
    pub c1: f64,
    /// `(1/mn) Σ W_ij² − (1/m) Σ_i ∫ ω(x_i, y)² dy`.
    pub c2: f64,
    /// `(1/m) Σ_i ∫ ω(x_i, y)² dy − ∫∫ ω²`.
    pub c3: f64,
}

/// The centering constants. They depend only on the sample and the graphon,
/// not on latents or `θ`.
pub fn centering_constants(sample: &BipartiteSample, g: &StepGraphon) -> Result<CenteringConstants> {
    let (m, n) = (sample.m(), sample.n());
    if sample.w.shape() != (m, n) || sample.a.shape() != (m, n) {
        return Err(Error::ShapeMismatch("sample matrices disagree with coordinates".into()));
    }
    let mn = (m * n).max(1) as f64;
    let a2 = sample.a.iter().map(|v| v * v).sum::<f64>() / mn;
    let w2 = sample.w.iter().map(|v| v * v).sum::<f64>() / mn;
    let col_w = g.col_widths();
    let row_w = g.row_widths();
    let v = g.values();
    let row_int: Vec<f64> = (0..g.n_row_cells())
        .map(|r| (0..g.n_col_cells()).map(|b| col_w[b] * v[(r, b)].powi(2)).sum())
        .collect();
    let mut mixed = 0.0;
    for &xi in &sample.x {
        mixed += row_int[g.row_cell(xi)];
    }
    mixed /= m.max(1) as f64;
    let full: f64 = (0..g.n_row_cells()).map(|r| row_w[r] * row_int[r]).sum();
    Ok(CenteringConstants {
        c1: a2 - w2,
        c2: w2 - mixed,
        c3: mixed - full,
    })
}

/// Group latents into super-labels: one per distinct `(label, vector)` pair,
/// numbered in order of first appearance.
fn super_labels(latent: &GeneralLatent, family: ModelFamily) -> (Vec<usize>, Vec<usize>) {
    let mut index: HashMap<(usize, Vec<u64>), usize> = HashMap::new();
    let mut reps = Vec::new();
    let labels = (0..latent.len())
        .map(|i| {
            let label = if family.uses_labels() { latent.labels()[i] } else { 0 };
            let key: Vec<u64> = if family.uses_vectors() {
                latent.vector(i).iter().map(|v| v.to_bits()).collect()
            } else {
                Vec::new()
            };
            let next = index.len();
            *index.entry((label, key)).or_insert_with(|| {
                reps.push(i);
                next
            })
        })
        .collect();
    (labels, reps)
}

/// `R_A − R_W − C1 + 2 Σ_st (Φ_A − Φ_W)_st θ̄_st` over the super-labels of the
/// (quantized) latents; zero up to rounding.
pub fn centering_identity_residual(
    sample: &BipartiteSample,
    g: &StepGraphon,
    s_bar: &GeneralLatent,
    t_bar: &GeneralLatent,
    theta: &Theta,
    family: ModelFamily,
) -> Result<f64> {
    check_latents(s_bar, t_bar, theta, family)?;
    let r_a = empirical_risk(&sample.a, s_bar, t_bar, theta, family)?;
    let r_w = empirical_risk(&sample.w, s_bar, t_bar, theta, family)?;
    let c = centering_constants(sample, g)?;
    let (sl, sr) = super_labels(s_bar, family);
    let (tl, tr) = super_labels(t_bar, family);
    let diff = &sample.a - &sample.w;
    let mut sums = DMatrix::<f64>::zeros(sr.len(), tr.len());
    for (i, &u) in sl.iter().enumerate() {
        for (j, &v) in tl.iter().enumerate() {
            sums[(u, v)] += diff[(i, j)];
        }
    }
    let mn = (sample.m() * sample.n()).max(1) as f64;
    let mut cross = 0.0;
    for (u, &i) in sr.iter().enumerate() {
        for (v, &j) in tr.iter().enumerate() {
            cross += sums[(u, v)] / mn * kernel_unchecked(s_bar.get(i), t_bar.get(j), theta, family);
        }
    }
    Ok(r_a - r_w - c.c1 + 2.0 * cross)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::sample_bipartite;

    fn two_by_two() -> StepGraphon {
        StepGraphon::new(
            vec![0.0, 0.5, 1.0],
            vec![0.0, 0.5, 1.0],
            DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]),
        )
        .unwrap()
    }

    #[test]
    fn allocation_validation_and_text() {
        assert!(AllocationMap::new(vec![0.5, 0.5], DMatrix::from_row_slice(2, 2, &[0.2, 0.3, 0.5, 0.1])).is_err());
        assert!(AllocationMap::new(vec![1.0], DMatrix::from_row_slice(1, 2, &[-0.1, 1.1])).is_err());
        let a = AllocationMap::new(vec![0.25, 0.75], DMatrix::from_row_slice(2, 2, &[0.1, 0.15, 0.7, 0.05])).unwrap();
        assert_eq!(AllocationMap::from_text(&a.to_text()).unwrap(), a);
        let pi = a.proportions();
        assert!((pi[0] - 0.8).abs() < 1e-15 && (pi[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn realize_examples() {
        let a = AllocationMap::new(vec![1.0], DMatrix::from_row_slice(1, 3, &[0.3, 0.0, 0.7])).unwrap();
        let ivs = realize_partition(&a);
        assert_eq!(ivs.len(), 2);
        assert_eq!((ivs[0].start, ivs[0].end, ivs[0].label), (0.0, 0.3, 0));
        assert_eq!((ivs[1].start, ivs[1].end, ivs[1].label), (0.3, 1.0, 2));
        let back = AllocationMap::from_intervals(&[0.0, 1.0], &ivs, 3).unwrap();
        assert!((back.mass() - a.mass()).abs().max() < 1e-12);
    }

    #[test]
    fn constant_graphon_blocks_separate() {
        let g = StepGraphon::constant(0.3).unwrap();
        let row = AllocationMap::new(vec![1.0], DMatrix::from_row_slice(1, 2, &[0.4, 0.6])).unwrap();
        let col = AllocationMap::new(vec![1.0], DMatrix::from_row_slice(1, 2, &[0.9, 0.1])).unwrap();
        let b = blocked_graphon(&g, &row, &col).unwrap();
        for s in 0..2 {
            for t in 0..2 {
                assert!((b.phi[(s, t)] - 0.3 * b.pi_row[s] * b.pi_col[t]).abs() < 1e-15);
            }
        }
        let mixed = blocked_graphon_mixed(&g, &[0.1, 0.5, 0.9], &[0, 1, 1], &col).unwrap();
        assert!((mixed[(1, 0)] - 0.3 * (2.0 / 3.0) * 0.9).abs() < 1e-15);
    }

    #[test]
    fn aligned_blockmodel_blocks() {
        let g = two_by_two();
        let row = AllocationMap::from_cell_labels(vec![0.5, 0.5], &[0, 1], 2).unwrap();
        let b = blocked_graphon(&g, &row, &row).unwrap();
        assert!((b.phi[(0, 0)] - 0.9 * 0.25).abs() < 1e-15);
        assert!((b.phi[(0, 1)] - 0.1 * 0.25).abs() < 1e-15);
        assert!(blocked_graphon(&g, &AllocationMap::new(vec![1.0], DMatrix::from_element(1, 2, 0.5)).unwrap(), &row).is_err());
    }

    #[test]
    fn mixed_single_row() {
        let g = two_by_two();
        let col = AllocationMap::from_cell_labels(vec![0.5, 0.5], &[0, 0], 2).unwrap();
        let phi = blocked_graphon_mixed(&g, &[0.7], &[0], &col).unwrap();
        assert!((phi[(0, 0)] - (0.1 * 0.5 + 0.9 * 0.5)).abs() < 1e-15);
        assert_eq!(phi[(0, 1)] + phi[(1, 0)] + phi[(1, 1)], 0.0);
    }

    #[test]
    fn risk_examples() {
        let g = StepGraphon::constant(0.4).unwrap();
        let col = PopulationLatentMap::from_allocation(
            vec![0.0, 1.0],
            &AllocationMap::new(vec![1.0], DMatrix::from_row_slice(1, 2, &[0.5, 0.5])).unwrap(),
        )
        .unwrap();
        let p = Theta::new(DMatrix::from_element(2, 2, 0.4)).unwrap();
        let q = Theta::new(DMatrix::from_element(2, 2, 0.1)).unwrap();
        let r0 = population_risk(&g, RowSide::Map(&col), &col, &p, ModelFamily::Blockmodel).unwrap();
        assert!(r0.abs() < 1e-15);
        let r1 = population_risk(&g, RowSide::Map(&col), &col, &q, ModelFamily::Blockmodel).unwrap();
        assert!((r1 - 0.09).abs() < 1e-15);
        let lat = GeneralLatent::labels_only(vec![0, 1, 1], 2).unwrap();
        let r2 = population_risk(&g, RowSide::Sample { x: &[0.1, 0.2, 0.9], latent: &lat }, &col, &q, ModelFamily::Blockmodel)
            .unwrap();
        assert!((r2 - 0.09).abs() < 1e-15);
    }

    #[test]
    fn greedy_recovers_block_and_breaks_ties_low() {
        let g = two_by_two();
        let tau = PopulationLatentMap::from_allocation(
            vec![0.0, 0.5, 1.0],
            &AllocationMap::from_cell_labels(vec![0.5, 0.5], &[0, 1], 2).unwrap(),
        )
        .unwrap();
        let th = Theta::new(g.values().clone()).unwrap();
        assert_eq!(greedy_sigma_star(&g, &tau, &th, ModelFamily::Blockmodel, 0.2, &[]).unwrap(), 0);
        assert_eq!(greedy_sigma_star(&g, &tau, &th, ModelFamily::Blockmodel, 0.8, &[]).unwrap(), 1);
        let tie = Theta::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5])).unwrap();
        assert_eq!(greedy_sigma_star(&g, &tau, &tie, ModelFamily::Blockmodel, 0.8, &[]).unwrap(), 0);
    }

    #[test]
    fn constant_graphon_match_is_exact() {
        let g = StepGraphon::constant(0.6).unwrap();
        let sample = sample_bipartite(&g, 20, 30, 1).unwrap();
        let t: Vec<usize> = (0..30).map(|j| j % 3).collect();
        let res = match_population_cocluster(&g, &sample, &t, 3, Side::Column).unwrap();
        assert!(res.objective < 1e-8);
        let pi = res.alloc.proportions();
        for k in 0..3 {
            assert!((pi[k] - 1.0 / 3.0).abs() < 1e-4);
        }
    }

    #[test]
    fn single_label_match_is_forced() {
        let g = StepGraphon::four_block();
        let sample = sample_bipartite(&g, 40, 50, 2).unwrap();
        let res = match_population_cocluster(&g, &sample, &vec![0; 50], 1, Side::Column).unwrap();
        assert!((res.alloc.proportions()[0] - 1.0).abs() < 1e-12);
        // ‖(1/n) W 1 / √m − g_τ/√m‖² + 0 in closed form.
        let m = sample.m() as f64;
        let cw = g.col_widths();
        let mut expect = 0.0;
        for i in 0..sample.m() {
            let gi = sample.w.row(i).sum() / sample.n() as f64;
            let r = g.row_cell(sample.x[i]);
            let gt: f64 = (0..g.n_col_cells()).map(|b| g.values()[(r, b)] * cw[b]).sum();
            expect += (gi - gt).powi(2) / m;
        }
        assert!((res.objective - expect).abs() < 1e-10);
    }

    #[test]
    fn centering_constants_degenerate_and_constant() {
        let g = two_by_two().clone();
        let binary = StepGraphon::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0], DMatrix::from_row_slice(2, 1, &[1.0, 0.0])).unwrap();
        let s = sample_bipartite(&binary, 10, 12, 3).unwrap();
        assert_eq!(centering_constants(&s, &binary).unwrap().c1, 0.0);
        let c = StepGraphon::constant(0.35).unwrap();
        let s = sample_bipartite(&c, 10, 12, 3).unwrap();
        assert!(centering_constants(&s, &c).unwrap().c2.abs() < 1e-15);
        let s = sample_bipartite(&g, 15, 12, 4).unwrap();
        let lat_s = GeneralLatent::labels_only((0..15).map(|i| i % 2).collect(), 2).unwrap();
        let lat_t = GeneralLatent::labels_only((0..12).map(|j| j % 2).collect(), 2).unwrap();
        let th = Theta::new(DMatrix::from_row_slice(2, 2, &[0.3, 0.6, 0.2, 0.8])).unwrap();
        let res = centering_identity_residual(&s, &g, &lat_s, &lat_t, &th, ModelFamily::Blockmodel).unwrap();
        assert!(res.abs() < 1e-12);
    }

    #[test]
    fn latent_map_lookup() {
        let alloc = AllocationMap::new(vec![0.5, 0.5], DMatrix::from_row_slice(2, 2, &[0.2, 0.3, 0.0, 0.5])).unwrap();
        let map = PopulationLatentMap::from_allocation(vec![0.0, 0.5, 1.0], &alloc).unwrap();
        assert_eq!(map.at(0.1).label, 0);
        assert_eq!(map.at(0.3).label, 1);
        assert_eq!(map.at(0.6).label, 1);
        assert_eq!(map.at(1.0).label, 1);
        assert_eq!(map.proportions(), alloc.proportions());
    }
}
