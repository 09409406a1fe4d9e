//! Profile vectors, support functions, ε-covers of the latent cap and the
//! latent CDF distance.
//!
//! Profile vectors live in a weighted Euclidean space. On the column side a
//! block holds `g_{T=t}(i)` for every sampled row `i` with weight `1/m`; on the
//! row side a block holds `f_{S=s}` on every column cell `c` with weight
//! `width_c`. `K` such blocks are followed by the `K` proportions (weight 1).

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graphon::{BipartiteSample, StepGraphon};
use crate::population::{AllocationMap, PopulationLatentMap, Side};
use crate::rng::rng_from_seed;
use crate::stats::{check_labels, project_to_cap, proportions, GeneralLatent};

/// A point of the profile space with its per-coordinate inner-product weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileVector {
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ProfileVector {
    pub fn dot(&self, other: &[f64]) -> f64 {
        self.coords.iter().zip(other).zip(&self.weights).map(|((a, b), w)| a * b * w).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(&self.coords).sqrt()
    }

    /// Weighted squared distance; both vectors must share a layout.
    pub fn dist_sq(&self, other: &ProfileVector) -> Result<f64> {
        if self.coords.len() != other.coords.len() {
            return Err(Error::ShapeMismatch("profile vectors have different dimensions".into()));
        }
        Ok(self
            .coords
            .iter()
            .zip(&other.coords)
            .zip(&self.weights)
            .map(|((a, b), w)| w * (a - b) * (a - b))
            .sum())
    }
}

/// How one side of the matrix is labelled.
#[derive(Debug, Clone, Copy)]
pub enum Assignment<'a> {
    /// Observed labels of the sampled rows or columns (empirical profile).
    Labels(&'a [usize]),
    /// A population co-cluster (population profile).
    Allocation(&'a AllocationMap),
}

fn layout(block_weights: &[f64], k: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(block_weights.len() * k + k);
    for _ in 0..k {
        w.extend_from_slice(block_weights);
    }
    w.extend(std::iter::repeat_n(1.0, k));
    w
}

/// `G_T`/`G_τ` (column side) or `F_S`/`F_σ` (row side).
pub fn profile_vector(
    g: &StepGraphon,
    sample: &BipartiteSample,
    assignment: Assignment<'_>,
    k: usize,
    side: Side,
) -> Result<ProfileVector> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let (m, n) = (sample.m(), sample.n());
    let v = g.values();
    let rows: Vec<usize> = sample.x.iter().map(|&x| g.row_cell(x)).collect();
    match side {
        Side::Column => {
            let mut coords = vec![0.0; m * k + k];
            let pi = match assignment {
                Assignment::Labels(t) => {
                    if t.len() != n {
                        return Err(Error::ShapeMismatch(format!("{} column labels for n={n}", t.len())));
                    }
                    check_labels(t, k)?;
                    for i in 0..m {
                        for (j, &tj) in t.iter().enumerate() {
                            coords[tj * m + i] += sample.w[(i, j)];
                        }
                    }
                    coords[..m * k].iter_mut().for_each(|c| *c /= n as f64);
                    proportions(t, k)
                }
                Assignment::Allocation(alloc) => {
                    if alloc.k() != k || alloc.n_cells() != g.n_col_cells() {
                        return Err(Error::ShapeMismatch("allocation does not match the column grid".into()));
                    }
                    for (i, &r) in rows.iter().enumerate() {
                        for t in 0..k {
                            coords[t * m + i] = (0..g.n_col_cells()).map(|b| v[(r, b)] * alloc.mass()[(b, t)]).sum();
                        }
                    }
                    alloc.proportions()
                }
            };
            coords[m * k..].copy_from_slice(&pi);
            Ok(ProfileVector {
                coords,
                weights: layout(&vec![1.0 / m as f64; m], k),
            })
        }
        Side::Row => {
            let cells = g.n_col_cells();
            let mut coords = vec![0.0; cells * k + k];
            let pi = match assignment {
                Assignment::Labels(s) => {
                    if s.len() != m {
                        return Err(Error::ShapeMismatch(format!("{} row labels for m={m}", s.len())));
                    }
                    check_labels(s, k)?;
                    for (i, &si) in s.iter().enumerate() {
                        for c in 0..cells {
                            coords[si * cells + c] += v[(rows[i], c)] / m as f64;
                        }
                    }
                    proportions(s, k)
                }
                Assignment::Allocation(alloc) => {
                    if alloc.k() != k || alloc.n_cells() != g.n_row_cells() {
                        return Err(Error::ShapeMismatch("allocation does not match the row grid".into()));
                    }
                    for s in 0..k {
                        for c in 0..cells {
                            coords[s * cells + c] = (0..g.n_row_cells()).map(|a| v[(a, c)] * alloc.mass()[(a, s)]).sum();
                        }
                    }
                    alloc.proportions()
                }
            };
            coords[cells * k..].copy_from_slice(&pi);
            Ok(ProfileVector {
                coords,
                weights: layout(&g.col_widths(), k),
            })
        }
    }
}

/// A support function `Γ(H) = sup_{P ∈ set} ⟨H, P⟩` on a weighted space.
pub trait SupportFunction {
    /// Inner-product weight of every coordinate.
    fn weights(&self) -> &[f64];
    fn eval(&self, h: &[f64]) -> Result<f64>;
    fn dim(&self) -> usize {
        self.weights().len()
    }
}

/// The set of all profile vectors of one side, as an average of per-atom maxima:
/// `Γ(H) = Σ_a atom_weight[a] · max_k [Σ_c w_c h_k(c) atom[a][c] + π_H(k)]`.
///
/// Atoms are the sampled columns (`𝒢_n`), column cells (`𝒢`), sampled rows
/// (`ℱ_m`) or row cells (`ℱ`).
#[derive(Debug, Clone)]
pub struct ProfileSet {
    atoms: DMatrix<f64>,
    atom_weights: Vec<f64>,
    coord_weights: Vec<f64>,
    weights: Vec<f64>,
    k: usize,
}

impl ProfileSet {
    fn build(atoms: DMatrix<f64>, atom_weights: Vec<f64>, coord_weights: Vec<f64>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        let weights = layout(&coord_weights, k);
        Ok(Self {
            atoms,
            atom_weights,
            coord_weights,
            weights,
            k,
        })
    }

    /// `𝒢_n`: all `G_T` over labellings of the sampled columns.
    pub fn column_empirical(sample: &BipartiteSample, k: usize) -> Result<Self> {
        let (m, n) = (sample.m(), sample.n());
        Self::build(sample.w.transpose(), vec![1.0 / n as f64; n], vec![1.0 / m as f64; m], k)
    }

    /// `𝒢`: all `G_τ` over measurable column labellings.
    pub fn column_population(g: &StepGraphon, x: &[f64], k: usize) -> Result<Self> {
        let m = x.len();
        let atoms = DMatrix::from_fn(g.n_col_cells(), m, |b, i| g.values()[(g.row_cell(x[i]), b)]);
        Self::build(atoms, g.col_widths(), vec![1.0 / m as f64; m], k)
    }

    /// `ℱ_m`: all `F_S` over labellings of the sampled rows.
    pub fn row_empirical(g: &StepGraphon, x: &[f64], k: usize) -> Result<Self> {
        let m = x.len();
        let atoms = DMatrix::from_fn(m, g.n_col_cells(), |i, c| g.values()[(g.row_cell(x[i]), c)]);
        Self::build(atoms, vec![1.0 / m as f64; m], g.col_widths(), k)
    }

    /// `ℱ`: all `F_σ` over measurable row labellings.
    pub fn row_population(g: &StepGraphon, k: usize) -> Result<Self> {
        Self::build(g.values().clone(), g.row_widths(), g.col_widths(), k)
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

impl SupportFunction for ProfileSet {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn eval(&self, h: &[f64]) -> Result<f64> {
        let p = self.coord_weights.len();
        if h.len() != p * self.k + self.k {
            return Err(Error::ShapeMismatch(format!(
                "direction has {} coordinates, expected {}",
                h.len(),
                p * self.k + self.k
            )));
        }
        // Weighted direction blocks as a p × K matrix so each atom costs one product.
        let hw = DMatrix::from_fn(p, self.k, |c, t| h[t * p + c] * self.coord_weights[c]);
        let scores = &self.atoms * hw;
        let pi_h = &h[p * self.k..];
        let mut total = 0.0;
        for (a, &w) in self.atom_weights.iter().enumerate() {
            let best = (0..self.k).map(|t| scores[(a, t)] + pi_h[t]).fold(f64::NEG_INFINITY, f64::max);
            total += w * best;
        }
        Ok(total)
    }
}

/// A support function given by a closure.
pub struct FnSupport<F> {
    weights: Vec<f64>,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnSupport<F> {
    pub fn new(weights: Vec<f64>, f: F) -> Self {
        Self { weights, f }
    }
}

impl<F: Fn(&[f64]) -> f64> SupportFunction for FnSupport<F> {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn eval(&self, h: &[f64]) -> Result<f64> {
        if h.len() != self.weights.len() {
            return Err(Error::ShapeMismatch("direction dimension mismatch".into()));
        }
        Ok((self.f)(h))
    }
}

/// Lower bound on the Hausdorff distance between the convex hulls described by
/// two support functions: the largest `|Γ₁(H) − Γ₂(H)|` over `n_directions`
/// random unit directions and every `±` coordinate axis.
pub fn hausdorff_estimate(
    gamma_1: &dyn SupportFunction,
    gamma_2: &dyn SupportFunction,
    n_directions: usize,
    seed: u64,
) -> Result<f64> {
    if n_directions == 0 {
        return Err(Error::InvalidArgument("at least one direction is required".into()));
    }
    let w = gamma_1.weights();
    if w != gamma_2.weights() {
        return Err(Error::ShapeMismatch("support functions live on different spaces".into()));
    }
    let dim = w.len();
    let mut best: f64 = 0.0;
    let mut h = vec![0.0; dim];
    for c in 0..dim {
        for sign in [1.0, -1.0] {
            h.iter_mut().for_each(|v| *v = 0.0);
            h[c] = sign / w[c].sqrt();
            best = best.max((gamma_1.eval(&h)? - gamma_2.eval(&h)?).abs());
        }
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..n_directions {
        for (v, wc) in h.iter_mut().zip(w) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z / wc.sqrt();
        }
        let norm = h.iter().zip(w).map(|(v, wc)| wc * v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        h.iter_mut().for_each(|v| *v /= norm);
        best = best.max((gamma_1.eval(&h)? - gamma_2.eval(&h)?).abs());
    }
    Ok(best)
}

/// A finite set of points of `𝒟 = {c ∈ [0,1)^d : ‖c‖ ≤ 1}` within `epsilon` of every point of `𝒟`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonCover {
    pub epsilon: f64,
    pub d: usize,
    pub points: Vec<Vec<f64>>,
}

/// Grid cover with spacing `ε/√d`. Cells meeting `𝒟` contribute their
/// centre, clipped below 1 and scaled onto the unit ball if outside it.
/// Uses at most `ceil(√d/ε)^d` points. For `d = 0` the cover is the single
/// empty vector.
pub fn epsilon_cover(d: usize, epsilon: f64) -> Result<EpsilonCover> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if d == 0 {
        return Ok(EpsilonCover {
            epsilon,
            d,
            points: vec![Vec::new()],
        });
    }
    let delta = epsilon / (d as f64).sqrt();
    let per_axis = (1.0 / delta).ceil() as usize;
    let total = per_axis.checked_pow(d as u32).filter(|&t| t <= 10_000_000).ok_or_else(|| {
        Error::InvalidArgument(format!("cover with d={d}, epsilon={epsilon} is too large"))
    })?;
    let mut points = Vec::new();
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let lower: f64 = idx.iter().map(|&i| (i as f64 * delta).powi(2)).sum();
        if lower <= 1.0 {
            let mut c: Vec<f64> = idx.iter().map(|&i| (i as f64 + 0.5) * delta).collect();
            project_to_cap(&mut c);
            points.push(c);
        }
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < per_axis {
                break;
            }
            *slot = 0;
        }
    }
    Ok(EpsilonCover { epsilon, d, points })
}

impl EpsilonCover {
    /// Index of the nearest cover point, lowest index on ties.
    pub fn nearest(&self, v: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d2: f64 = p.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best.0
    }
}

/// Nearest cover index of every latent vector.
pub fn cover_indices(latents: &GeneralLatent, cover: &EpsilonCover) -> Result<Vec<usize>> {
    if latents.d() != cover.d {
        return Err(Error::ShapeMismatch(format!(
            "latents have d={} but the cover has d={}",
            latents.d(),
            cover.d
        )));
    }
    Ok((0..latents.len()).map(|i| cover.nearest(latents.vector(i))).collect())
}

/// Replace every vector by its nearest cover point; labels are kept.
pub fn quantize_latents(latents: &GeneralLatent, cover: &EpsilonCover) -> Result<GeneralLatent> {
    let idx = cover_indices(latents, cover)?;
    let vectors = idx.iter().flat_map(|&c| cover.points[c].iter().copied()).collect();
    GeneralLatent::new(latents.labels().to_vec(), vectors, latents.k(), latents.d())
}

/// Either sampled latents (each of weight `1/len`) or a population map.
#[derive(Debug, Clone, Copy)]
pub enum LatentSource<'a> {
    Sample(&'a GeneralLatent),
    Map(&'a PopulationLatentMap),
}

impl LatentSource<'_> {
    fn shape(&self) -> (usize, usize) {
        match self {
            Self::Sample(l) => (l.k(), l.d()),
            Self::Map(m) => (m.k(), m.d()),
        }
    }

    fn atoms(&self) -> Vec<(f64, usize, &[f64])> {
        match self {
            Self::Sample(l) => {
                let w = 1.0 / l.len().max(1) as f64;
                (0..l.len()).map(|i| (w, l.labels()[i], l.vector(i))).collect()
            }
            Self::Map(m) => m
                .pieces()
                .iter()
                .flatten()
                .filter(|p| p.length > 0.0)
                .map(|p| (p.length, p.label, p.vector.as_slice()))
                .collect(),
        }
    }
}

/// `Ψ(k, c)` at every label and grid midpoint, label-major, grid row-major.
fn psi_grid(src: LatentSource<'_>, k: usize, d: usize, res: usize) -> Vec<f64> {
    let cells = res.pow(d as u32);
    let mut hist = vec![0.0; k * cells];
    for (w, label, v) in src.atoms() {
        // Smallest midpoint index g with v ≤ (g + 0.5)/res, per coordinate.
        let mut flat = 0;
        let mut inside = true;
        for &c in v {
            let g = ((c * res as f64 - 0.5).ceil()).max(0.0) as usize;
            if g >= res {
                inside = false;
                break;
            }
            flat = flat * res + g;
        }
        if inside {
            hist[label * cells + flat] += w;
        }
    }
    // Prefix sums along every grid axis, then along labels.
    let mut stride = 1;
    for _ in 0..d {
        for label in 0..k {
            let block = &mut hist[label * cells..(label + 1) * cells];
            for idx in 0..cells {
                if (idx / stride) % res != 0 {
                    block[idx] += block[idx - stride];
                }
            }
        }
        stride *= res;
    }
    for label in 1..k {
        for idx in 0..cells {
            hist[label * cells + idx] += hist[(label - 1) * cells + idx];
        }
    }
    hist
}

/// `‖Ψ₁ − Ψ₂‖²` with counting measure on labels and midpoint quadrature of
/// the given resolution on `[0,1)^d`. For `d = 0` it is the squared distance
/// between the label CDFs.
pub fn psi_cdf_distance(a: LatentSource<'_>, b: LatentSource<'_>, grid_resolution: usize) -> Result<f64> {
    let (k, d) = a.shape();
    if b.shape() != (k, d) {
        return Err(Error::ShapeMismatch(format!("latents have shapes {:?} and {:?}", (k, d), b.shape())));
    }
    if d > 3 {
        return Err(Error::InvalidArgument(format!("CDF distance supports d ≤ 3, got {d}")));
    }
    if grid_resolution < 8 {
        return Err(Error::InvalidArgument(format!("grid resolution {grid_resolution} is below 8")));
    }
    let pa = psi_grid(a, k, d, grid_resolution);
    let pb = psi_grid(b, k, d, grid_resolution);
    let cell = 1.0 / (grid_resolution as f64).powi(d as i32);
    Ok(pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * cell)
}
