//! Empirical block quantities and the squared-error risk of the latent-variable models.
//!
//! Labels are 0-based throughout (`0..k`).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Row labels `S` and column labels `T` over `k` clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoClusterLabels {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub k: usize,
}

pub(crate) fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    match labels.iter().enumerate().find(|(_, &l)| l >= k) {
        Some((index, &label)) => Err(Error::InvalidLabel { index, label, k }),
        None => Ok(()),
    }
}

impl CoClusterLabels {
    pub fn new(rows: Vec<usize>, cols: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        check_labels(&rows, k)?;
        check_labels(&cols, k)?;
        Ok(Self { rows, cols, k })
    }
}

/// Label proportions `π(s) = #{i : labels[i] = s} / len`.
pub fn proportions(labels: &[usize], k: usize) -> Vec<f64> {
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let len = labels.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / len).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSummary {
    /// `phi[s][t] = (1/mn) Σ_ij M_ij 1{S_i = s, T_j = t}`.
    pub phi: DMatrix<f64>,
    pub pi_row: Vec<f64>,
    pub pi_col: Vec<f64>,
    /// Within-block means; 0 for blocks with an empty row or column cluster.
    pub theta_hat: DMatrix<f64>,
}

/// Per-block sums `Σ_ij M_ij 1{S_i=s, T_j=t}` without normalisation.
pub(crate) fn block_sums(m: &DMatrix<f64>, rows: &[usize], cols: &[usize], k: usize) -> DMatrix<f64> {
    let mut sums = DMatrix::zeros(k, k);
    let mut row_acc = vec![0.0; k];
    for (i, &s) in rows.iter().enumerate() {
        row_acc.iter_mut().for_each(|v| *v = 0.0);
        for (j, &t) in cols.iter().enumerate() {
            row_acc[t] += m[(i, j)];
        }
        for t in 0..k {
            sums[(s, t)] += row_acc[t];
        }
    }
    sums
}

pub fn block_summary(m: &DMatrix<f64>, labels: &CoClusterLabels) -> Result<BlockSummary> {
    if m.nrows() != labels.rows.len() || m.ncols() != labels.cols.len() {
        return Err(Error::ShapeMismatch(format!(
            "matrix is {}x{} but labels cover {}x{}",
            m.nrows(),
            m.ncols(),
            labels.rows.len(),
            labels.cols.len()
        )));
    }
    if let Some(v) = m.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite matrix entry {v}")));
    }
    check_labels(&labels.rows, labels.k)?;
    check_labels(&labels.cols, labels.k)?;
    let k = labels.k;
    let (nr, nc) = m.shape();
    let sums = block_sums(m, &labels.rows, &labels.cols, k);
    let pi_row = proportions(&labels.rows, k);
    let pi_col = proportions(&labels.cols, k);
    let total = (nr * nc).max(1) as f64;
    let phi = sums.map(|v| v / total);
    let row_counts: Vec<f64> = pi_row.iter().map(|p| (p * nr as f64).round()).collect();
    let col_counts: Vec<f64> = pi_col.iter().map(|p| (p * nc as f64).round()).collect();
    let theta_hat = DMatrix::from_fn(k, k, |s, t| {
        let size = row_counts[s] * col_counts[t];
        if size > 0.0 {
            sums[(s, t)] / size
        } else {
            0.0
        }
    });
    Ok(BlockSummary {
        phi,
        pi_row,
        pi_col,
        theta_hat,
    })
}

/// The model families of the latent-variable risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    /// `ω_θ(s,t) = θ_st`.
    Blockmodel,
    /// `ω_θ((u,b),(v,d)) = b·d·θ_uv` with scalar degrees.
    DegreeCorrected,
    /// `ω(b, d) = bᵀd`.
    DotProduct,
    /// `ω_θ((u,b),(v,d)) = bᵀd·θ_uv`.
    DotProductBlock,
}

impl ModelFamily {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Self::Blockmodel),
            2 => Ok(Self::DegreeCorrected),
            3 => Ok(Self::DotProduct),
            4 => Ok(Self::DotProductBlock),
            _ => Err(Error::InvalidArgument(format!("unknown model family {id}"))),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Self::Blockmodel => 1,
            Self::DegreeCorrected => 2,
            Self::DotProduct => 3,
            Self::DotProductBlock => 4,
        }
    }

    pub fn uses_labels(self) -> bool {
        !matches!(self, Self::DotProduct)
    }

    pub fn uses_vectors(self) -> bool {
        !matches!(self, Self::Blockmodel)
    }

    /// Check that latent dimension `d` is admissible.
    pub fn check_dim(self, d: usize) -> Result<()> {
        let ok = match self {
            Self::Blockmodel => true,
            Self::DegreeCorrected => d == 1,
            Self::DotProduct | Self::DotProductBlock => d >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "family {} does not admit latent dimension {d}",
                self.id()
            )))
        }
    }
}

/// A `K × K` matrix of probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta(DMatrix<f64>);

impl Theta {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "theta must be a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if let Some(&v) = m.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange { what: "theta", value: v });
        }
        Ok(Self(m))
    }

    /// `θ_uv`.
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.0[(u, v)]
    }

    pub fn k(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Whether `c` lies in `{c ∈ [0,1)^d : ‖c‖ ≤ 1}`.
pub fn in_unit_cap(c: &[f64]) -> bool {
    c.iter().all(|&v| (0.0..1.0).contains(&v)) && c.iter().map(|v| v * v).sum::<f64>() <= 1.0
}

/// Project onto `𝒟`: clip negatives to 0, clip coordinates to `1 − 1e-9`,
/// then rescale to unit norm if needed.
pub fn project_to_cap(v: &mut [f64]) {
    for c in v.iter_mut() {
        *c = c.clamp(0.0, 1.0 - 1e-9);
    }
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm > 1.0 {
        v.iter_mut().for_each(|c| *c /= norm);
        while v.iter().map(|c| c * c).sum::<f64>() > 1.0 {
            v.iter_mut().for_each(|c| *c *= 1.0 - f64::EPSILON);
        }
    }
}

fn cap_violation(c: &[f64]) -> Option<String> {
    if let Some(v) = c.iter().find(|v| !(0.0..1.0).contains(*v)) {
        return Some(format!("coordinate {v} is not in [0, 1)"));
    }
    let n2: f64 = c.iter().map(|v| v * v).sum();
    (n2 > 1.0).then(|| format!("norm {} exceeds 1", n2.sqrt()))
}

/// Latent assignments `(labels, vectors)` for one side of the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralLatent {
    labels: Vec<usize>,
    vectors: Vec<f64>,
    k: usize,
    d: usize,
}

/// One element `(u, b)` of the latent space.
#[derive(Debug, Clone, Copy)]
pub struct LatentRef<'a> {
    pub label: usize,
    pub vector: &'a [f64],
}

impl<'a> LatentRef<'a> {
    pub fn new(label: usize, vector: &'a [f64]) -> Self {
        Self { label, vector }
    }
}

impl GeneralLatent {
    /// `vectors` is row-major, `labels.len() × d`.
    pub fn new(labels: Vec<usize>, vectors: Vec<f64>, k: usize, d: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        check_labels(&labels, k)?;
        if vectors.len() != labels.len() * d {
            return Err(Error::ShapeMismatch(format!(
                "{} labels with d={d} need {} vector entries, got {}",
                labels.len(),
                labels.len() * d,
                vectors.len()
            )));
        }
        if d > 0 {
            for (index, c) in vectors.chunks(d).enumerate() {
                if let Some(reason) = cap_violation(c) {
                    return Err(Error::InvalidLatent { index, reason });
                }
            }
        }
        Ok(Self {
            labels,
            vectors,
            k,
            d,
        })
    }

    pub fn labels_only(labels: Vec<usize>, k: usize) -> Result<Self> {
        Self::new(labels, Vec::new(), k, 0)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.d..(i + 1) * self.d]
    }

    pub fn get(&self, i: usize) -> LatentRef<'_> {
        LatentRef {
            label: self.labels[i],
            vector: self.vector(i),
        }
    }

    pub fn max_norm(&self) -> f64 {
        if self.d == 0 {
            return 0.0;
        }
        self.vectors
            .chunks(self.d)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Kernel value with no validation. Callers must have checked the inputs.
#[inline]
pub(crate) fn kernel_unchecked(s: LatentRef<'_>, t: LatentRef<'_>, theta: &Theta, family: ModelFamily) -> f64 {
    match family {
        ModelFamily::Blockmodel => theta.get(s.label, t.label),
        ModelFamily::DegreeCorrected => s.vector[0] * t.vector[0] * theta.get(s.label, t.label),
        ModelFamily::DotProduct => dot(s.vector, t.vector),
        ModelFamily::DotProductBlock => dot(s.vector, t.vector) * theta.get(s.label, t.label),
    }
}

fn check_ref(side: usize, r: LatentRef<'_>, theta: &Theta, family: ModelFamily) -> Result<()> {
    if family.uses_labels() && r.label >= theta.k() {
        return Err(Error::InvalidLabel {
            index: side,
            label: r.label,
            k: theta.k(),
        });
    }
    if family.uses_vectors() {
        family.check_dim(r.vector.len())?;
        if let Some(reason) = cap_violation(r.vector) {
            return Err(Error::InvalidLatent { index: side, reason });
        }
    }
    Ok(())
}

/// `ω_θ(s, t)` for the given model family.
pub fn model_kernel(s: LatentRef<'_>, t: LatentRef<'_>, theta: &Theta, family: ModelFamily) -> Result<f64> {
    check_ref(0, s, theta, family)?;
    check_ref(1, t, theta, family)?;
    if family.uses_vectors() && s.vector.len() != t.vector.len() {
        return Err(Error::ShapeMismatch(format!(
            "row vector has d={} but column vector has d={}",
            s.vector.len(),
            t.vector.len()
        )));
    }
    Ok(kernel_unchecked(s, t, theta, family))
}

/// Validate a pair of latents against `theta` and `family`.
pub(crate) fn check_latents(s: &GeneralLatent, t: &GeneralLatent, theta: &Theta, family: ModelFamily) -> Result<()> {
    if family.uses_vectors() {
        family.check_dim(s.d())?;
        if s.d() != t.d() {
            return Err(Error::ShapeMismatch(format!(
                "row latents have d={} but column latents have d={}",
                s.d(),
                t.d()
            )));
        }
    }
    if family.uses_labels() && (s.k() > theta.k() || t.k() > theta.k()) {
        return Err(Error::ShapeMismatch(format!(
            "latents use K={}/{} labels but theta is {}x{}",
            s.k(),
            t.k(),
            theta.k(),
            theta.k()
        )));
    }
    Ok(())
}

/// `R_A = (1/mn) Σ_ij (A_ij − ω_θ(S_i, T_j))²`.
pub fn empirical_risk(
    a: &DMatrix<f64>,
    s: &GeneralLatent,
    t: &GeneralLatent,
    theta: &Theta,
    family: ModelFamily,
) -> Result<f64> {
    if a.nrows() != s.len() || a.ncols() != t.len() {
        return Err(Error::ShapeMismatch(format!(
            "matrix is {}x{} but latents cover {}x{}",
            a.nrows(),
            a.ncols(),
            s.len(),
            t.len()
        )));
    }
    check_latents(s, t, theta, family)?;
    let mut total = 0.0;
    for i in 0..s.len() {
        let si = s.get(i);
        let mut row = 0.0;
        for j in 0..t.len() {
            let r = a[(i, j)] - kernel_unchecked(si, t.get(j), theta, family);
            row += r * r;
        }
        total += row;
    }
    Ok(total / (s.len() * t.len()).max(1) as f64)
}
