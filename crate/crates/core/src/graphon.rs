//! Step graphons and bipartite sampling.

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::textfmt;

/// A kernel on `[0,1]²` that is constant on the rectangles of a grid.
///
/// Cells are half-open, `[row_breaks[a], row_breaks[a+1]) × [col_breaks[b], col_breaks[b+1])`,
/// except that the coordinate value `1` belongs to the last cell of its axis.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGraphon {
    row_breaks: Vec<f64>,
    col_breaks: Vec<f64>,
    values: DMatrix<f64>,
}

fn check_breaks(name: &str, breaks: &[f64]) -> Result<()> {
    if breaks.len() < 2 {
        return Err(Error::InvalidGraphon(format!(
            "{name} needs at least two entries, got {}",
            breaks.len()
        )));
    }
    if breaks[0] != 0.0 || *breaks.last().unwrap() != 1.0 {
        return Err(Error::InvalidGraphon(format!(
            "{name} must start at 0 and end at 1, got {} .. {}",
            breaks[0],
            breaks.last().unwrap()
        )));
    }
    if let Some(w) = breaks.windows(2).find(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidGraphon(format!(
            "{name} must be strictly increasing, found {} followed by {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

fn cell_of(breaks: &[f64], v: f64) -> usize {
    let last = breaks.len() - 2;
    breaks.partition_point(|&b| b <= v).saturating_sub(1).min(last)
}

fn widths(breaks: &[f64]) -> Vec<f64> {
    breaks.windows(2).map(|w| w[1] - w[0]).collect()
}

fn check_unit(what: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::OutOfRange { what, value: v })
    }
}

impl StepGraphon {
    pub fn new(row_breaks: Vec<f64>, col_breaks: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        check_breaks("row_breaks", &row_breaks)?;
        check_breaks("col_breaks", &col_breaks)?;
        let shape = (row_breaks.len() - 1, col_breaks.len() - 1);
        if values.shape() != shape {
            return Err(Error::InvalidGraphon(format!(
                "values are {}x{} but the break lists define {}x{} cells",
                values.nrows(),
                values.ncols(),
                shape.0,
                shape.1
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidGraphon(format!(
                "value {v} is not a probability in [0, 1]"
            )));
        }
        Ok(Self {
            row_breaks,
            col_breaks,
            values,
        })
    }

    /// `ω ≡ p`.
    pub fn constant(p: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![0.0, 1.0], DMatrix::from_element(1, 1, p))
    }

    /// A blockmodel graphon whose blocks have the given proportions.
    pub fn blockmodel(row_props: &[f64], col_props: &[f64], theta: DMatrix<f64>) -> Result<Self> {
        let to_breaks = |props: &[f64]| -> Vec<f64> {
            let mut b = Vec::with_capacity(props.len() + 1);
            let mut acc = 0.0;
            b.push(0.0);
            for p in &props[..props.len().saturating_sub(1)] {
                acc += p;
                b.push(acc);
            }
            b.push(1.0);
            b
        };
        Self::new(to_breaks(row_props), to_breaks(col_props), theta)
    }

    /// The unequal-width 4×4 graphon used by the default experiments.
    pub fn four_block() -> Self {
        #[rustfmt::skip]
        let values = DMatrix::from_row_slice(4, 4, &[
            0.85, 0.20, 0.55, 0.10,
            0.15, 0.70, 0.25, 0.60,
            0.50, 0.30, 0.90, 0.35,
            0.05, 0.65, 0.40, 0.80,
        ]);
        Self::new(
            vec![0.0, 0.15, 0.45, 0.7, 1.0],
            vec![0.0, 0.3, 0.5, 0.8, 1.0],
            values,
        )
        .expect("four-block graphon is valid")
    }

    pub fn row_breaks(&self) -> &[f64] {
        &self.row_breaks
    }

    pub fn col_breaks(&self) -> &[f64] {
        &self.col_breaks
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_row_cells(&self) -> usize {
        self.row_breaks.len() - 1
    }

    pub fn n_col_cells(&self) -> usize {
        self.col_breaks.len() - 1
    }

    pub fn row_widths(&self) -> Vec<f64> {
        widths(&self.row_breaks)
    }

    pub fn col_widths(&self) -> Vec<f64> {
        widths(&self.col_breaks)
    }

    /// Index of the row cell containing `x`. Assumes `x ∈ [0,1]`.
    pub fn row_cell(&self, x: f64) -> usize {
        cell_of(&self.row_breaks, x)
    }

    pub fn col_cell(&self, y: f64) -> usize {
        cell_of(&self.col_breaks, y)
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        check_unit("x", x)?;
        check_unit("y", y)?;
        Ok(self.values[(self.row_cell(x), self.col_cell(y))])
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        textfmt::write_section(&mut out, "row_breaks", [self.row_breaks.clone()]);
        textfmt::write_section(&mut out, "col_breaks", [self.col_breaks.clone()]);
        textfmt::write_section(
            &mut out,
            "values",
            self.values
                .row_iter()
                .map(|r| r.iter().copied().collect::<Vec<_>>()),
        );
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let sections = textfmt::parse_sections(text)?;
        let row_breaks = textfmt::flat(textfmt::take(&sections, "row_breaks")?);
        let col_breaks = textfmt::flat(textfmt::take(&sections, "col_breaks")?);
        let rows = &textfmt::take(&sections, "values")?.rows;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidGraphon("ragged values section".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(
            row_breaks,
            col_breaks,
            DMatrix::from_row_slice(rows.len(), ncols, &flat),
        )
    }
}

/// One draw from the bipartite graphon model.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteSample {
    /// Row latent coordinates, in sampling order.
    pub x: Vec<f64>,
    /// Column latent coordinates, in sampling order.
    pub y: Vec<f64>,
    /// Conditional mean `W[i][j] = ω(x_i, y_j)`.
    pub w: DMatrix<f64>,
    /// Binary adjacency, stored as 0.0 / 1.0.
    pub a: DMatrix<f64>,
    pub seed: u64,
}

impl BipartiteSample {
    pub fn m(&self) -> usize {
        self.x.len()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// `W[i][j] = ω(x[i], y[j])`.
pub fn conditional_mean_matrix(g: &StepGraphon, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
    for &v in x {
        check_unit("x", v)?;
    }
    for &v in y {
        check_unit("y", v)?;
    }
    let rc: Vec<usize> = x.iter().map(|&v| g.row_cell(v)).collect();
    let cc: Vec<usize> = y.iter().map(|&v| g.col_cell(v)).collect();
    Ok(DMatrix::from_fn(x.len(), y.len(), |i, j| {
        g.values[(rc[i], cc[j])]
    }))
}

/// Sample `m` rows and `n` columns.
///
/// Draw order from the seeded stream is fixed: all `x`, then all `y`, then the
/// Bernoulli uniforms for `A` in row-major order. `A[i][j] = 1` iff `u < W[i][j]`.
pub fn sample_bipartite(g: &StepGraphon, m: usize, n: usize, seed: u64) -> Result<BipartiteSample> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "sample dimensions must be positive, got m={m} n={n}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let x: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let w = conditional_mean_matrix(g, &x, &y)?;
    let mut a = DMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            if rng.random::<f64>() < w[(i, j)] {
                a[(i, j)] = 1.0;
            }
        }
    }
    Ok(BipartiteSample { x, y, w, a, seed })
}
